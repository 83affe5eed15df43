import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netdisturb.errors import FormatError
from netdisturb.graph import (
    Network,
    WeightMatrix,
    gnp,
    read_edge_list,
    row_normalized_weights,
    special_graph,
    spectral_radius,
    two_block_mixture,
    weight_matrix,
    write_edge_list,
)

from conftest import path_graph


class TestNetwork:
    def test_rejects_asymmetric(self):
        a = np.zeros((3, 3), dtype=int)
        a[0, 1] = 1
        with pytest.raises(ValueError, match="symmetric"):
            Network(a)

    def test_rejects_self_loop(self):
        with pytest.raises(ValueError, match="diagonal"):
            Network(np.eye(3, dtype=int))

    def test_rejects_weighted_entries(self):
        a = np.array([[0, 2], [2, 0]])
        with pytest.raises(ValueError, match="0 or 1"):
            Network(a)

    def test_blocks_length(self):
        with pytest.raises(ValueError, match="length n"):
            Network(np.zeros((3, 3), dtype=int), blocks=[0, 1])

    def test_immutable(self):
        g = special_graph("star", 4)
        with pytest.raises(ValueError):
            g.adjacency[0, 1] = 0

    def test_edges_lexicographic(self):
        g = Network.from_edges(4, [(2, 3), (0, 2), (0, 1)])
        assert g.edges() == [(0, 1), (0, 2), (2, 3)]
        assert g.n_edges == 3


class TestGenerators:
    def test_gnp_p0_empty(self):
        assert gnp(4, 0.0, 1).n_edges == 0

    def test_gnp_p1_complete(self):
        assert gnp(4, 1.0, 1).n_edges == 6

    @pytest.mark.parametrize("seed", [0, 1, 2, 99, 2**63 + 5])
    def test_gnp_edge_count_binomial(self, seed):
        n, p = 100, 0.0975
        pairs = n * (n - 1) // 2
        mean, sd = pairs * p, np.sqrt(pairs * p * (1 - p))
        assert abs(gnp(n, p, seed).n_edges - mean) <= 4 * sd

    def test_gnp_deterministic(self):
        a = gnp(60, 0.2, 7).adjacency
        b = gnp(60, 0.2, 7).adjacency
        assert np.array_equal(a, b)
        assert not np.array_equal(a, gnp(60, 0.2, 8).adjacency)

    def test_gnp_bad_p(self):
        with pytest.raises(ValueError):
            gnp(5, 1.5, 0)

    def test_mixture_probabilities(self):
        g = two_block_mixture(50, 0.05, 3)
        assert g.n == 100
        assert list(np.unique(g.blocks)) == [0, 1]
        assert np.all(g.blocks[:50] == 0) and np.all(g.blocks[50:] == 1)

    def test_mixture_empty(self):
        assert two_block_mixture(2, 0.0, 1).n_edges == 0

    def test_mixture_edge_count(self):
        # E = 2 * C(25, 2) * 2p(1-p) + 25^2 p = 317 at p = 0.2
        counts = [two_block_mixture(25, 0.2, s).n_edges for s in range(200)]
        within = 2 * 300 * 0.32 * 0.68
        between = 625 * 0.2 * 0.8
        se = np.sqrt((within + between) / 200)
        assert abs(np.mean(counts) - 317) <= 4 * se

    def test_mixture_within_between_rates(self):
        within, between = [], []
        for s in range(20):
            g = two_block_mixture(50, 0.05, s)
            a = g.adjacency
            within.append(a[:50, :50].sum() / 2 + a[50:, 50:].sum() / 2)
            between.append(a[:50, 50:].sum())
        assert np.mean(within) / (2 * 1225) == pytest.approx(0.095, abs=0.01)
        assert np.mean(between) / 2500 == pytest.approx(0.05, abs=0.01)

    def test_star(self):
        g = special_graph("star", 5)
        assert list(g.degrees) == [4, 1, 1, 1, 1]
        assert g.edges() == [(0, j) for j in range(1, 5)]

    def test_complete(self):
        assert special_graph("complete", 3).n_edges == 3

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            special_graph("wheel", 5)


class TestWeights:
    def test_complete_half(self):
        w = row_normalized_weights(special_graph("complete", 3)).w
        assert np.allclose(w, (np.ones((3, 3)) - np.eye(3)) / 2)

    def test_star_rows(self):
        w = row_normalized_weights(special_graph("star", 5)).w
        assert np.allclose(w[0, 1:], 0.25)
        assert np.allclose(w[1:, 0], 1.0)
        assert np.allclose(w[1:, 1:], 0.0)

    def test_isolated_vertex_zero_row(self):
        g = Network.from_edges(4, [(0, 1), (1, 2)])
        wm = row_normalized_weights(g)
        assert np.all(wm.w[3] == 0)
        assert wm.row_stochastic

    def test_validation(self):
        with pytest.raises(ValueError, match="nonnegative"):
            weight_matrix([[0, -1], [1, 0]])
        with pytest.raises(ValueError, match="diagonal"):
            weight_matrix([[1, 0], [0, 0]])

    def test_row_stochastic_detection(self):
        assert weight_matrix([[0, 1], [1, 0]]).row_stochastic
        assert not weight_matrix([[0, 2], [1, 0]]).row_stochastic

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 30), st.floats(0, 1), st.integers(0, 2**32))
    def test_row_sums_and_radius(self, n, p, seed):
        wm = row_normalized_weights(gnp(n, p, seed))
        s = wm.w.sum(axis=1)
        assert np.all((np.abs(s - 1) <= 1e-12) | (np.abs(s) <= 1e-12))
        assert wm.spectral_radius <= 1 + 1e-9
        if np.all(s > 0.5):
            assert wm.spectral_radius == pytest.approx(1.0, abs=1e-9)


class TestSpectralRadius:
    def test_zero(self):
        assert spectral_radius(np.zeros((4, 4))) == 0.0

    def test_complete_second_eigenvalue(self):
        n = 8
        w = row_normalized_weights(special_graph("complete", n)).w
        ev = np.sort(np.abs(np.linalg.eigvals(w)))
        assert spectral_radius(w) == pytest.approx(1.0, rel=1e-12)
        assert ev[-2] == pytest.approx(1 / (n - 1), rel=1e-9)

    @pytest.mark.parametrize("seed", range(4))
    def test_power_iteration_matches_eigen(self, seed):
        rng = np.random.default_rng(seed)
        w = rng.random((40, 40)) * (rng.random((40, 40)) < 0.2)
        np.fill_diagonal(w, 0)
        exact = np.max(np.abs(np.linalg.eigvals(w)))
        assert spectral_radius(w, size_limit=10) == pytest.approx(exact, rel=1e-8)

    def test_power_iteration_bipartite_isolated(self):
        # periodic pattern plus an isolated vertex
        g = Network.from_edges(7, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)])
        w = row_normalized_weights(g).w
        assert spectral_radius(w, size_limit=2) == pytest.approx(1.0, rel=1e-8)

    def test_path_graph(self):
        n = 10
        a = path_graph(n).adjacency.astype(float)
        assert spectral_radius(a) == pytest.approx(2 * np.cos(np.pi / (n + 1)), rel=1e-12)


class TestEdgeList:
    def test_round_trip(self, tmp_path):
        g = two_block_mixture(6, 0.4, 11)
        p = tmp_path / "g.txt"
        write_edge_list(g, p)
        h = read_edge_list(p)
        assert np.array_equal(g.adjacency, h.adjacency)
        assert np.array_equal(g.blocks, h.blocks)

    def test_isolated_via_header(self, tmp_path):
        p = tmp_path / "g.txt"
        p.write_text("# comment\nn 5\n0 1\n\n1 2\n")
        g = read_edge_list(p)
        assert g.n == 5 and g.n_edges == 2

    def test_bad_line_names_file_and_line(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("0 1\n1 x\n")
        with pytest.raises(FormatError, match=r"bad\.txt:2: expected"):
            read_edge_list(p)

    def test_self_loop_line(self, tmp_path):
        p = tmp_path / "loop.txt"
        p.write_text("0 1\n2 2\n")
        with pytest.raises(FormatError, match=":2:"):
            read_edge_list(p)

    def test_vertex_beyond_header(self, tmp_path):
        p = tmp_path / "g.txt"
        p.write_text("n 2\n0 3\n")
        with pytest.raises(FormatError):
            read_edge_list(p)
