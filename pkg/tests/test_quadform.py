import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netdisturb.graph import gnp, row_normalized_weights, special_graph, two_block_mixture, weight_matrix
from netdisturb.model import DisturbanceModel, fit_at_rho, projection_h, simulate
from netdisturb.quadform import (
    estimating_fn,
    fit_quadform,
    permutation_refit,
    permutation_spread,
    qf_scale,
    resolve_c,
    t_stat,
)

from conftest import random_model


def dense_u(model, c, rho, y):
    """U^C for a matrix of responses (one per column), straight from definitions."""
    n = model.n
    k = np.eye(n) - rho * model.w.w
    h = projection_h(model.w, rho, model.x)
    nu = (np.eye(n) - h) @ k @ y
    return np.sum(nu * (c @ nu), axis=0) + np.sum(nu * nu, axis=0) / n * np.trace(h @ c)


def bisect(f, a, b, tol=1e-12):
    fa = f(a)
    while b - a > tol:
        mid = 0.5 * (a + b)
        fm = f(mid)
        if np.sign(fm) == np.sign(fa):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


class TestC:
    def test_presets(self):
        w = row_normalized_weights(gnp(10, 0.4, 1))
        assert resolve_c(w, "w")[0] == "weights"
        kind, c = resolve_c(w, "a")
        assert kind == "adjacency" and np.array_equal(c, w.adjacency)

    def test_custom_validation(self):
        w = row_normalized_weights(gnp(4, 0.4, 1))
        with pytest.raises(ValueError, match="diagonal"):
            resolve_c(w, np.eye(4))
        with pytest.raises(ValueError, match="nonnegative"):
            resolve_c(w, -np.ones((4, 4)) + np.eye(4))
        with pytest.raises(ValueError):
            resolve_c(w, "z")

    def test_adjacency_needs_network(self):
        w = weight_matrix(np.array([[0, 1.0], [1.0, 0]]))
        with pytest.raises(ValueError):
            resolve_c(w, "a")


class TestStatistic:
    def test_exact_fit_zero(self, rng):
        model = random_model(12, 2, rng)
        assert t_stat(model, model.x @ [1.0, 3.0], 0.0) == pytest.approx(0.0, abs=1e-24)

    def test_double_sum(self, rng):
        model = random_model(5, 1, rng, p=0.7)
        y = rng.standard_normal(5)
        nu = fit_at_rho(model, y, 0.3).nu_residuals
        c = model.w.w
        expect = sum(nu[i] * c[i, j] * nu[j] for i in range(5) for j in range(5))
        assert t_stat(model, y, 0.3) == pytest.approx(expect, rel=1e-12)

    def test_estimating_fn_assembled(self, rng):
        model = random_model(5, 1, rng, p=0.7)
        y = rng.standard_normal(5)
        f = fit_at_rho(model, y, -0.4)
        h = projection_h(model.w, -0.4, model.x)
        expect = t_stat(model, y, -0.4, "a") + f.sigma2_hat * np.trace(h @ model.w.adjacency)
        assert estimating_fn(model, y, -0.4, "a") == pytest.approx(expect, rel=1e-12)

    def test_m0_reduces(self, rng):
        w = row_normalized_weights(gnp(10, 0.4, 2))
        model = DisturbanceModel(np.zeros((10, 0)), w)
        y = rng.standard_normal(10)
        assert estimating_fn(model, y, 0.2) == pytest.approx(t_stat(model, y, 0.2), rel=1e-14)

    def test_unbiased_at_truth(self):
        rng = np.random.default_rng(31)
        model = random_model(20, 2, rng)
        rho0, reps = 0.3, 10_000
        c = model.w.w
        y = model.x @ np.array([1.0, 0.5])[:, None] + np.linalg.solve(
            np.eye(20) - rho0 * c, rng.standard_normal((20, reps))
        )
        n = 20
        k = np.eye(n) - rho0 * c
        h = projection_h(model.w, rho0, model.x)
        nu = (np.eye(n) - h) @ k @ y
        t = np.sum(nu * (c @ nu), axis=0)
        assert abs(t.mean() + np.trace(h @ c)) <= 4 * t.std(ddof=1) / np.sqrt(reps)
        u = dense_u(model, c, rho0, y)
        assert abs(u.mean()) <= 4 * u.std(ddof=1) / np.sqrt(reps)
        # the library evaluates the same function
        assert estimating_fn(model, y[:, 0], rho0) == pytest.approx(u[0], rel=1e-10)


class TestFit:
    @pytest.mark.parametrize("n", [10, 50, 100])
    def test_complete_no_root(self, n):
        w = row_normalized_weights(special_graph("complete", n))
        r = fit_quadform(DisturbanceModel.intercept_only(w), np.random.default_rng(n).standard_normal(n))
        assert r.status == "no_root"
        assert np.isnan(r.rho_hat) and r.fit is None

    def test_converged_tolerance(self, rng):
        model = random_model(40, 3, rng)
        y = simulate(model, [1, 0.5, 0.4], 1.0, 0.2, rng)
        r = fit_quadform(model, y)
        assert r.status == "converged"
        assert abs(estimating_fn(model, y, r.rho_hat)) <= 1e-8 * model.n * r.fit.sigma2_hat
        assert r.rho_hat in r.roots

    def test_bisection_oracle(self, rng):
        model = random_model(30, 2, rng)
        y = simulate(model, [1.0, -1.0], 1.0, 0.25, rng)
        r = fit_quadform(model, y, "a")
        assert len(r.roots) == 1
        f = lambda t: estimating_fn(model, y, t, "a")  # noqa: E731
        lo, hi = r.rho_hat - 0.02, r.rho_hat + 0.02
        assert np.sign(f(lo)) != np.sign(f(hi))
        assert r.rho_hat == pytest.approx(bisect(f, lo, hi), abs=1e-8)

    @pytest.mark.parametrize("c", [0.1, 10.0])
    def test_scale_invariance(self, rng, c):
        model = random_model(30, 2, rng)
        y = simulate(model, [1.0, 0.5], 1.0, 0.1, rng)
        assert fit_quadform(model, c * y).rho_hat == pytest.approx(fit_quadform(model, y).rho_hat, abs=1e-7)

    def test_relabeling(self, rng):
        model = random_model(25, 2, rng)
        y = simulate(model, [1.0, 0.5], 1.0, 0.1, rng)
        perm = rng.permutation(25)
        idx = np.ix_(perm, perm)
        w2 = weight_matrix(model.w.w[idx], adjacency=model.w.adjacency[idx])
        m2 = DisturbanceModel(model.x[perm], w2)
        for c in ("w", "a"):
            assert fit_quadform(m2, y[perm], c).rho_hat == pytest.approx(fit_quadform(model, y, c).rho_hat, abs=1e-9)

    def test_multiple_roots_steepest(self, rng, monkeypatch):
        import netdisturb.quadform as qf_mod

        model = random_model(15, 1, rng)

        class Cubic:
            # slopes 0.25, -0.25 and 0.75 at the roots -0.5, 0 and 0.5
            def __call__(self, y, r):
                return (r + 0.5) * r * (r - 0.5) * (1 + r)

        monkeypatch.setattr(qf_mod, "_Evaluator", lambda *a, **k: Cubic())
        r = fit_quadform(model, rng.standard_normal(15), with_scale=False)
        assert len(r.roots) == 3
        assert r.rho_hat == pytest.approx(0.5, abs=1e-9)


class TestScale:
    def test_tau_delta_relation_intercept(self):
        # X = 1, row-stochastic W, rho0 = 0: tau_hat^2 and Delta_hat agree to O(1/n)
        n = 100
        w = row_normalized_weights(gnp(n, 0.1, 2024))
        tau2, delta, s = qf_scale(DisturbanceModel.intercept_only(w), 0.0, "w")
        assert abs(tau2 - delta) <= 10 / n
        assert delta > 0
        assert s == pytest.approx(np.sqrt(tau2) / delta)

    def test_nonnegative(self, rng):
        model = random_model(20, 3, rng)
        for c in ("w", "a"):
            tau2, _, _ = qf_scale(model, 0.2, c)
            assert tau2 >= 0

    @pytest.mark.slow
    def test_monte_carlo_definitions(self):
        rng = np.random.default_rng(4242)
        n, reps, rho0, sigma = 20, 10_000, 0.2, 1.3
        model = random_model(n, 2, rng, p=0.3)
        c = model.w.w
        tau2, delta, _ = qf_scale(model, rho0, c)
        y = model.x @ np.array([1.0, 0.5])[:, None] + sigma * np.linalg.solve(
            np.eye(n) - rho0 * c, rng.standard_normal((n, reps))
        )
        u = dense_u(model, c, rho0, y)
        assert u.var(ddof=1) / sigma**4 == pytest.approx(tau2, rel=0.10)
        h = 1e-5
        du = (dense_u(model, c, rho0 + h, y) - dense_u(model, c, rho0 - h, y)) / (2 * h)
        assert -du.mean() == pytest.approx(sigma**2 * delta, rel=0.10)


class TestPermutation:
    def _setup(self, seed=5):
        rng = np.random.default_rng(seed)
        g = two_block_mixture(20, 0.2, rng)
        w = row_normalized_weights(g)
        x = np.column_stack([np.ones(40), np.where(g.blocks == 0, 1.0, -1.0)])
        model = DisturbanceModel(x, w)
        y = simulate(model, [1.0, 0.5], 1.0, 0.1, rng)
        return model, y, fit_quadform(model, y)

    def test_identity(self):
        model, y, qf = self._setup()
        r = permutation_refit(model, y, qf, np.arange(model.n))
        assert r.rho_hat == pytest.approx(qf.rho_hat, abs=1e-10)

    def test_deterministic_and_order_free(self):
        model, y, qf = self._setup()
        a = permutation_spread(model, y, qf, 12, seed=3)
        b = permutation_spread(model, y, qf, 12, seed=3)
        c = permutation_spread(model, y, qf, 5, seed=3)
        assert np.array_equal(a.estimates, b.estimates, equal_nan=True)
        assert np.array_equal(a.estimates[:5], c.estimates, equal_nan=True)
        assert a.no_root == int(np.isnan(a.estimates).sum())

    def test_matches_single_refits(self):
        model, y, qf = self._setup()
        res = permutation_spread(model, y, qf, 4, seed=9)
        for j in range(4):
            perm = np.random.default_rng(np.random.SeedSequence(9, spawn_key=(j,))).permutation(model.n)
            one = permutation_refit(model, y, qf, perm)
            assert one.rho_hat == pytest.approx(res.estimates[j], abs=1e-10, nan_ok=True)

    def test_requires_converged(self):
        w = row_normalized_weights(special_graph("complete", 10))
        model = DisturbanceModel.intercept_only(w)
        y = np.random.default_rng(0).standard_normal(10)
        qf = fit_quadform(model, y)
        with pytest.raises(ValueError):
            permutation_spread(model, y, qf, 10)


class TestBiasProperties:
    @pytest.mark.slow
    @pytest.mark.parametrize("rho0", [-0.2, 0.0, 0.3])
    def test_little_bias(self, rho0):
        rng = np.random.default_rng(1000 + int(10 * rho0))
        n = 100
        w = row_normalized_weights(gnp(n, 0.19, rng))
        x = np.column_stack([np.ones(n), rng.standard_normal((n, 3))])
        model = DisturbanceModel(x, w)
        est = []
        for _ in range(200):
            r = fit_quadform(model, simulate(model, [1, 0.5, 0.4, 0.3], 1.0, rho0, rng), with_scale=False)
            est.append(r.rho_hat)
        est = np.array(est)
        est = est[np.isfinite(est)]
        assert abs(est.mean() - rho0) <= 3 * est.std(ddof=1) / np.sqrt(est.size)

    @pytest.mark.slow
    def test_symmetry_at_03(self):
        from scipy import stats

        rng = np.random.default_rng(2718)
        n = 100
        w = row_normalized_weights(gnp(n, 0.0975, rng))
        x = np.column_stack([np.ones(n), rng.standard_normal((n, 3))])
        model = DisturbanceModel(x, w)
        est = np.array(
            [fit_quadform(model, simulate(model, [1, 0.5, 0.4, 0.3], 1.0, 0.3, rng), with_scale=False).rho_hat for _ in range(1000)]
        )
        est = est[np.isfinite(est)]
        assert abs(stats.skew(est, bias=False)) <= 0.5
