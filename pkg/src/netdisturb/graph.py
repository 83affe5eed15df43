"""
Networks and weight matrices.

Graphs are simple and undirected and are stored densely; the package targets
networks of a few hundred vertices, where every trace formula costs O(n^3)
anyway. Random generators draw exactly one uniform variate per unordered
vertex pair, in lexicographic pair order, from a PCG64 stream, so a given
``(parameters, seed)`` reproduces the same graph on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, FormatError

__all__ = [
    "MAX_VERTICES",
    "Network",
    "WeightMatrix",
    "gnp",
    "two_block_mixture",
    "special_graph",
    "row_normalized_weights",
    "weight_matrix",
    "spectral_radius",
    "read_edge_list",
    "write_edge_list",
]

#: Dense storage cap on the number of vertices.
MAX_VERTICES = 4000

#: Largest matrix for which the spectral radius comes from a full eigen-solve.
EIGEN_SIZE_LIMIT = 2000


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Network:
    """Simple undirected graph on vertices ``0..n-1``.

    Parameters
    ----------
    adjacency : array_like
        Symmetric 0/1 matrix with zero diagonal.
    blocks : array_like, optional
        Integer block label of each vertex.
    """

    adjacency: np.ndarray
    blocks: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.adjacency)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError("adjacency must be a non-empty square matrix")
        if a.shape[0] > MAX_VERTICES:
            raise ValueError(f"n={a.shape[0]} exceeds the dense-storage cap {MAX_VERTICES}")
        if not np.all((a == 0) | (a == 1)):
            raise ValueError("adjacency entries must be 0 or 1")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency must have a zero diagonal (no self-loops)")
        object.__setattr__(self, "adjacency", _frozen(a, dtype=np.int8))
        if self.blocks is not None:
            b = np.asarray(self.blocks)
            if b.shape != (a.shape[0],):
                raise ValueError("blocks must have length n")
            object.__setattr__(self, "blocks", _frozen(b, dtype=np.int64))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(np.int64)

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum()) // 2

    def edges(self):
        """Edges ``(i, j)`` with ``i < j`` in lexicographic order."""
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(i.tolist(), j.tolist()))

    @classmethod
    def from_edges(cls, n, edges, blocks=None):
        a = np.zeros((n, n), dtype=np.int8)
        for i, j in edges:
            if i == j:
                raise ValueError(f"self-loop at vertex {i}")
            a[i, j] = a[j, i] = 1
        return cls(a, blocks)


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Nonnegative zero-diagonal weight matrix ``W`` with its spectral radius.

    ``adjacency`` keeps the source graph's adjacency when ``W`` was derived
    from a :class:`Network`, so that ``C = A`` can be used by the
    quadratic-form estimator.
    """

    w: np.ndarray
    spectral_radius: float = field(default=None)
    row_stochastic: bool = field(default=None)
    adjacency: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("W must be square")
        if not np.all(np.isfinite(w)):
            raise ValueError("W must be finite")
        if np.any(w < 0):
            raise ValueError("W must be nonnegative")
        if np.any(np.diag(w) != 0):
            raise ValueError("W must have a zero diagonal")
        object.__setattr__(self, "w", _frozen(w))
        if self.spectral_radius is None:
            object.__setattr__(self, "spectral_radius", spectral_radius(w))
        if self.row_stochastic is None:
            s = w.sum(axis=1)
            ok = np.all((np.abs(s - 1) <= 1e-12) | (np.abs(s) <= 1e-12))
            object.__setattr__(self, "row_stochastic", bool(ok))
        if self.adjacency is not None:
            object.__setattr__(self, "adjacency", _frozen(self.adjacency))

    @property
    def n(self) -> int:
        return self.w.shape[0]


def _pair_uniforms(n, rng):
    # one draw per unordered pair, lexicographic (i < j) order
    iu = np.triu_indices(n, 1)
    return iu, rng.random(iu[0].size)


def _from_upper(n, iu, mask, blocks=None):
    a = np.zeros((n, n), dtype=np.int8)
    a[iu[0][mask], iu[1][mask]] = 1
    return Network(a + a.T, blocks)


def gnp(n, p, seed):
    """Bernoulli (Erdos-Renyi) random graph G(n, p)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    iu, u = _pair_uniforms(n, rng)
    return _from_upper(n, iu, u < p)


def two_block_mixture(block_size, p, seed):
    """Two-class Erdos-Renyi mixture.

    Vertices ``0..block_size-1`` form block 0 and the rest block 1. Pairs in
    the same block are joined with probability ``2p(1-p)``, pairs in
    different blocks with probability ``p``.
    """
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    n = 2 * block_size
    blocks = np.repeat([0, 1], block_size)
    rng = np.random.default_rng(seed)
    iu, u = _pair_uniforms(n, rng)
    same = blocks[iu[0]] == blocks[iu[1]]
    prob = np.where(same, 2 * p * (1 - p), p)
    return _from_upper(n, iu, u < prob, blocks)


def special_graph(kind, n):
    """Deterministic graphs: ``"star"`` (centre 0) or ``"complete"``."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if kind == "star":
        a = np.zeros((n, n), dtype=np.int8)
        a[0, 1:] = a[1:, 0] = 1
    elif kind == "complete":
        a = np.ones((n, n), dtype=np.int8) - np.eye(n, dtype=np.int8)
    else:
        raise ValueError(f"unknown graph kind {kind!r}")
    return Network(a)


def row_normalized_weights(g: Network) -> WeightMatrix:
    """``W_ij = A_ij / deg(i)``; isolated vertices get an all-zero row."""
    a = g.adjacency.astype(float)
    deg = a.sum(axis=1)
    w = np.divide(a, deg[:, None], out=np.zeros_like(a), where=deg[:, None] > 0)
    return WeightMatrix(w, row_stochastic=True, adjacency=a)


def weight_matrix(w, adjacency=None) -> WeightMatrix:
    """Wrap an arbitrary nonnegative zero-diagonal matrix."""
    return WeightMatrix(np.asarray(w, dtype=float), adjacency=adjacency)


def spectral_radius(w, *, size_limit=EIGEN_SIZE_LIMIT, tol=1e-10, max_iter=100_000):
    """Spectral radius r(W) of a square matrix.

    Up to ``size_limit`` rows the largest eigenvalue modulus is computed
    directly. Beyond that, power iteration on ``|W|`` is used; for the
    nonnegative weight matrices handled here this is exact, and for general
    matrices it is an upper bound.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("spectral_radius needs a square matrix")
    n = w.shape[0]
    if n == 0 or not np.any(w):
        return 0.0
    if n <= size_limit:
        if np.array_equal(w, w.T):
            ev = np.linalg.eigvalsh(w)
        else:
            ev = np.linalg.eigvals(w)
        return float(np.max(np.abs(ev)))
    # Collatz-Wielandt bounds on a positive start vector; the shift by I
    # makes the iteration converge for periodic (e.g. bipartite) patterns
    # without changing the Perron vector.
    m = np.abs(w) + np.eye(n)
    x = np.ones(n)
    prev = np.inf
    for _ in range(max_iter):
        y = m @ x
        hi = float(np.max(y / x))
        if abs(prev - hi) <= tol * hi:
            return hi - 1.0
        prev = hi
        x = np.maximum(y / np.linalg.norm(y), 1e-300)
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps")


def read_edge_list(path) -> Network:
    """Read a graph from an edge-list file.

    Format: one edge ``i j`` per line (0-based indices), ``#`` comments,
    an optional ``n <count>`` line so that isolated vertices are kept, and
    optional ``v <vertex> <block>`` lines carrying block labels.
    """
    path = Path(path)
    declared_n = None
    edges = []
    labels = {}
    max_vertex = -1
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tok = line.split()
            if tok[0] == "n":
                if len(tok) != 2 or not tok[1].isdigit() or int(tok[1]) < 1:
                    raise FormatError(path, lineno, "'n <positive count>'", line)
                declared_n = int(tok[1])
                continue
            if tok[0] == "v":
                if len(tok) != 3 or not tok[1].isdigit():
                    raise FormatError(path, lineno, "'v <vertex> <block>'", line)
                try:
                    labels[int(tok[1])] = int(tok[2])
                except ValueError:
                    raise FormatError(path, lineno, "an integer block label", line) from None
                max_vertex = max(max_vertex, int(tok[1]))
                continue
            if len(tok) != 2 or not (tok[0].isdigit() and tok[1].isdigit()):
                raise FormatError(path, lineno, "two whitespace-separated 0-based vertex indices", line)
            i, j = int(tok[0]), int(tok[1])
            if i == j:
                raise FormatError(path, lineno, "distinct endpoints (no self-loops)", line)
            edges.append((i, j))
            max_vertex = max(max_vertex, i, j)
    n = declared_n if declared_n is not None else max_vertex + 1
    if n < 1:
        raise FormatError(path, 1, "at least one edge or an 'n <count>' header", "")
    if max_vertex >= n:
        raise FormatError(path, 0, f"vertex indices below the declared n={n}", max_vertex)
    blocks = None
    if labels:
        if len(labels) != n:
            raise FormatError(path, 0, f"block labels for all {n} vertices", f"{len(labels)} labels")
        blocks = [labels[v] for v in range(n)]
    return Network.from_edges(n, edges, blocks)


def write_edge_list(g: Network, path_or_file):
    """Write ``g`` in the edge-list format read by :func:`read_edge_list`."""
    lines = [f"n {g.n}"]
    if g.blocks is not None:
        lines += [f"v {v} {b}" for v, b in enumerate(g.blocks.tolist())]
    lines += [f"{i} {j}" for i, j in g.edges()]
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        Path(path_or_file).write_text(text, encoding="utf-8")
