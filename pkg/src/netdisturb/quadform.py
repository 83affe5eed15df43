"""
Quadratic-form estimator of rho.

With ``nu_hat = (I - H_rho) K_rho y`` and a zero-diagonal nonnegative
matrix ``C`` (usually ``W`` or the adjacency ``A``), the statistic
``T^C = nu_hat' C nu_hat`` has expectation ``-sigma^2 Tr{H C}`` at the true
rho. The estimate is the root of the bias-corrected estimating function

    U^C(rho; y) = T^C(rho; y) + sigma2_hat(rho) Tr{H_rho C}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import DegenerateModelError
from .graph import WeightMatrix
from .model import (
    DisturbanceModel,
    FitAtRho,
    RhoCache,
    _check_y,
    _nu_hat,
    admissible_interval,
    check_rho,
    fit_at_rho,
    k_solve,
    z_matrix,
)
from .mle import structure_basis

__all__ = [
    "GRID_SIZE",
    "QfFit",
    "PermutationResult",
    "resolve_c",
    "t_stat",
    "estimating_fn",
    "fit_quadform",
    "qf_scale",
    "permutation_refit",
    "permutation_spread",
]

GRID_SIZE = 41
XTOL = 1e-12


def resolve_c(w: WeightMatrix, c="w"):
    """Return ``(kind, C)`` for ``c`` in ``{"w", "a"}`` or an explicit matrix."""
    if isinstance(c, str):
        key = c.lower()
        if key in ("w", "weights"):
            return "weights", w.w
        if key in ("a", "adjacency"):
            if w.adjacency is None:
                raise ValueError("C = A needs a weight matrix built from a network")
            return "adjacency", w.adjacency
        raise ValueError(f"unknown C preset {c!r}; use 'w', 'a' or a matrix")
    cm = np.asarray(c, dtype=float)
    if cm.shape != (w.n, w.n):
        raise ValueError(f"C must be {w.n} x {w.n}")
    if not np.all(np.isfinite(cm)) or np.any(cm < 0):
        raise ValueError("C must be finite and nonnegative")
    if np.any(np.diag(cm) != 0):
        raise ValueError("C must have a zero diagonal")
    return "custom", cm


@dataclass(frozen=True, eq=False)
class QfFit:
    """Result of :func:`fit_quadform`.

    ``status`` is ``"converged"`` or ``"no_root"``; in the latter case
    ``rho_hat`` and the scale fields are NaN and ``fit`` is None.
    ``roots`` lists every root found on the search grid.
    """

    rho_hat: float
    fit: FitAtRho | None
    c_kind: str
    scale: float
    tau_hat_sq: float
    delta_hat: float
    status: str
    roots: tuple = ()
    c: np.ndarray = field(default=None, repr=False)


class _Evaluator:
    """``U^C`` at many rho values for one ``(model, C)`` pair, with caching."""

    def __init__(self, model, c, cache=None):
        self.model = model
        self.c = c
        self.cache = cache or RhoCache(model)
        self._trhc = {}

    def trace_hc(self, rho):
        rho = float(rho)
        t = self._trhc.get(rho)
        if t is None:
            q, _ = self.cache.qr(rho)
            t = float(np.sum(q * (self.c @ q)))  # Tr{Q Q' C} = Tr{Q' C Q}
            self.cache._put(self._trhc, rho, t)
        return t

    def __call__(self, y, rho):
        nu, _ = _nu_hat(self.model, y, rho, self.cache)
        return float(nu @ (self.c @ nu) + (nu @ nu) / self.model.n * self.trace_hc(rho))


def t_stat(model: DisturbanceModel, y, rho, c="w") -> float:
    """``nu_hat' C nu_hat`` with ``nu_hat = (I - H_rho) K_rho y``."""
    _, cm = resolve_c(model.w, c)
    y = _check_y(model, y)
    check_rho(model.w, rho)
    nu, _ = _nu_hat(model, y, rho)
    return float(nu @ (cm @ nu))


def estimating_fn(model: DisturbanceModel, y, rho, c="w") -> float:
    """``U^C(rho; y) = T^C(rho; y) + sigma2_hat(rho) Tr{H_rho C}``."""
    _, cm = resolve_c(model.w, c)
    y = _check_y(model, y)
    check_rho(model.w, rho)
    return _Evaluator(model, cm)(y, rho)


def _interval(w):
    lo, hi = admissible_interval(w)
    if not np.isfinite(hi):
        raise DegenerateModelError("W = 0: rho is not identifiable")
    return lo, hi


def _roots(ev, y, grid, vals, xtol):
    roots = []
    for k in range(len(grid) - 1):
        a, b = grid[k], grid[k + 1]
        ua, ub = vals[k], vals[k + 1]
        if ua == 0.0:
            roots.append(float(a))
        elif ua * ub < 0:
            roots.append(float(optimize.brentq(lambda r: ev(y, r), a, b, xtol=xtol)))
    if vals[-1] == 0.0:
        roots.append(float(grid[-1]))
    return roots


def _slope(ev, y, rho, lo, hi, h=1e-6):
    a, b = max(lo, rho - h), min(hi, rho + h)
    return (ev(y, b) - ev(y, a)) / (b - a)


def fit_quadform(
    model: DisturbanceModel,
    y,
    c="w",
    *,
    grid_size=GRID_SIZE,
    xtol=XTOL,
    with_scale=True,
    cache=None,
    _evaluator=None,
) -> QfFit:
    """Root of the estimating function over the admissible interval.

    ``U^C`` is scanned on a uniform grid; each sign change is refined by
    Brent's bracketing method. With several roots the one where ``U^C``
    crosses zero most steeply is returned. No sign change gives
    ``status="no_root"``.
    """
    kind, cm = resolve_c(model.w, c)
    y = _check_y(model, y)
    ev = _evaluator or _Evaluator(model, cm, cache)
    lo, hi = _interval(model.w)
    grid = np.linspace(lo, hi, grid_size)
    vals = np.array([ev(y, r) for r in grid])
    roots = _roots(ev, y, grid, vals, xtol)
    nan = float("nan")
    if not roots:
        return QfFit(nan, None, kind, nan, nan, nan, "no_root", (), cm)
    if len(roots) == 1:
        rho_hat = roots[0]
    else:
        rho_hat = max(roots, key=lambda r: abs(_slope(ev, y, r, lo, hi)))
    if with_scale:
        tau2, dhat, s = qf_scale(model, rho_hat, cm)
    else:
        tau2 = dhat = s = nan
    return QfFit(
        rho_hat=rho_hat,
        fit=fit_at_rho(model, y, rho_hat),
        c_kind=kind,
        scale=s,
        tau_hat_sq=tau2,
        delta_hat=dhat,
        status="converged",
        roots=tuple(roots),
        c=cm,
    )


def qf_scale(model: DisturbanceModel, rho0, c="w"):
    """Analytic scale ``tau_hat / |Delta_hat|`` of the estimator at ``rho0``.

    Returns
    -------
    tau_hat_sq, delta_hat, scale : float
        ``scale`` is NaN when ``delta_hat`` vanishes.
    """
    _, cm = resolve_c(model.w, c)
    rho0 = check_rho(model.w, rho0)
    n = model.n
    q = structure_basis(model, rho0)
    h = q @ q.T
    p = np.eye(n) - h
    z = z_matrix(model.w, rho0)
    cs = cm + cm.T
    tr_hc = float(np.sum(q * (cm @ q)))
    # Q_hat(C + C') = P (C + C') P + n^-1 P Tr{H (C + C')}
    qh = p @ cs @ p + p * (2.0 * tr_hc / n)
    tau2 = 0.5 * float(np.sum(qh * qh.T))
    d1 = np.sum((p @ (z.T @ p - z @ h)) * cs.T)
    d2 = np.sum(cm * (p @ z @ h + h @ z.T @ p).T)
    d3 = 2.0 / n * np.sum(p * (z @ p).T) * tr_hc
    delta = float(d1 + d2 + d3)
    if abs(delta) <= 1e-12 * max(1.0, abs(tau2)):
        return tau2, delta, float("nan")
    return tau2, delta, float(np.sqrt(max(tau2, 0.0)) / abs(delta))


@dataclass(frozen=True, eq=False)
class PermutationResult:
    """Estimates from permuted residuals; NaN marks a ``no_root`` replicate."""

    estimates: np.ndarray
    no_root: int

    @property
    def valid(self):
        return self.estimates[np.isfinite(self.estimates)]


def _synthetic(model, qf, nu_perm):
    return model.x @ qf.fit.beta_hat + k_solve(model.w, qf.rho_hat, nu_perm)


def permutation_refit(model: DisturbanceModel, y, qf: QfFit, perm) -> QfFit:
    """Refit on ``y^pi = X beta_hat + K^{-1} nu_hat^pi`` for one permutation."""
    if qf.status != "converged":
        raise ValueError("permutation needs a converged fit")
    nu, _ = _nu_hat(model, _check_y(model, y), qf.rho_hat)
    yp = _synthetic(model, qf, nu[np.asarray(perm)])
    return fit_quadform(model, yp, qf.c, with_scale=False)


def permutation_spread(model: DisturbanceModel, y, qf: QfFit, m_reps, seed=0) -> PermutationResult:
    """Spread of the estimator over ``m_reps`` random permutations of ``nu_hat``.

    Replicate ``j`` draws its permutation from a generator seeded by
    ``SeedSequence(seed, spawn_key=(j,))``, so results do not depend on
    evaluation order.
    """
    if qf.status != "converged":
        raise ValueError("permutation needs a converged fit")
    if m_reps < 1:
        raise ValueError("m_reps must be positive")
    y = _check_y(model, y)
    nu, _ = _nu_hat(model, y, qf.rho_hat)
    perms = np.array(
        [np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(j,))).permutation(model.n) for j in range(m_reps)]
    )
    # one factorization for every replicate
    eps = k_solve(model.w, qf.rho_hat, nu[perms].T)
    base = model.x @ qf.fit.beta_hat
    ev = _Evaluator(model, qf.c)
    est = np.empty(m_reps)
    for j in range(m_reps):
        r = fit_quadform(model, base + eps[:, j], qf.c, with_scale=False, _evaluator=ev)
        est[j] = r.rho_hat
    return PermutationResult(est, int(np.sum(~np.isfinite(est))))
