"""
Maximum likelihood for rho.

Profiling out ``beta`` and ``sigma^2`` leaves the scalar objective

    F(rho; y) = log sigma2_hat(rho) - (2/n) log det K_rho,

which the MLE minimizes over the admissible interval. The score
``U = dF/drho`` and the moment approximations ``mu0, tau0^2, Delta0`` for
``n U(rho0; y)`` are also provided; ``psi0 = tau0 / Delta0`` and
``-mu0 / Delta0`` are rough guides to the spread and bias of the MLE.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import ConvergenceError, DegenerateDataError, DegenerateModelError
from .model import (
    DisturbanceModel,
    FitAtRho,
    RhoCache,
    _check_y,
    _nu_hat,
    admissible_interval,
    check_rho,
    fit_at_rho,
    orthonormal_basis,
    k_apply,
    z_matrix,
)

__all__ = [
    "GRID_SIZE",
    "SCORE_TOL",
    "MleFit",
    "MleTheory",
    "profile_objective",
    "score",
    "fit_mle",
    "mle_theory",
    "structure_basis",
    "search_interval",
]

GRID_SIZE = 81
SCORE_TOL = 1e-8
FLAT_TOL = 1e-12
POLISH_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class MleFit:
    """Result of :func:`fit_mle`.

    ``status`` is ``"converged"``, ``"boundary_degenerate"`` (grid minimum
    at an end of the interval, i.e. a monotone likelihood) or
    ``"flat_likelihood"``. ``fit`` is populated in every case.
    """

    rho_hat: float
    fit: FitAtRho
    objective_at_opt: float
    score_at_opt: float
    status: str
    bracket: tuple
    grid: np.ndarray
    grid_values: np.ndarray


@dataclass(frozen=True)
class MleTheory:
    """Moment approximations for ``n U(rho0; y)`` under the model at ``rho0``.

    ``psi0`` and ``bias_estimate`` are NaN (and ``available`` is False)
    when ``Delta0`` vanishes. Both are rough guides only.
    """

    rho0: float
    mu0: float
    tau0_sq: float
    delta0: float
    psi0: float
    bias_estimate: float
    v_rho0: float
    available: bool = True


def search_interval(w):
    lo, hi = admissible_interval(w)
    if not np.isfinite(hi):
        raise DegenerateModelError("W = 0: rho is not identifiable")
    return lo, hi


def _sigma2(nu, n, ky=None):
    s2 = float(nu @ nu) / n
    scale = float(ky @ ky) / n if ky is not None else 0.0
    if s2 <= (n * np.finfo(float).eps) ** 2 * scale or s2 == 0.0:
        raise DegenerateDataError("sigma2_hat = 0: the data are fitted exactly")
    return s2


def _objective(model, y, rho, cache):
    ky = k_apply(model.w, rho, y)
    q, _ = cache.qr(rho)
    nu = ky - q @ (q.T @ ky)
    s2 = _sigma2(nu, model.n, ky)
    return np.log(s2) - 2.0 / model.n * cache.logdet(rho)


def profile_objective(model: DisturbanceModel, y, rho, *, cache=None) -> float:
    """``log sigma2_hat(rho) - (2/n) log det K_rho``.

    Raises
    ------
    DegenerateDataError
        If ``sigma2_hat(rho) = 0``.
    """
    y = _check_y(model, y)
    check_rho(model.w, rho)
    return float(_objective(model, y, rho, cache or RhoCache(model)))


def score(model: DisturbanceModel, y, rho, *, cache=None) -> float:
    """Derivative of :func:`profile_objective` in rho.

    ``Tr Z_rho`` is computed exactly from an explicit solve.
    """
    y = _check_y(model, y)
    nu, _ = _nu_hat(model, y, rho, cache)
    s2 = _sigma2(nu, model.n, k_apply(model.w, rho, y))
    z = z_matrix(model.w, rho)
    n = model.n
    # nu' (Z + Z') nu = 2 nu' Z nu
    return float(-2.0 * (nu @ (z @ nu)) / (n * s2) + 2.0 / n * np.trace(z))


def fit_mle(model: DisturbanceModel, y, *, grid_size=GRID_SIZE, xtol=1e-8, cache=None) -> MleFit:
    """Minimize the profile objective over the admissible interval.

    A uniform grid scan brackets the minimum; Brent's bounded minimizer
    refines it, and the result is polished as a root of the score when the
    score changes sign across the bracket.
    """
    y = _check_y(model, y)
    cache = cache or RhoCache(model)
    lo, hi = search_interval(model.w)
    grid = np.linspace(lo, hi, grid_size)
    vals = np.array([_objective(model, y, r, cache) for r in grid])
    i = int(np.argmin(vals))
    f = lambda r: float(_objective(model, y, r, cache))  # noqa: E731

    if vals.max() - vals.min() < FLAT_TOL:
        rho_hat, status, bracket = float(grid[i]), "flat_likelihood", (lo, hi)
    elif i == 0 or i == grid_size - 1:
        rho_hat, status, bracket = float(grid[i]), "boundary_degenerate", (lo, hi)
    else:
        a, b = float(grid[i - 1]), float(grid[i + 1])
        bracket = (a, b)
        res = optimize.minimize_scalar(f, bounds=(a, b), method="bounded", options={"xatol": xtol})
        rho_hat = float(res.x) if res.fun <= vals[i] else float(grid[i])
        u_hat = score(model, y, rho_hat, cache=cache)
        if u_hat != 0.0:
            # polish as a score root on whichever half-bracket changes sign
            far = a if u_hat > 0 else b
            if np.sign(score(model, y, far, cache=cache)) == -np.sign(u_hat):
                root = optimize.brentq(
                    lambda r: score(model, y, r, cache=cache), *sorted((far, rho_hat)), xtol=1e-15
                )
                # a - to + score crossing is a local minimum; the guard only has to
                # tolerate rounding noise in log sigma2_hat, which grows as sigma -> 0
                if f(root) <= min(f(rho_hat), vals[i]) + POLISH_TOL * max(1.0, abs(vals[i])):
                    rho_hat = float(root)
        status = "converged"

    u = score(model, y, rho_hat, cache=cache)
    if status == "converged" and not (abs(u) <= SCORE_TOL and bracket[0] < rho_hat < bracket[1]):
        raise ConvergenceError(f"score {u:.3g} at rho={rho_hat:.12g} did not reach tolerance {SCORE_TOL}")
    return MleFit(
        rho_hat=rho_hat,
        fit=fit_at_rho(model, y, rho_hat),
        objective_at_opt=f(rho_hat),
        score_at_opt=u,
        status=status,
        bracket=bracket,
        grid=grid,
        grid_values=vals,
    )


def structure_basis(model: DisturbanceModel, rho):
    """Orthonormal basis ``x_rho^(l)`` of the column span of ``K_rho X``."""
    q, _ = orthonormal_basis(k_apply(model.w, rho, model.x))
    return q


def mle_theory(model: DisturbanceModel, rho0) -> MleTheory:
    """Approximate mean ``mu0`` and variance ``tau0^2`` of ``n U(rho0; y)``
    and the mean ``Delta0`` of its derivative, by dense matrix algebra.
    """
    rho0 = check_rho(model.w, rho0)
    n = model.n
    z = z_matrix(model.w, rho0)
    q = structure_basis(model, rho0)
    h = q @ q.T
    p = np.eye(n) - h
    zs = z + z.T
    mu0 = 2.0 * np.sum(h * z.T)  # Tr{H Z}
    zsp = zs @ p
    tau0_sq = 2.0 * np.sum(zsp * zsp.T)  # 2 Tr{(Z+Z')P(Z+Z')P}
    zh = z @ h
    delta0 = tau0_sq / 2.0 + 2.0 * (-np.sum(zh * zsp.T) + np.sum(h * (z @ z).T))
    v = np.sum((z @ z.T + z @ z) * p.T)
    tiny = 1e-12 * max(1.0, abs(tau0_sq))
    if abs(delta0) <= tiny:
        psi0 = bias = np.nan
        ok = False
    else:
        psi0 = np.sqrt(max(tau0_sq, 0.0)) / abs(delta0)
        bias = -mu0 / delta0
        ok = True
    return MleTheory(
        rho0=rho0,
        mu0=float(mu0),
        tau0_sq=float(tau0_sq),
        delta0=float(delta0),
        psi0=float(psi0),
        bias_estimate=float(bias),
        v_rho0=float(v),
        available=ok,
    )
