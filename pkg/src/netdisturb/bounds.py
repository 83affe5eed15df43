"""
Precision floors and conditioning diagnostics.

``crlb`` gives the Cramer-Rao floor ``gamma`` on the standard deviation of
unbiased estimators of rho. ``beta_cov_off_model`` and
``beta_conditioning`` describe how ``beta_hat_rho`` behaves when rho is
misspecified, and ``nem_diagnostics`` reports the quantities that govern
estimability when the structural mean itself depends on rho (the network
effects model ``K_rho y = X beta + nu``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DegenerateModelError
from .graph import WeightMatrix
from .model import (
    DisturbanceModel,
    check_rho,
    k_apply,
    k_solve,
    orthonormal_basis,
    z_matrix,
)

__all__ = [
    "Thresholds",
    "PrecisionReport",
    "BetaConditioning",
    "NemReport",
    "crlb",
    "beta_cov_off_model",
    "beta_conditioning",
    "nem_diagnostics",
    "sym_sqrt",
]

RHO_WARNING = "rho not reliably estimable"
NEM_WARNING = "neither rho nor beta reliably estimable in the network effects model"
BETA_WARNING = "beta estimates may be poorly conditioned under a misspecified rho"


@dataclass(frozen=True)
class Thresholds:
    """Advisory trigger levels.

    gamma : warn when the precision floor reaches this value.
    nem_information : warn when ``lambda_max(E'E) + Tr{W^2 + WW'}`` is at
        most this value.
    lambda_max_wtw : warn when ``lambda_max(W'W)`` reaches this value.
    """

    gamma: float = 0.1
    nem_information: float = 25.0
    lambda_max_wtw: float = 10.0


DEFAULT_THRESHOLDS = Thresholds()


@dataclass(frozen=True)
class PrecisionReport:
    gamma: float
    trace_z2: float
    trace_zzt: float
    v_rho0: float
    psi0: float
    lambda_max_wtw: float
    warnings: tuple = ()


def _lambda_max_sym(a):
    return float(linalg.eigvalsh(a)[-1]) if a.size else 0.0


def crlb(w: WeightMatrix, rho0, x=None, *, thresholds=DEFAULT_THRESHOLDS) -> PrecisionReport:
    """Cramer-Rao floor ``gamma^2 = 1 / Tr{Z^2 + Z Z'}`` at ``rho0``.

    When a design ``x`` is supplied, ``v(rho0) = Tr{(Z Z' + Z^2)(I - H)}``
    and the MLE spread guide ``psi0`` are filled in; otherwise they are NaN.
    ``gamma`` is ``inf`` when the trace vanishes (``W = 0``).
    """
    rho0 = check_rho(w, rho0)
    z = z_matrix(w, rho0)
    tz2 = float(np.sum(z * z.T))
    tzzt = float(np.sum(z * z))
    denom = tz2 + tzzt
    gamma = 1.0 / np.sqrt(denom) if denom > 0 else np.inf
    v = psi0 = np.nan
    if x is not None:
        from .mle import mle_theory

        model = x if isinstance(x, DisturbanceModel) else DisturbanceModel(x, w)
        th = mle_theory(model, rho0)
        v, psi0 = th.v_rho0, th.psi0
    lmax = _lambda_max_sym(w.w.T @ w.w)
    warns = []
    if gamma >= thresholds.gamma:
        warns.append(RHO_WARNING)
    if lmax >= thresholds.lambda_max_wtw:
        warns.append(BETA_WARNING)
    return PrecisionReport(float(gamma), tz2, tzzt, float(v), float(psi0), lmax, tuple(warns))


def beta_cov_off_model(model: DisturbanceModel, rho, rho0, sigma=1.0):
    """Covariance of ``beta_hat_rho`` when the data come from ``M_{rho0}``.

    ``sigma^2 (X'S X)^{-1} X'S S0^{-1} S X (X'S X)^{-1}`` with
    ``S = K_rho' K_rho`` and ``S0 = K_rho0' K_rho0``, evaluated through a
    thin QR of ``K_rho X`` without forming normal equations.
    """
    check_rho(model.w, rho0)
    q, r = orthonormal_basis(k_apply(model.w, rho, model.x))
    # beta_hat = R^-1 Q' K_rho y and Cov(y) = sigma^2 K0^-1 K0^-T
    n_mat = k_solve(model.w, rho0, _kt_apply(model.w, rho, q), trans=True)  # K0^-T K' Q
    a = linalg.solve_triangular(r, n_mat.T, lower=False)
    cov = sigma**2 * (a @ a.T)
    return 0.5 * (cov + cov.T)


def _kt_apply(w, rho, v):
    """``K_rho' v``."""
    return v - rho * (w.w.T @ v)


def sym_sqrt(a, clamp=1e-12):
    """Symmetric square root by eigen-decomposition.

    Eigenvalues in ``[-clamp * scale, 0)`` are set to zero; anything more
    negative means ``a`` is not positive semidefinite.
    """
    a = 0.5 * (a + a.T)
    lam, v = linalg.eigh(a)
    tol = clamp * max(1.0, float(np.max(np.abs(lam))))
    if lam[0] < -tol:
        raise DegenerateModelError(f"matrix is not positive semidefinite (eigenvalue {lam[0]:.3g})")
    lam = np.clip(lam, 0.0, None)
    return (v * np.sqrt(lam)) @ v.T


@dataclass(frozen=True)
class BetaConditioning:
    lambda_min_xtx: float
    lambda_min_s: float
    lambda_max_s_ratio: float
    lambda_max_wtw: float
    warnings: tuple = ()


def beta_conditioning(model: DisturbanceModel, rho, rho0=0.0, *, thresholds=DEFAULT_THRESHOLDS):
    """Eigenvalue diagnostics for ``beta_hat_rho`` under a true ``rho0``.

    Reports ``lambda_min(X'X)``, ``lambda_min(S_rho)`` and
    ``lambda_max(S(rho, rho0))`` with
    ``S(rho, rho0) = S_rho^{1/2} S_rho0^{-1} S_rho^{1/2}``.
    """
    w = model.w
    n = model.n
    k = np.eye(n) - check_rho(w, rho) * w.w
    s = k.T @ k
    k0_inv_t = k_solve(w, rho0, np.eye(n), trans=True)  # S0^-1 = K0^-1 K0^-T
    m = k0_inv_t @ sym_sqrt(s)
    ratio = m.T @ m
    xtx = model.x.T @ model.x
    lmax_wtw = _lambda_max_sym(w.w.T @ w.w)
    warns = (BETA_WARNING,) if lmax_wtw >= thresholds.lambda_max_wtw else ()
    return BetaConditioning(
        lambda_min_xtx=float(linalg.eigvalsh(xtx)[0]) if model.m else float("nan"),
        lambda_min_s=float(linalg.eigvalsh(s)[0]),
        lambda_max_s_ratio=_lambda_max_sym(0.5 * (ratio + ratio.T)),
        lambda_max_wtw=lmax_wtw,
        warnings=warns,
    )


@dataclass(frozen=True, eq=False)
class NemReport:
    """Network-effects diagnostics at ``rho0``.

    ``v1`` and ``v2`` are Fisher-information analogues of
    ``Tr{Z^2 + Z Z'}``: the first keeps ``beta`` fixed, the second uses the
    reparametrised coefficient ``(I - rho0 Gamma)^{-1} beta``.
    ``beta_offset`` is the mean shift of the ordinary least squares
    coefficient for the pair ``(rho_fit, rho_true)``.
    """

    gamma_mat: np.ndarray
    e_mat: np.ndarray
    lambda_max_ete: float
    v1: float
    v2: float
    g_rho: np.ndarray
    beta_offset: np.ndarray
    trace_info: float
    warnings: tuple = field(default=())


def nem_diagnostics(
    model: DisturbanceModel,
    beta,
    sigma,
    rho0,
    *,
    rho_fit=0.0,
    rho_true=None,
    thresholds=DEFAULT_THRESHOLDS,
) -> NemReport:
    """Decompose ``W X = X Gamma + E`` and compute the information measures.

    Parameters
    ----------
    beta, sigma
        Parameter values at which ``v1`` and ``v2`` are evaluated (true or
        plug-in).
    rho0
        Correlation at which ``Z``, ``v1``, ``v2`` and ``G`` are evaluated.
    rho_fit, rho_true
        Pair ``(rho, rho')`` for ``beta_offset``; ``rho_true`` defaults to
        ``rho0``.
    """
    w = model.w
    rho0 = check_rho(w, rho0)
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.shape != (model.m,):
        raise ValueError(f"beta must have length {model.m}")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    x = model.x
    wx = w.w @ x
    qx, rx = orthonormal_basis(x)
    gam = linalg.solve_triangular(rx, qx.T @ wx)
    e = wx - x @ gam
    ete = e.T @ e
    lmax_ete = max(_lambda_max_sym(0.5 * (ete + ete.T)), 0.0)
    z = z_matrix(w, rho0)
    tr = float(np.sum(z * z.T) + np.sum(z * z))
    zxb = z @ (x @ beta)
    v1 = tr + float(zxb @ zxb) / sigma**2

    m = model.m
    a = np.eye(m) - rho0 * gam
    if m and np.linalg.cond(a) > 1.0 / (m * np.finfo(float).eps):
        raise DegenerateModelError("I - rho0 Gamma is numerically singular")
    g_coef = np.linalg.solve(a, beta) if m else beta
    ea = e @ a
    g_mat = ea - rho0 * k_solve(w, rho0, w.w @ ea) - rho0 * (e @ gam)
    gg = g_mat @ g_coef
    v2 = tr + float(gg @ gg) / sigma**2

    rt = rho0 if rho_true is None else check_rho(w, rho_true)
    shifted = k_apply(w, rho_fit, k_solve(w, rt, x @ beta))
    offset = linalg.solve_triangular(rx, qx.T @ shifted) - beta if m else beta

    info = lmax_ete + float(np.sum(w.w * w.w.T) + np.sum(w.w * w.w))
    warns = (NEM_WARNING,) if info <= thresholds.nem_information else ()
    return NemReport(
        gamma_mat=gam,
        e_mat=e,
        lambda_max_ete=lmax_ete,
        v1=v1,
        v2=v2,
        g_rho=g_mat,
        beta_offset=offset,
        trace_info=info,
        warnings=warns,
    )
