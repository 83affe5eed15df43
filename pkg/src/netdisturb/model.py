"""
Network disturbance model algebra.

The model is ``y = X beta + eps`` with ``K_rho eps = nu``, ``K_rho = I - rho W``
and ``nu ~ N(0, sigma^2 I)``. For fixed ``rho`` it is an ordinary regression
of ``K_rho y`` on ``K_rho X``; everything here is built on that reduction.
"""

from __future__ import annotations

import csv
import threading
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from .errors import (
    DegenerateModelError,
    DesignDegeneracyError,
    DomainError,
    FormatError,
)
from .graph import WeightMatrix

__all__ = [
    "ADMISSIBLE_MARGIN",
    "DisturbanceModel",
    "FitAtRho",
    "admissible_interval",
    "check_rho",
    "k_matrix",
    "k_apply",
    "k_solve",
    "k_inverse",
    "z_matrix",
    "orthonormal_basis",
    "projection_h",
    "fit_at_rho",
    "RhoCache",
    "simulate",
    "log_det_k",
    "read_csv_matrix",
    "write_csv_matrix",
]

#: Relative margin kept from the boundary ``|rho| = 1/r(W)``.
ADMISSIBLE_MARGIN = 1e-6


def admissible_interval(w: WeightMatrix):
    """Closed interval ``[lo, hi]`` of usable rho values.

    ``hi = 1/r(W) - delta`` with ``delta = 1e-6 / r(W)``, and ``lo = -hi``.
    Returns ``(-inf, inf)`` when ``W`` is the zero matrix.
    """
    r = w.spectral_radius
    if r <= 0:
        return -np.inf, np.inf
    hi = (1.0 - ADMISSIBLE_MARGIN) / r
    return -hi, hi


def check_rho(w: WeightMatrix, rho):
    rho = float(rho)
    lo, hi = admissible_interval(w)
    if not (np.isfinite(rho) and lo <= rho <= hi):
        raise DomainError(
            f"rho={rho!r} is outside the admissible interval [{lo:.9g}, {hi:.9g}]"
        )
    return rho


def k_matrix(w: WeightMatrix, rho) -> np.ndarray:
    rho = check_rho(w, rho)
    return np.eye(w.n) - rho * w.w


def k_apply(w: WeightMatrix, rho, v):
    """``(I - rho W) v`` for a vector or a matrix of column vectors."""
    rho = check_rho(w, rho)
    v = np.asarray(v, dtype=float)
    return v - rho * (w.w @ v)


def _lu(w, rho):
    k = k_matrix(w, rho)
    try:
        with warnings.catch_warnings():
            # singularity is reported below as an exception
            warnings.simplefilter("ignore", linalg.LinAlgWarning)
            lu = linalg.lu_factor(k, check_finite=False)
    except (linalg.LinAlgError, ValueError) as exc:
        raise DegenerateModelError(f"K_rho is singular at rho={rho}") from exc
    d = np.abs(np.diag(lu[0]))
    if d.min() <= np.finfo(float).eps * d.max() * w.n:
        raise DegenerateModelError(f"K_rho is numerically singular at rho={rho}")
    return lu


def k_solve(w: WeightMatrix, rho, v, *, trans=False):
    """Solve ``K_rho u = v`` (or ``K_rho^T u = v``) by pivoted LU."""
    lu = _lu(w, rho)
    return linalg.lu_solve(lu, np.asarray(v, dtype=float), trans=int(trans), check_finite=False)


def k_inverse(w: WeightMatrix, rho):
    return k_solve(w, rho, np.eye(w.n))


def z_matrix(w: WeightMatrix, rho):
    """``Z_rho = W K_rho^{-1}``, by a transposed solve rather than a series."""
    # Z K = W  <=>  K^T Z^T = W^T
    return k_solve(w, rho, w.w.T, trans=True).T


def log_det_k(w: WeightMatrix, rho) -> float:
    """``log det K_rho`` from a pivoted LU factorization."""
    lu, piv = _lu(w, rho)
    d = np.diag(lu)
    sign = (-1) ** int(np.sum(piv != np.arange(piv.size))) * np.prod(np.sign(d))
    if sign <= 0:
        raise DomainError(
            f"det K_rho <= 0 at rho={rho}; the spectral radius estimate is inconsistent"
        )
    return float(np.sum(np.log(np.abs(d))))


def _rank_check(kx, what="K_rho X"):
    if kx.shape[1] == 0:
        return
    s = np.linalg.svd(kx, compute_uv=False)
    if not np.all(np.isfinite(s)) or s[-1] <= kx.shape[0] * np.finfo(float).eps * s[0]:
        raise DesignDegeneracyError(f"{what} is rank deficient (singular values {s[-1]:.3g} / {s[0]:.3g})")


def orthonormal_basis(kx):
    """Thin QR ``kx = Q R`` after a rank check; returns ``(Q, R)``."""
    kx = np.asarray(kx, dtype=float)
    _rank_check(kx)
    if kx.shape[1] == 0:
        return np.zeros((kx.shape[0], 0)), np.zeros((0, 0))
    q, r = np.linalg.qr(kx, mode="reduced")
    return q, r


@dataclass(frozen=True, eq=False)
class DisturbanceModel:
    """Design matrix ``X`` (n x m, full column rank, ``m < n``) with weights ``W``.

    ``m = 0`` is allowed and means there is no structural element at all,
    so that the projection ``H_rho`` is identically zero.
    """

    x: np.ndarray
    w: WeightMatrix

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] != self.w.n:
            raise ValueError(f"X must have {self.w.n} rows, got shape {x.shape}")
        if x.shape[1] >= x.shape[0]:
            raise ValueError("X needs fewer columns than rows")
        if not np.all(np.isfinite(x)):
            raise ValueError("X must be finite")
        _rank_check(x, "X")
        x = x.copy()
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.x.shape[1]

    @classmethod
    def intercept_only(cls, w: WeightMatrix):
        return cls(np.ones((w.n, 1)), w)

    @classmethod
    def no_structure(cls, w: WeightMatrix):
        return cls(np.zeros((w.n, 0)), w)


@dataclass(frozen=True, eq=False)
class FitAtRho:
    """Least-squares fit of ``M_rho`` at a fixed ``rho``.

    Attributes
    ----------
    rho : float
    beta_hat : ndarray, shape (m,)
    sigma2_hat : float
        ``|nu_residuals|^2 / n``.
    residuals : ndarray, shape (n,)
        ``y - X beta_hat``, which equals ``K^{-1} (I - H) K y``.
    nu_residuals : ndarray, shape (n,)
        ``(I - H_rho) K_rho y``.
    """

    rho: float
    beta_hat: np.ndarray
    sigma2_hat: float
    residuals: np.ndarray
    nu_residuals: np.ndarray


def projection_h(w: WeightMatrix, rho, x):
    """Orthogonal projection ``H_rho`` onto the column span of ``K_rho X``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    q, _ = orthonormal_basis(k_apply(w, rho, x))
    return q @ q.T


def _transformed(model: DisturbanceModel, y, rho):
    """``(Q, R, K y, Q^T K y, nu_hat)`` at ``rho``; shared by the estimators."""
    ky = k_apply(model.w, rho, y)
    q, r = orthonormal_basis(k_apply(model.w, rho, model.x))
    coef = q.T @ ky
    nu = ky - q @ coef
    return q, r, ky, coef, nu


class RhoCache:
    """Per-rho quantities that do not depend on ``y``.

    Replicate loops evaluate the same grid of rho values many times; caching
    the thin QR factor of ``K_rho X`` and ``log det K_rho`` avoids repeating
    the factorizations. Instances are tied to one model.
    """

    def __init__(self, model: DisturbanceModel, maxsize=512):
        self.model = model
        self.maxsize = maxsize
        self._qr = {}
        self._logdet = {}
        self._lock = threading.Lock()

    def _put(self, store, key, value):
        with self._lock:
            if len(store) >= self.maxsize:
                store.pop(next(iter(store)))
            store[key] = value
        return value

    def qr(self, rho):
        rho = float(rho)
        hit = self._qr.get(rho)
        if hit is None:
            hit = self._put(self._qr, rho, orthonormal_basis(k_apply(self.model.w, rho, self.model.x)))
        return hit

    def logdet(self, rho):
        rho = float(rho)
        hit = self._logdet.get(rho)
        if hit is None:
            hit = self._put(self._logdet, rho, log_det_k(self.model.w, rho))
        return hit


def _nu_hat(model: DisturbanceModel, y, rho, cache=None):
    """``((I - H_rho) K_rho y, Q)`` without solving for beta."""
    ky = k_apply(model.w, rho, y)
    q, _ = cache.qr(rho) if cache is not None else orthonormal_basis(k_apply(model.w, rho, model.x))
    return ky - q @ (q.T @ ky), q


def _check_y(model, y):
    y = np.asarray(y, dtype=float)
    if y.shape != (model.n,) or not np.all(np.isfinite(y)):
        raise ValueError(f"y must be a finite vector of length {model.n}")
    return y


def fit_at_rho(model: DisturbanceModel, y, rho) -> FitAtRho:
    y = _check_y(model, y)
    q, r, _, coef, nu = _transformed(model, y, rho)
    beta = linalg.solve_triangular(r, coef) if model.m else np.zeros(0)
    return FitAtRho(
        rho=float(rho),
        beta_hat=beta,
        sigma2_hat=float(nu @ nu) / model.n,
        residuals=y - model.x @ beta,
        nu_residuals=nu,
    )


def simulate(model: DisturbanceModel, beta, sigma, rho, seed):
    """Draw ``y = X beta + K_rho^{-1} nu`` with ``nu ~ N(0, sigma^2 I)``.

    ``seed`` is anything accepted by :func:`numpy.random.default_rng`,
    including an existing ``Generator``.
    """
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.shape != (model.m,):
        raise ValueError(f"beta must have length {model.m}")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    check_rho(model.w, rho)
    rng = np.random.default_rng(seed)
    nu = sigma * rng.standard_normal(model.n)
    return model.x @ beta + k_solve(model.w, rho, nu)


def read_csv_matrix(path, *, header=False, columns=None):
    """Read a comma-separated matrix of decimal reals; one row per vertex."""
    path = Path(path)
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), 1):
            if header and lineno == 1:
                continue
            if not rec or all(not c.strip() for c in rec):
                continue
            try:
                vals = [float(c) for c in rec]
            except ValueError:
                raise FormatError(path, lineno, "comma-separated decimal reals", ",".join(rec)) from None
            if not all(np.isfinite(vals)):
                raise FormatError(path, lineno, "finite values", ",".join(rec))
            if rows and len(vals) != len(rows[0]):
                raise FormatError(path, lineno, f"{len(rows[0])} columns", f"{len(vals)} columns")
            if columns is not None and len(vals) != columns:
                raise FormatError(path, lineno, f"{columns} column(s)", f"{len(vals)} columns")
            rows.append(vals)
    if not rows:
        raise FormatError(path, 1, "at least one data row", "")
    return np.array(rows, dtype=float)


def write_csv_matrix(a, path_or_file, header=None):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    lines = [",".join(header)] if header else []
    lines += [",".join(format(v, ".17g") for v in row) for row in a]
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        Path(path_or_file).write_text(text, encoding="utf-8")
