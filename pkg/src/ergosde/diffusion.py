"""Diffusion-matrix estimation from regression residuals.

The estimate of ``sigma sigma^T`` is the scaled residual covariance

    S = (delta / N) sum_i (y_i - b_eps(x_i)) (y_i - b_eps(x_i))^T.

A simulatable factor ``sigma_eps`` with ``sigma_eps sigma_eps^T ~ S`` is built
either against a known ``sigma`` (thin SVD ``sigma = U Lam V^T``, project
``Sig = U^T S U``, Cholesky ``Sig = L L^T``, ``sigma_eps = U L V^T``) or, with no
reference, from the top-m eigenpairs of ``S``.  Only ``sigma_eps sigma_eps^T``
is statistically meaningful; the factor itself is one choice among many.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegeneracyError

SYM_TOL = 1e-10


@dataclass(frozen=True)
class DiffusionEstimate:
    sigma2_hat: np.ndarray  # (d, d)
    N_used: int
    delta: float

    @property
    def d(self):
        return self.sigma2_hat.shape[0]

    def summary(self):
        w = np.linalg.eigvalsh(self.sigma2_hat)
        return {"trace": float(np.trace(self.sigma2_hat)), "eigenvalues": w[::-1].tolist()}


@dataclass(frozen=True)
class SigmaFactor:
    sigma_eps: np.ndarray  # (d, m)
    target: np.ndarray  # the (projected) estimate that sigma_eps reproduces
    U: Optional[np.ndarray] = None
    Lam: Optional[np.ndarray] = None
    V: Optional[np.ndarray] = None
    Sigma_eps: Optional[np.ndarray] = None  # U^T S U
    L_eps: Optional[np.ndarray] = None

    @property
    def m(self):
        return self.sigma_eps.shape[1]


def estimate_diffusion(ts, drift_estimate):
    """``(delta / N) sum_i r_i r_i^T`` with residuals ``r_i = y_i - drift_estimate(x_i)``."""
    if ts.N < 2:
        raise ValueError("need at least two samples to estimate the diffusion")
    pred = np.asarray(drift_estimate(ts.points), dtype=float).reshape(ts.labels.shape)
    r = ts.labels - pred
    S = (ts.delta / ts.N) * (r.T @ r)
    S = 0.5 * (S + S.T)
    return DiffusionEstimate(S, ts.N, ts.delta)


def _check_symmetric(a, name):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    if np.max(np.abs(a - a.T)) > SYM_TOL * scale:
        raise ValueError(f"{name} is not symmetric")
    return a


def spectral_error(est, truth):
    """``|truth - est|_2`` for symmetric matrices (largest absolute eigenvalue)."""
    est = est.sigma2_hat if isinstance(est, DiffusionEstimate) else est
    a = _check_symmetric(est, "estimate")
    b = _check_symmetric(truth, "truth")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    diff = b - a
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.T)))))


def _sign_columns(U):
    idx = np.argmax(np.abs(U), axis=0)
    s = np.sign(U[idx, np.arange(U.shape[1])])
    s[s == 0] = 1.0
    return s


def factor_sigma(est, sigma_true=None, m=None):
    """Build ``sigma_eps`` from a diffusion estimate.

    With ``sigma_true`` (d x m, full column rank) the SVD/Cholesky construction
    is used; SVD columns are signed so each column of ``U`` has its
    largest-magnitude entry positive.  Without it, ``m`` (default d) top
    eigenpairs of the estimate are used.
    """
    S = est.sigma2_hat if isinstance(est, DiffusionEstimate) else np.asarray(est, dtype=float)
    S = _check_symmetric(S, "estimate")
    if sigma_true is not None:
        sig = np.atleast_2d(np.asarray(sigma_true, dtype=float))
        if sig.shape[0] != S.shape[0]:
            raise ValueError(f"sigma_true has {sig.shape[0]} rows, estimate is {S.shape[0]}x{S.shape[0]}")
        U, lam, Vt = np.linalg.svd(sig, full_matrices=False)
        if lam[-1] <= 1e-12 * lam[0]:
            raise ValueError("sigma_true must have full column rank")
        s = _sign_columns(U)
        U, Vt = U * s, Vt * s[:, None]
        Sig = U.T @ S @ U
        Sig = 0.5 * (Sig + Sig.T)
        try:
            L = np.linalg.cholesky(Sig)
        except np.linalg.LinAlgError:
            raise DegeneracyError(
                "projected diffusion estimate is not positive definite; use more samples or a smaller step"
            ) from None
        sigma_eps = U @ L @ Vt
        return SigmaFactor(sigma_eps, U @ Sig @ U.T, U, lam, Vt.T, Sig, L)

    m = S.shape[0] if m is None else int(m)
    if not 1 <= m <= S.shape[0]:
        raise ValueError(f"m must lie in [1, {S.shape[0]}]")
    w, Q = np.linalg.eigh(S)
    w, Q = w[::-1][:m], Q[:, ::-1][:, :m]
    lam_max = max(float(w[0]), 0.0)
    if lam_max == 0.0 or w[-1] <= 1e-10 * lam_max:
        raise DegeneracyError(
            f"diffusion estimate has fewer than {m} significant eigenvalues; use more samples or a smaller step"
        )
    Q = Q * _sign_columns(Q)
    sigma_eps = Q * np.sqrt(w)
    return SigmaFactor(sigma_eps, (Q * w) @ Q.T)
