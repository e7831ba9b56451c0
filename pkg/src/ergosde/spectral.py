"""Kernel spectral regression.

Given samples ``x_1..x_N`` and labels ``y_i``, the empirical kernel
``K_N[i, j] = K(x_i, x_j) / N`` is diagonalised, its eigenvectors are scaled
to ``|u_j|^2 = N`` (unit norm under the empirical measure) and the order-M
estimate is

    b(x) = sum_{j<=M} (1/lam_j) <y, u_j>_N <K_x, u_j>_N,

where ``<a, b>_N = (1/N) a^T b``.  Because the estimate is linear in the
kernel sections it collapses to ``b(x) = sum_i w_i K(x_i, x)`` with
``w = (1/N) U_M c``, which is how prediction is carried out.

Dense eigendecomposition costs O(N^3) time and O(N^2) memory; N around 10^4 is
the practical ceiling.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, RankError
from .kernels import as_query, kernel_from_dict

RANK_TOL = 1e-10
RESIDUAL_TOL = 1e-8
_BLOCK = 2048


@dataclass(frozen=True)
class EmpiricalKernel:
    matrix: np.ndarray  # (N, N), entries K(x_i, x_j) / N
    points: np.ndarray  # (N, d)

    @property
    def N(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class EigenSystem:
    eigenvalues: np.ndarray  # (r,), descending, positive
    eigenvectors: np.ndarray  # (N, r), columns with |u|^2 = N

    @property
    def rank(self):
        return self.eigenvalues.shape[0]

    @property
    def N(self):
        return self.eigenvectors.shape[0]


def _as_points(points):
    x = np.asarray(points, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def assemble_empirical_kernel(points, kernel):
    """``K(x_i, x_j) / N``, filled from the upper triangle so it is exactly symmetric."""
    x = _as_points(points)
    N = x.shape[0]
    if N < 1:
        raise ValueError("need at least one point")
    G = np.asarray(kernel(x, x), dtype=float)
    bad = ~np.isfinite(G)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise NumericError(f"kernel value K(x_{i}, x_{j}) is not finite")
    upper = np.triu(G)
    K = (upper + np.triu(G, 1).T) / N
    return EmpiricalKernel(K, x)


def _fix_signs(V):
    # the first entry of largest magnitude in each column is made positive
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


def eigendecompose(ek, rank_tol=RANK_TOL):
    """Eigenpairs of the empirical kernel above ``rank_tol * lam_max``, descending."""
    K = ek.matrix if isinstance(ek, EmpiricalKernel) else np.asarray(ek, dtype=float)
    N = K.shape[0]
    try:
        w, Q = np.linalg.eigh(K)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"symmetric eigensolver failed: {exc}") from None
    order = np.argsort(-w, kind="stable")
    w, Q = w[order], Q[:, order]
    lam_max = w[0] if N else 0.0
    if lam_max <= 0:
        return EigenSystem(np.empty(0), np.empty((N, 0)))
    keep = w > rank_tol * lam_max
    w, Q = w[keep], Q[:, keep]
    resid = np.linalg.norm(K @ Q - Q * w, axis=0)
    if resid.size and resid.max() > RESIDUAL_TOL * lam_max:
        raise NumericError(f"eigen residual {resid.max():.3e} exceeds tolerance")
    Q = _fix_signs(Q)
    return EigenSystem(w.copy(), np.sqrt(N) * Q)


def eigendecompose_features(Phi, rank_tol=RANK_TOL):
    """Eigenpairs of ``K_N = Phi Phi^T / N`` from the thin SVD of ``Phi / sqrt(N)``.

    Exact for kernels with a finite feature map and O(N p^2) instead of O(N^3).
    """
    Phi = np.asarray(Phi, dtype=float)
    N = Phi.shape[0]
    try:
        U, s, _ = np.linalg.svd(Phi / np.sqrt(N), full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD failed: {exc}") from None
    w = s**2
    if w.size == 0 or w[0] <= 0:
        return EigenSystem(np.empty(0), np.empty((N, 0)))
    keep = w > rank_tol * w[0]
    return EigenSystem(w[keep].copy(), np.sqrt(N) * _fix_signs(U[:, keep]))


def nystrom_extend(es, kernel, points, j, x):
    """``v_j(x) = (1 / (N sqrt(lam_j))) sum_i (u_j)_i K(x_i, x)`` for 0-based ``j``.

    ``x`` may be a single point or a stack of points.
    """
    if not 0 <= j < es.rank:
        raise IndexError(f"eigen index {j} outside [0, {es.rank})")
    pts = _as_points(points)
    xs, single = as_query(x, pts.shape[1])
    Kx = kernel(pts, xs)  # (N, n)
    v = es.eigenvectors[:, j] @ Kx / (es.N * np.sqrt(es.eigenvalues[j]))
    return float(v[0]) if single else v


@dataclass(frozen=True)
class SpectralEstimator:
    kernel: object
    points: np.ndarray  # (N, d)
    M: int
    eigenvalues: np.ndarray  # (M,)
    eigenvectors: np.ndarray  # (N, M)
    coefficients: np.ndarray  # (M, p), c_j = <y, u_j>_N / lam_j
    label_rms: np.ndarray  # (p,), |y|_N per output component
    rank: int
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def N(self):
        return self.points.shape[0]

    @property
    def weights(self):
        """Kernel-section weights ``w`` with ``b(x) = sum_i w_i K(x_i, x)``."""
        return self.eigenvectors @ self.coefficients / self.N

    def predict(self, x):
        return predict(self, x)

    __call__ = predict

    def affine_form(self):
        """``(A, c)`` with ``b(x) = A x + c`` for constant and poly1 kernels, else None."""
        name = self.kernel.name
        w = self.weights
        d = self.points.shape[1]
        if w.shape[1] != d:
            return None
        if name == "poly1":
            return (w.T @ self.points, self.kernel.offset * w.sum(axis=0))
        if name == "constant":
            return (np.zeros((d, d)), self.kernel.value * w.sum(axis=0))
        return None

    def to_json(self):
        return json.dumps(
            {
                "type": "spectral",
                "kernel": self.kernel.to_dict(),
                "M": self.M,
                "rank": self.rank,
                "points": self.points.tolist(),
                "eigenvalues": self.eigenvalues.tolist(),
                "eigenvectors": self.eigenvectors.tolist(),
                "coefficients": self.coefficients.tolist(),
                "label_rms": self.label_rms.tolist(),
                "diagnostics": self.diagnostics,
            }
        )

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        if doc.get("type") != "spectral":
            raise ValueError("not a spectral estimator document")
        return cls(
            kernel=kernel_from_dict(doc["kernel"]),
            points=np.array(doc["points"], dtype=float).reshape(-1, len(doc["points"][0])),
            M=int(doc["M"]),
            eigenvalues=np.array(doc["eigenvalues"], dtype=float),
            eigenvectors=np.array(doc["eigenvectors"], dtype=float).reshape(len(doc["points"]), -1),
            coefficients=np.array(doc["coefficients"], dtype=float).reshape(int(doc["M"]), -1),
            label_rms=np.array(doc["label_rms"], dtype=float),
            rank=int(doc["rank"]),
            diagnostics=doc.get("diagnostics", {}),
        )


def fit_spectral(ts, kernel, M, rank_tol=RANK_TOL, es=None):
    """Order-``M`` spectral regression of ``ts.labels`` on ``ts.points``.

    Each output component is fitted separately with the same eigenpairs.  A
    precomputed :class:`EigenSystem` for the same points may be passed as ``es``.
    """
    x = _as_points(ts.points)
    y = np.asarray(ts.labels, dtype=float)
    y = y[:, None] if y.ndim == 1 else y
    if not np.all(np.isfinite(y)):
        raise NumericError("labels must be finite")
    if M < 1:
        raise ValueError("order M must be >= 1")
    if es is None:
        if hasattr(kernel, "features"):
            es = eigendecompose_features(kernel.features(x), rank_tol)
        else:
            es = eigendecompose(assemble_empirical_kernel(x, kernel), rank_tol)
    if M > es.rank:
        raise RankError(M, es.rank)
    N = x.shape[0]
    lam = es.eigenvalues[:M].copy()
    U = es.eigenvectors[:, :M].copy()
    coef = (U.T @ y) / N / lam[:, None]
    est = SpectralEstimator(
        kernel=kernel,
        points=x.copy(),
        M=int(M),
        eigenvalues=lam,
        eigenvectors=U,
        coefficients=coef,
        label_rms=np.sqrt(np.mean(y * y, axis=0)),
        rank=es.rank,
    )
    est.diagnostics.update(_diagnostics(est, es, y))
    return est


def predict(est, x):
    """Evaluate the estimate at one point ``(d,)`` or a stack ``(n, d)``."""
    xs, single = as_query(x, est.points.shape[1])
    w = est.weights
    if hasattr(est.kernel, "features"):
        out = est.kernel.features(xs) @ (est.kernel.features(est.points).T @ w)
    else:
        out = np.empty((xs.shape[0], w.shape[1]))
        for start in range(0, xs.shape[0], _BLOCK):
            out[start : start + _BLOCK] = est.kernel(xs[start : start + _BLOCK], est.points) @ w
    return out[0] if single else out


def lipschitz_bound(est, L_values=None):
    """``(sum_j lam_j^-2)^(1/2) |y|_N |L|_N`` per component, combined in the Euclidean norm.

    ``L_values`` defaults to the kernel's closed-form ``L(x_i)``; kernels
    without one raise :class:`UnsupportedKernelError`.
    """
    if L_values is None:
        L_values = est.kernel.grad_sup(est.points)
    L = np.asarray(L_values, dtype=float)
    L_rms = np.sqrt(np.mean(L * L))
    spec = np.sqrt(np.sum(est.eigenvalues ** -2.0))
    per_comp = spec * est.label_rms * L_rms
    return float(np.sqrt(np.sum(per_comp**2)))


def _diagnostics(est, es, y):
    fitted = est.eigenvectors @ (est.eigenvalues[:, None] * est.coefficients)
    resid = y - fitted
    diag = {
        "noise_floor": np.mean(resid**2, axis=0).tolist(),
        "rank": int(es.rank),
        "eigen_gap": float(es.eigenvalues[est.M - 1] - es.eigenvalues[est.M]) if est.M < es.rank else None,
        "decay_exponent": _decay_exponent(es.eigenvalues),
        "rkhs_norm": rkhs_norms(est).tolist(),
        "growth_constant": growth_constant(est),
        "growth_audit": growth_audit(est),
    }
    return diag


def _decay_exponent(lam):
    # least-squares r in lam_i ~ i^(-r); None when fewer than three eigenvalues
    if lam.size < 3:
        return None
    i = np.arange(1, lam.size + 1)
    slope = np.polyfit(np.log(i), np.log(lam), 1)[0]
    return float(-slope)


def rkhs_norms(est):
    """RKHS norm of each output component, ``sqrt(sum_j lam_j c_j^2)``."""
    return np.sqrt(np.sum(est.eigenvalues[:, None] * est.coefficients**2, axis=0))


def growth_constant(est):
    """``C`` with ``|b(x)| <= C sqrt(1 + |x|^2)`` for every ``x``.

    Uses ``|b(x)| <= |b|_H sqrt(K(x, x))`` and ``K(x, x) <= C_K (1 + |x|^2)``;
    None for kernels without a known linear-growth constant ``C_K``.
    """
    if est.kernel.linear_growth is None:
        return None
    return float(np.sqrt(est.kernel.linear_growth) * np.linalg.norm(rkhs_norms(est)))


def growth_audit(est, n_audit=2000, seed=0):
    """Largest ``|b(x)| / sqrt(1 + |x|^2)`` over (up to ``n_audit``) samples and
    ``n_audit`` random points in the ball of radius ``10 max |x_i|``."""
    d = est.points.shape[1]
    R = 10.0 * max(float(np.max(np.linalg.norm(est.points, axis=1))), 1e-12)
    gen = np.random.default_rng(seed)
    x = est.points[gen.permutation(est.N)[:n_audit]]
    g = gen.standard_normal((n_audit, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    g *= R * gen.random((n_audit, 1)) ** (1.0 / d)
    audit = np.vstack([x, g, R * np.eye(d), -R * np.eye(d)])
    vals = np.linalg.norm(predict(est, audit), axis=1)
    return float(np.max(vals / np.sqrt(1.0 + np.sum(audit**2, axis=1))))
