"""Random ReLU feature regression.

Inner weights are sampled once and frozen: rows ``A_i`` uniform in the d-ball
of radius ``T`` and offsets ``zeta_i`` uniform on ``[-D T, D T]``.  Only the
outer weights ``W`` are fitted, by (ridge) least squares on the design matrix
``Phi[i, j] = max(0, <A_j, x_i> + zeta_j)``.  Predictions are clipped to
``[-K2 sqrt(1 + D^2), K2 sqrt(1 + D^2)]`` and vanish outside the ball of
radius ``D`` unless the estimator is in ``"linear"`` extension mode, where a
point outside the ball takes the value at the nearest boundary point.
"""

import json
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import rng
from .kernels import as_query

PINV_RTOL = 1e-10
EXTENSIONS = ("zero", "linear")


@dataclass(frozen=True)
class ReluFeatureMap:
    A: np.ndarray  # (M, d)
    zeta: np.ndarray  # (M,)
    T: float
    D: float
    seed: int = 0

    @property
    def M(self):
        return self.A.shape[0]

    @property
    def d(self):
        return self.A.shape[1]


def default_radius(M, d):
    return float(M) ** (1.0 / (d + 3))


def default_truncation(points, factor=1.05):
    """``factor * max |x_i|``, never below 1."""
    x = np.asarray(points, dtype=float)
    x = x[:, None] if x.ndim == 1 else x
    return max(1.0, factor * float(np.max(np.linalg.norm(x, axis=1))))


def sample_features(M, d, D, seed=0, T=None):
    """Draw a feature map; ``T`` defaults to ``M ** (1 / (d + 3))``."""
    if M < 1 or d < 1:
        raise ValueError("M and d must be >= 1")
    if not D >= 1:
        raise ValueError(f"truncation radius D must be >= 1, got {D}")
    T = default_radius(M, d) if T is None else float(T)
    gen = rng.stream(seed, 0)
    g = rng.gaussian(gen, (M, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    u = gen.random((M, 1))
    A = T * u ** (1.0 / d) * g / norms
    zeta = D * T * (2.0 * gen.random(M) - 1.0)
    return ReluFeatureMap(A, zeta, T, float(D), int(seed))


def design_matrix(fm, points):
    x = np.asarray(points, dtype=float)
    x = x[:, None] if x.ndim == 1 else x
    if x.shape[1] != fm.d:
        raise ValueError(f"points have dimension {x.shape[1]}, feature map expects {fm.d}")
    return np.maximum(0.0, x @ fm.A.T + fm.zeta)


@dataclass(frozen=True)
class RffEstimator:
    fm: ReluFeatureMap
    W: np.ndarray  # (M, p)
    clip_bound: float
    K2: float
    extension: str = "zero"

    @property
    def D(self):
        return self.fm.D

    def raw(self, x):
        """The unclipped, untruncated feature expansion."""
        xs, single = as_query(x, self.fm.d)
        out = design_matrix(self.fm, xs) @ self.W
        return out[0] if single else out

    def predict(self, x):
        return predict_rff(self, x)

    __call__ = predict

    def integrator(self):
        """Compiled Euler-Maruyama recursion for this drift (see :class:`SdeModel`)."""
        args = (
            np.ascontiguousarray(self.fm.A), np.ascontiguousarray(self.fm.zeta),
            np.ascontiguousarray(self.W), float(self.clip_bound), float(self.fm.D),
            self.extension == "linear",
        )

        def run(x0, delta, kicks, radius):
            return _relu_em(np.ascontiguousarray(x0, dtype=float), *args, float(delta),
                            np.ascontiguousarray(kicks), float(radius))

        return run

    def with_extension(self, extension):
        return RffEstimator(self.fm, self.W, self.clip_bound, self.K2, extension)

    def to_json(self):
        return json.dumps(
            {
                "type": "rff",
                "seed": self.fm.seed,
                "M": self.fm.M,
                "d": self.fm.d,
                "T": self.fm.T,
                "D": self.fm.D,
                "zeta": self.fm.zeta.tolist(),
                "A": self.fm.A.tolist(),
                "W": self.W.tolist(),
                "clip_bound": self.clip_bound,
                "K2": self.K2,
                "extension": self.extension,
            }
        )

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        if doc.get("type") != "rff":
            raise ValueError("not a random-feature estimator document")
        M, d = int(doc["M"]), int(doc["d"])
        fm = ReluFeatureMap(
            np.array(doc["A"], dtype=float).reshape(M, d),
            np.array(doc["zeta"], dtype=float).reshape(M),
            float(doc["T"]),
            float(doc["D"]),
            int(doc["seed"]),
        )
        W = np.array(doc["W"], dtype=float).reshape(M, -1)
        return cls(fm, W, float(doc["clip_bound"]), float(doc["K2"]), doc["extension"])


def fit_rff(fm, ts, ridge=0.0, extension="zero"):
    """Least-squares outer weights.

    ``ridge > 0`` solves ``(Phi^T Phi + ridge I) W = Phi^T y``; ``ridge == 0``
    uses the pseudo-inverse of ``Phi`` with singular values below
    ``1e-10 * s_max`` dropped.
    """
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    if extension not in EXTENSIONS:
        raise ValueError(f"extension must be one of {EXTENSIONS}")
    x = np.asarray(ts.points, dtype=float)
    y = np.asarray(ts.labels, dtype=float)
    y = y[:, None] if y.ndim == 1 else y
    Phi = design_matrix(fm, x)
    if ridge > 0:
        G = Phi.T @ Phi
        G[np.diag_indices_from(G)] += ridge
        W = np.linalg.solve(G, Phi.T @ y)
    else:
        U, s, Vt = np.linalg.svd(Phi, full_matrices=False)
        keep = s > PINV_RTOL * (s[0] if s.size else 0.0)
        W = Vt[keep].T @ ((U[:, keep].T @ y) / s[keep, None])
    x2 = x[:, None] if x.ndim == 1 else x
    K2 = float(np.max(np.linalg.norm(y, axis=1) / np.sqrt(1.0 + np.sum(x2 * x2, axis=1))))
    clip = K2 * np.sqrt(1.0 + fm.D**2)
    return RffEstimator(fm, W, float(clip), K2, extension)


def predict_rff(est, x):
    xs, single = as_query(x, est.fm.d)
    r = np.linalg.norm(xs, axis=1)
    outside = r > est.fm.D
    if est.extension == "linear":
        xs = xs.copy()
        xs[outside] *= (est.fm.D / r[outside])[:, None]
    out = np.clip(design_matrix(est.fm, xs) @ est.W, -est.clip_bound, est.clip_bound)
    if est.extension == "zero":
        out[outside] = 0.0
    return out[0] if single else out


def lipschitz_bound_rff(est):
    """``|W| |A|_F`` per output component, combined in the Euclidean norm."""
    return float(np.linalg.norm(est.W) * np.linalg.norm(est.fm.A))


def frobenius_concentration(fm, tau):
    """Mean, variance term and Bernstein tail bound for ``|A|_F^2``.

    With ``mu = d T^2 / (d + 2)`` and ``s2 = 4 d T^4 / ((d + 4)(d + 2)^2)`` the
    bound on ``P(| |A|_F^2 - M mu | > tau)`` is
    ``2 exp(-tau^2 / (2 M s2 + (2/3) mu tau))``.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    d, T, M = fm.d, fm.T, fm.M
    mu = d * T**2 / (d + 2)
    s2 = 4.0 * d * T**4 / ((d + 4) * (d + 2) ** 2)
    bound = 2.0 * np.exp(-(tau**2) / (2.0 * M * s2 + (2.0 / 3.0) * mu * tau))
    return {
        "mu_A": mu,
        "sigma2_A": s2,
        "mean": M * mu,
        "variance_term": M * s2,
        "prob_bound": float(bound),
    }


@njit(cache=True, nogil=True)
def _relu_em(x0, A, zeta, W, clip, D, linear, delta, kicks, radius):
    n, d = kicks.shape
    M = A.shape[0]
    states = np.empty((n + 1, d))
    x = x0.copy()
    states[0] = x
    z = np.empty(d)
    b = np.empty(d)
    for k in range(n):
        r = 0.0
        for i in range(d):
            r += x[i] * x[i]
        r = np.sqrt(r)
        for i in range(d):
            b[i] = 0.0
        if r <= D or linear:
            s = D / r if r > D else 1.0
            for i in range(d):
                z[i] = x[i] * s
            for j in range(M):
                h = zeta[j]
                for i in range(d):
                    h += A[j, i] * z[i]
                if h > 0.0:
                    for i in range(d):
                        b[i] += h * W[j, i]
            for i in range(d):
                b[i] = min(max(b[i], -clip), clip)
        r = 0.0
        for i in range(d):
            x[i] = x[i] + delta * b[i] + kicks[k, i]
            states[k + 1, i] = x[i]
            r += x[i] * x[i]
        if not np.sqrt(r) <= radius:
            return states, k + 1
    return states, -1
