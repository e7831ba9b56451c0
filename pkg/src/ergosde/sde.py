"""Additive-noise Ito diffusions, Euler-Maruyama integration and training sets.

A model is ``dX = b(X) dt + sigma dW`` with a constant ``d x m`` matrix
``sigma``.  The Euler-Maruyama chain

    X_{n+1} = X_n + delta * b(X_n) + sqrt(delta) * sigma @ xi_n

is simulated from a seeded stream (see :mod:`ergosde.rng`); finite-difference
quotients of the chain give the regression labels used by the estimators.
"""

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Tuple

import numpy as np

from . import rng
from .errors import ConfigError, DivergenceError

EXPLOSION_RADIUS = 1e6
_CHUNK = 1 << 16


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SdeModel:
    """Drift ``b: R^d -> R^d`` plus constant diffusion matrix ``sigma`` (d x m).

    ``drift`` must accept arrays of shape ``(..., d)`` and return the same
    shape.  When the drift is affine, ``b(x) = A x + c``, passing
    ``affine=(A, c)`` lets :func:`simulate` use a compiled recursion.  Any
    other drift may supply ``integrator(x0, delta, kicks, radius)`` returning
    ``(states, first_bad_step or -1)``; it must reproduce the plain recursion.
    """

    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: np.ndarray
    name: str = "custom"
    params: Mapping = field(default_factory=dict)
    affine: Optional[Tuple[np.ndarray, np.ndarray]] = None
    integrator: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        sigma = np.atleast_2d(np.asarray(self.diffusion, dtype=float))
        if sigma.shape[1] > sigma.shape[0]:
            raise ValueError(f"diffusion must be d x m with m <= d, got {sigma.shape}")
        object.__setattr__(self, "diffusion", _readonly(sigma))
        if self.affine is not None:
            A, c = self.affine
            A = np.atleast_2d(np.asarray(A, dtype=float))
            c = np.atleast_1d(np.asarray(c, dtype=float))
            if A.shape != (self.d, self.d) or c.shape != (self.d,):
                raise ValueError("affine part must be (d x d, d)")
            object.__setattr__(self, "affine", (_readonly(A), _readonly(c)))

    @property
    def d(self):
        return self.diffusion.shape[0]

    @property
    def m(self):
        return self.diffusion.shape[1]

    @property
    def sigma2(self):
        """The d x d matrix sigma sigma^T."""
        return self.diffusion @ self.diffusion.T

    def with_diffusion(self, sigma):
        return SdeModel(self.drift, sigma, self.name, self.params, self.affine, self.integrator)


@dataclass(frozen=True)
class EmConfig:
    """Euler-Maruyama settings; ``burn_in`` defaults to 10% of ``n_steps``."""

    delta: float
    n_steps: int
    burn_in: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", self.n_steps // 10)
        if not 0 <= self.burn_in < self.n_steps:
            raise ValueError(f"burn_in must lie in [0, n_steps), got {self.burn_in}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray  # (n_steps + 1, d)
    delta: float
    seed: int = 0

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if not np.all(np.isfinite(s)):
            raise ValueError("trajectory contains non-finite states")
        object.__setattr__(self, "states", _readonly(s))

    @property
    def n_steps(self):
        return self.states.shape[0] - 1

    @property
    def d(self):
        return self.states.shape[1]


@dataclass(frozen=True)
class TrainingSet:
    points: np.ndarray  # (N, d)
    labels: np.ndarray  # (N, d)
    delta: float

    def __post_init__(self):
        x = np.asarray(self.points, dtype=float)
        y = np.asarray(self.labels, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if y.ndim == 1:
            y = y[:, None]
        if x.shape[0] != y.shape[0]:
            raise ValueError("points and labels must have the same number of rows")
        if x.shape[0] < 1:
            raise ValueError("a training set needs at least one sample")
        object.__setattr__(self, "points", _readonly(x))
        object.__setattr__(self, "labels", _readonly(y))

    @property
    def N(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]


def em_step(model, x, delta, xi):
    """One Euler-Maruyama step ``x + delta b(x) + sqrt(delta) sigma xi``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if x.shape != (model.d,):
        raise ValueError(f"state has shape {x.shape}, model dimension is {model.d}")
    if xi.shape != (model.m,):
        raise ValueError(f"noise has shape {xi.shape}, model noise dimension is {model.m}")
    if not delta > 0:
        raise ValueError("delta must be positive")
    return x + delta * np.asarray(model.drift(x)) + np.sqrt(delta) * (model.diffusion @ xi)


def draw_noise(cfg, m, path=0):
    """The ``(n_steps, m)`` standard normal draws :func:`simulate` uses for ``path``."""
    gen = rng.stream(cfg.seed, path)
    out = np.empty((cfg.n_steps, m))
    for start in range(0, cfg.n_steps, _CHUNK):
        stop = min(start + _CHUNK, cfg.n_steps)
        out[start:stop] = rng.gaussian(gen, (stop - start, m))
    return out


def simulate(model, x0, cfg, path=0, noise=None):
    """Run ``cfg.n_steps`` Euler-Maruyama steps from ``x0``.

    The Gaussian draws come from stream ``(cfg.seed, path)`` unless an explicit
    ``(n_steps, m)`` array ``noise`` is given.  Raises :class:`DivergenceError`
    when a state is non-finite or its norm exceeds ``EXPLOSION_RADIUS``.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (model.d,):
        raise ValueError(f"x0 has shape {x0.shape}, model dimension is {model.d}")
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    if noise is None:
        noise = draw_noise(cfg, model.m, path)
    else:
        noise = np.asarray(noise, dtype=float).reshape(cfg.n_steps, model.m)
    kicks = np.sqrt(cfg.delta) * (noise @ model.diffusion.T)

    if model.affine is not None:
        A, c = model.affine
        states, bad = _affine_em(x0, A, c, cfg.delta, kicks, EXPLOSION_RADIUS)
    elif model.integrator is not None:
        states, bad = model.integrator(x0, cfg.delta, kicks, EXPLOSION_RADIUS)
    else:
        states, bad = _generic_em(model.drift, x0, cfg.delta, kicks)
    if bad >= 0:
        raise DivergenceError(bad)
    return Trajectory(states, cfg.delta, cfg.seed)


def _generic_em(drift, x0, delta, kicks):
    n = kicks.shape[0]
    states = np.empty((n + 1, x0.shape[0]))
    states[0] = x0
    x = x0.copy()
    with np.errstate(all="ignore"):
        for start in range(0, n, 4096):
            stop = min(start + 4096, n)
            for k in range(start, stop):
                x = x + delta * drift(x) + kicks[k]
                states[k + 1] = x
            block = states[start + 1 : stop + 1]
            norms = np.sqrt(np.sum(block * block, axis=1))
            bad = ~(norms <= EXPLOSION_RADIUS)
            if bad.any():
                return states, start + 1 + int(np.argmax(bad))
    return states, -1


try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None


def _affine_em_py(x0, A, c, delta, kicks, radius):
    n, d = kicks.shape
    states = np.empty((n + 1, d))
    states[0] = x0
    x = x0.copy()
    for k in range(n):
        x = x + delta * (A @ x + c) + kicks[k]
        states[k + 1] = x
        r = 0.0
        for i in range(d):
            r += x[i] * x[i]
        if not np.sqrt(r) <= radius:
            return states, k + 1
    return states, -1


if njit is not None:

    @njit(cache=True, nogil=True)
    def _affine_em_nb(x0, A, c, delta, kicks, radius):
        n, d = kicks.shape
        states = np.empty((n + 1, d))
        x = x0.copy()
        states[0] = x
        y = np.empty(d)
        for k in range(n):
            for i in range(d):
                acc = c[i]
                for j in range(d):
                    acc += A[i, j] * x[j]
                y[i] = x[i] + delta * acc + kicks[k, i]
            r = 0.0
            for i in range(d):
                x[i] = y[i]
                states[k + 1, i] = y[i]
                r += y[i] * y[i]
            if not np.sqrt(r) <= radius:
                return states, k + 1
        return states, -1

    def _affine_em(x0, A, c, delta, kicks, radius):
        return _affine_em_nb(
            np.ascontiguousarray(x0), np.ascontiguousarray(A), np.ascontiguousarray(c),
            float(delta), np.ascontiguousarray(kicks), float(radius),
        )

else:  # pragma: no cover
    _affine_em = _affine_em_py


def finite_difference_labels(traj):
    """Pair each state with the difference quotient ``(X_{n+1} - X_n) / delta``."""
    s = traj.states
    if s.shape[0] < 2:
        raise ValueError("need at least two states to form a label")
    return TrainingSet(s[:-1], (s[1:] - s[:-1]) / traj.delta, traj.delta)


def subsample(ts, stride=1, burn_in=0):
    """Keep rows ``burn_in, burn_in + stride, ...``."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if not 0 <= burn_in < ts.N:
        raise ValueError(f"burn_in must lie in [0, N={ts.N})")
    idx = np.arange(burn_in, ts.N, stride)
    if idx.size == 0:
        raise ValueError("subsampling left no rows")
    return TrainingSet(ts.points[idx], ts.labels[idx], ts.delta)


# --- benchmark catalog -------------------------------------------------------

#: ``(a, d)`` with ``<b(x), x> <= a - d |x|^2`` for the benchmark drifts
#: (OU's ``d`` is theta; ``a`` is any positive number there).
DISSIPATIVE_CONSTANTS = {
    "ou": lambda p: (1e-12, float(p["theta"])),
    "double_well": lambda p: (1.0, 1.0),
    "gradient2d": lambda p: (1.0, 1.0),
}


def _sigma_matrix(sigma, d, name):
    s = np.asarray(sigma, dtype=float)
    if s.ndim == 0:
        return float(s) * np.eye(d)
    s = np.atleast_2d(s)
    if s.shape[0] != d:
        raise ConfigError(f"{name}: sigma must have {d} rows, got shape {s.shape}")
    return s


def _require(params, name, *keys):
    missing = [k for k in keys if k not in params]
    if missing:
        raise ConfigError(f"benchmark '{name}' is missing parameter(s): {', '.join(missing)}")


def make_benchmark_model(name, params=None):
    """Build one of the catalogued dissipative benchmarks.

    ``ou``
        ``b(x) = -theta x + shift``; params ``theta``, ``sigma`` and optional
        ``d`` (default 1) and ``shift`` (default 0).
    ``double_well``
        ``b(x) = x - x^3`` in one dimension; param ``sigma``.
    ``gradient2d``
        ``b(x) = -grad U`` with ``U(x) = |x|^4/4 - x_1^2/2 + x_2^2/2``, i.e.
        ``b(x) = -|x|^2 x + (x_1, -x_2)``; a double well along ``x_1``.  Param
        ``sigma``.

    ``sigma`` may be a scalar (times the identity) or a ``d x m`` matrix.
    """
    params = dict(params or {})
    if name == "ou":
        _require(params, name, "theta", "sigma")
        d = int(params.get("d", 1))
        theta = float(params["theta"])
        shift = np.broadcast_to(np.asarray(params.get("shift", 0.0), dtype=float), (d,)).copy()
        sigma = _sigma_matrix(params["sigma"], d, name)

        def drift(x, theta=theta, shift=shift):
            return -theta * x + shift

        return SdeModel(drift, sigma, name, params, affine=(-theta * np.eye(d), shift))
    if name == "double_well":
        _require(params, name, "sigma")
        sigma = _sigma_matrix(params["sigma"], 1, name)
        return SdeModel(lambda x: x - x**3, sigma, name, params)
    if name == "gradient2d":
        _require(params, name, "sigma")
        sigma = _sigma_matrix(params["sigma"], 2, name)
        flip = np.array([1.0, -1.0])

        def drift(x):
            r2 = np.sum(x * x, axis=-1, keepdims=True)
            return -r2 * x + flip * x

        return SdeModel(drift, sigma, name, params)
    raise ConfigError(f"unknown benchmark model '{name}' (known: ou, double_well, gradient2d)")
