"""One-point and two-point invariant statistics and their error scaling.

Statistics are time averages along a single long Euler-Maruyama path after
burn-in; standard errors come from batch means with ``ceil(sqrt(n))`` batches.
The scaling harnesses drive the base model and every perturbed model with the
same Gaussian increments (common random numbers), so the error at each
``eps`` is the mean of a paired difference series and its standard error is
the batch-means error of that series.
"""

import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, InconclusiveScalingError
from .sde import draw_noise, make_benchmark_model, simulate

NOISE_FLOOR = 3.0


def max_workers():
    """Worker cap from ``ERGOSDE_THREADS`` (default: CPU count)."""
    env = os.environ.get("ERGOSDE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"ERGOSDE_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _map(fn, items):
    items = list(items)
    n = min(max_workers(), len(items))
    if n <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(n) as pool:
        return list(pool.map(fn, items))


# --- observables -------------------------------------------------------------


@dataclass(frozen=True)
class Observable:
    """``f: R^d -> R`` evaluated row-wise on an ``(n, d)`` array."""

    name: str
    f: Callable[[np.ndarray], np.ndarray]

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        X = X[:, None] if X.ndim == 1 else X
        return np.broadcast_to(np.asarray(self.f(X), dtype=float), (X.shape[0],))


def coordinate(k):
    return Observable(f"x{k}", lambda X: X[:, k])


def square(k):
    return Observable(f"x{k}^2", lambda X: X[:, k] ** 2)


def product(j, k):
    return Observable(f"x{j}*x{k}", lambda X: X[:, j] * X[:, k])


def constant(c):
    c = float(c)
    return Observable(f"{c!r}", lambda X: np.full(X.shape[0], c))


_OBS = [
    (re.compile(r"x(\d+)\^2"), lambda m: square(int(m.group(1)))),
    (re.compile(r"x(\d+)\*x(\d+)"), lambda m: product(int(m.group(1)), int(m.group(2)))),
    (re.compile(r"x(\d+)"), lambda m: coordinate(int(m.group(1)))),
]


def parse_observable(spec):
    """``"x0"``, ``"x0^2"``, ``"x0*x1"`` or a number (constant observable)."""
    spec = spec.replace(" ", "")
    for pat, make in _OBS:
        m = pat.fullmatch(spec)
        if m:
            return make(m)
    try:
        return constant(float(spec))
    except ValueError:
        raise ConfigError(f"unknown observable '{spec}'") from None


# --- estimators --------------------------------------------------------------


def batch_means(series, n_batches=None):
    """Mean and batch-means standard error (``ceil(sqrt(n))`` batches by default).

    A trailing remainder that does not fill a batch is left out of the error
    estimate but kept in the mean.
    """
    s = np.asarray(series, dtype=float)
    n = s.shape[0]
    if n == 0:
        raise ValueError("empty series")
    mean = float(np.mean(s))
    b = int(math.ceil(math.sqrt(n))) if n_batches is None else int(n_batches)
    size = n // b if b else 0
    if b < 2 or size < 1:
        return mean, float("nan")
    bm = s[: b * size].reshape(b, size).mean(axis=1)
    return mean, float(np.std(bm, ddof=1) / math.sqrt(b))


def _post(traj, burn_in):
    return traj.states[burn_in:]


def ergodic_average(model, f, cfg, x0=None, ensemble=False, n_paths=1000):
    """Estimate ``pi(f)``.

    Default: time average of ``f`` over the post-burn-in states of one path.
    ``ensemble=True`` instead averages ``f`` at the final state of ``n_paths``
    independent paths (streams ``(cfg.seed, path)``).
    """
    x0 = np.zeros(model.d) if x0 is None else x0
    if ensemble:
        finals = _map(lambda p: simulate(model, x0, cfg, path=p).states[-1], range(n_paths))
        vals = f(np.array(finals))
        return {"estimate": float(np.mean(vals)), "std_error": float(np.std(vals, ddof=1) / math.sqrt(n_paths))}
    traj = simulate(model, x0, cfg)
    est, se = batch_means(f(_post(traj, cfg.burn_in)))
    return {"estimate": est, "std_error": se}


@dataclass
class TwoPointReport:
    lags: np.ndarray  # integer lags 0..max_lag
    delta: float
    values: np.ndarray
    std_errors: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def times(self):
        return self.lags * self.delta

    def rows(self):
        return [(int(n), float(n * self.delta), float(v), float(s)) for n, v, s in zip(self.lags, self.values, self.std_errors)]


def lagged_products(a, b, n):
    """``a[k + n] * b[k]`` for every admissible ``k``."""
    L = a.shape[0]
    return a[n:] * b[: L - n]


def correlation_from_states(states, A, B, max_lag, delta, burn_in=0):
    post = states[burn_in:]
    if not 0 <= max_lag < post.shape[0]:
        raise ValueError(f"max_lag={max_lag} needs more than {post.shape[0]} post-burn-in states")
    a, b = A(post), B(post)
    lags = np.arange(max_lag + 1)
    vals, ses = np.empty(lags.size), np.empty(lags.size)
    for n in lags:
        vals[n], ses[n] = batch_means(lagged_products(a, b, n))
    return TwoPointReport(lags, delta, vals, ses)


def two_point_correlation(model, A, B, cfg, max_lag, x0=None):
    """``k(n delta) = mean_k A(X_{k+n}) B(X_k)`` over post-burn-in ``k``, lags ``0..max_lag``."""
    if max_lag > cfg.n_steps - cfg.burn_in:
        raise ValueError(f"max_lag={max_lag} exceeds the post-burn-in length {cfg.n_steps - cfg.burn_in}")
    x0 = np.zeros(model.d) if x0 is None else x0
    traj = simulate(model, x0, cfg)
    rep = correlation_from_states(traj.states, A, B, max_lag, cfg.delta, cfg.burn_in)
    rep.meta.update({"A": A.name, "B": B.name, "seed": cfg.seed, "n_steps": cfg.n_steps, "burn_in": cfg.burn_in})
    return rep


# --- perturbation families ---------------------------------------------------


def ou_shift_family(theta=1.0, sigma=math.sqrt(2.0)):
    """``b_eps(x) = -theta x + eps``."""
    return lambda eps: make_benchmark_model("ou", {"theta": theta, "sigma": sigma, "shift": eps})


def ou_damp_family(theta=1.0, sigma=math.sqrt(2.0)):
    """``b_eps(x) = -(theta + eps) x``."""
    return lambda eps: make_benchmark_model("ou", {"theta": theta + eps, "sigma": sigma})


def identity_family(base):
    return lambda eps: base


FAMILIES = {"shift": ou_shift_family, "damp": ou_damp_family}


# --- scaling harness ---------------------------------------------------------


@dataclass
class ScalingReport:
    epsilons: np.ndarray
    errors: np.ndarray
    std_errors: np.ndarray
    slope: float
    intercept: float
    used: np.ndarray  # bool mask of points above the noise floor
    lag: Optional[int] = None
    meta: dict = field(default_factory=dict)

    @property
    def points_used(self):
        return int(np.sum(self.used))

    def rows(self):
        lag = 0 if self.lag is None else self.lag
        return [(float(e), lag, float(r), float(s)) for e, r, s in zip(self.epsilons, self.errors, self.std_errors)]

    def summary(self):
        def num(v):
            return None if not np.isfinite(v) else float(v)

        return {
            "lag": self.lag,
            "slope": num(self.slope),
            "intercept": num(self.intercept),
            "points_used": self.points_used,
            "n_points": int(self.epsilons.size),
        }


def _check_grid(eps_grid):
    eps = np.asarray(eps_grid, dtype=float)
    if eps.ndim != 1 or eps.size == 0:
        raise ValueError("eps_grid must be a nonempty 1-D sequence")
    if np.any(eps <= 0) or np.any(np.diff(eps) <= 0):
        raise ValueError("eps_grid must be positive and strictly increasing")
    return eps


def fit_loglog(eps, errors, std_errors, floor=NOISE_FLOOR):
    """Least-squares slope/intercept of ``log error`` on ``log eps`` over points with
    ``error > floor * std_error``; NaN when fewer than two survive."""
    used = errors > floor * np.nan_to_num(std_errors, nan=np.inf)
    if used.sum() < 2:
        return float("nan"), float("nan"), used
    slope, intercept = np.polyfit(np.log(eps[used]), np.log(errors[used]), 1)
    return float(slope), float(intercept), used


def _crn_runs(base, family, eps, cfg, x0):
    x0 = np.zeros(base.d) if x0 is None else x0
    noise = draw_noise(cfg, base.m)
    ref = simulate(base, x0, cfg, noise=noise).states[cfg.burn_in :]
    perturbed = _map(lambda e: simulate(family(e), x0, cfg, noise=noise).states[cfg.burn_in :], eps)
    return ref, perturbed


def one_point_error_scaling(base, family, f, eps_grid, cfg, x0=None):
    """Error ``|pi_eps(f) - pi_0(f)|`` over ``eps_grid`` with common random numbers."""
    eps = _check_grid(eps_grid)
    ref, perturbed = _crn_runs(base, family, eps, cfg, x0)
    f0 = f(ref)
    errs, ses = np.empty(eps.size), np.empty(eps.size)
    for i, states in enumerate(perturbed):
        diff = f(states) - f0
        m, errs_se = batch_means(diff)
        errs[i], ses[i] = abs(m), errs_se
    slope, intercept, used = fit_loglog(eps, errs, ses)
    rep = ScalingReport(eps, errs, ses, slope, intercept, used, None, {"observable": f.name, "seed": cfg.seed, "n_steps": cfg.n_steps})
    if used.sum() < 2:
        raise InconclusiveScalingError(
            f"only {int(used.sum())} of {eps.size} points exceed {NOISE_FLOOR:g} standard errors; use longer runs",
            rep,
        )
    return rep


def two_point_error_scaling(base, family, A, B, eps_grid, max_lag, cfg, x0=None, lags=None):
    """Per-lag error ``|k_eps(n delta) - k_0(n delta)|`` with common random numbers.

    Returns one :class:`ScalingReport` per lag (``lags`` defaults to
    ``0..max_lag``).  A lag whose points all sit below the noise floor keeps a
    NaN slope; if that happens at every lag the error is raised.
    """
    eps = _check_grid(eps_grid)
    lags = np.arange(max_lag + 1) if lags is None else np.asarray(lags, dtype=int)
    if lags.max() > cfg.n_steps - cfg.burn_in:
        raise ValueError("max_lag exceeds the post-burn-in length")
    ref, perturbed = _crn_runs(base, family, eps, cfg, x0)
    a0, b0 = A(ref), B(ref)
    ab = [(A(s), B(s)) for s in perturbed]
    reports = []
    for n in lags:
        p0 = lagged_products(a0, b0, n)
        errs, ses = np.empty(eps.size), np.empty(eps.size)
        for i, (a, b) in enumerate(ab):
            m, se = batch_means(lagged_products(a, b, n) - p0)
            errs[i], ses[i] = abs(m), se
        slope, intercept, used = fit_loglog(eps, errs, ses)
        reports.append(ScalingReport(eps, errs, ses, slope, intercept, used, int(n), {"A": A.name, "B": B.name, "seed": cfg.seed}))
    if all(r.points_used < 2 for r in reports):
        raise InconclusiveScalingError("no lag has two points above the noise floor; use longer runs", reports)
    return reports
