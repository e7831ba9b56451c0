"""End-to-end experiment runs: simulate, label, fit, estimate the diffusion,
simulate the learned model, compute statistics, sweep.

Seed derivation from the top-level ``seed``:

* training trajectory: stream ``(seed, 0)``
* random feature map: ``derive_seed(seed, 1)``
* learned/true model statistics runs (shared noise): stream ``(derive_seed(seed, 2), 0)``
* perturbation sweeps: stream ``(derive_seed(seed, 3), 0)``
"""

import csv
import datetime as _dt
import json
import os
from dataclasses import asdict, dataclass, field
from typing import List

import numpy as np

from . import __version__
from .diffusion import estimate_diffusion, factor_sigma, spectral_error
from .errors import ErgoSdeError
from .io import save_training_set, save_trajectory
from .kernels import make_kernel
from .plotting import emit_plot
from .rff import default_truncation, fit_rff, sample_features
from .sde import EmConfig, SdeModel, draw_noise, finite_difference_labels, make_benchmark_model, simulate, subsample
from .spectral import fit_spectral
from .stats import (
    FAMILIES,
    ScalingReport,
    TwoPointReport,
    batch_means,
    correlation_from_states,
    fit_loglog,
    one_point_error_scaling,
    parse_observable,
    two_point_error_scaling,
)
from .rng import derive_seed

STAGES = ("simulate", "fit", "diffusion", "stats")


@dataclass
class RunManifest:
    config_hash: str
    files: List[str] = field(default_factory=list)
    started: str = ""
    finished: str = ""
    version: str = __version__

    def to_json(self):
        return json.dumps(asdict(self), indent=2)


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, typ, exc, tb):
        if isinstance(exc, ErgoSdeError) and not getattr(exc, "stage", None):
            exc.stage = self.name
            exc.args = (f"[{self.name}] {exc}",)
        return False


# --- building blocks ---------------------------------------------------------


def true_model(cfg):
    return make_benchmark_model(cfg.model, cfg.model_params)


def x0_for(cfg, d):
    return np.zeros(d) if cfg.x0 is None else np.asarray(cfg.x0, dtype=float)


def training_data(cfg, model=None):
    model = model or true_model(cfg)
    em = EmConfig(cfg.delta, cfg.n_steps, cfg.burn_in, cfg.seed)
    traj = simulate(model, x0_for(cfg, model.d), em)
    ts = subsample(finite_difference_labels(traj), cfg.stride, em.burn_in)
    return traj, ts


def fit_estimator(cfg, ts):
    if cfg.estimator == "spectral":
        return fit_spectral(ts, make_kernel(cfg.kernel, **cfg.kernel_params()), cfg.order)
    D = cfg.D if cfg.D is not None else default_truncation(ts.points)
    fm = sample_features(cfg.order, ts.d, D, seed=derive_seed(cfg.seed, 1))
    return fit_rff(fm, ts, cfg.ridge, cfg.extension)


def learned_model(est, factor, name="learned"):
    """Wrap a drift estimate and a diffusion factor as an :class:`SdeModel`."""
    affine = est.affine_form() if hasattr(est, "affine_form") else None
    integrator = est.integrator() if hasattr(est, "integrator") else None
    return SdeModel(est.predict, factor.sigma_eps, name, {}, affine=affine, integrator=integrator)


def sim_config(cfg):
    delta = cfg.sim_delta or cfg.delta
    n = cfg.sim_n_steps or cfg.n_steps
    return EmConfig(delta, n, None if cfg.sim_n_steps else cfg.burn_in, derive_seed(cfg.seed, 2))


def statistics(model, cfg, em, noise=None):
    """One-point averages of every observable and the two-point correlation of
    the first observable with itself, from one path."""
    traj = simulate(model, x0_for(cfg, model.d), em, noise=noise)
    post = traj.states[em.burn_in :]
    rows = []
    for name in cfg.observables:
        f = parse_observable(name)
        est, se = batch_means(f(post))
        rows.append(("one_point", f.name, 0, 0.0, est, se))
    A = parse_observable(cfg.observables[0])
    rep = correlation_from_states(traj.states, A, A, cfg.max_lag, em.delta, em.burn_in)
    for n, t, v, s in rep.rows():
        rows.append(("two_point", A.name, n, t, v, s))
    return rows, rep


def learned_model_scaling(base, f, sizes, replicates, sim, data_delta=0.5, stride=2, seed=0, fit=None):
    """Error of ``pi(f)`` for models learned from ``N`` samples, against their ``eps``.

    For every ``N`` in ``sizes``, ``replicates`` independent training sets are
    drawn from ``base``, a drift is fitted (default: order-2 spectral fit with
    the degree-1 polynomial kernel), the diffusion is estimated and factored
    against the truth, and the learned model is simulated with the same noise
    as the base model.  Errors and ``eps`` are averaged over replicates, giving
    one point per ``N``; the standard error is that of the mean error.
    """
    fit = fit or (lambda ts: fit_spectral(ts, make_kernel("poly1"), 2))
    x0 = np.zeros(base.d)
    noise = draw_noise(sim, base.m)
    ref = float(np.mean(f(simulate(base, x0, sim, noise=noise).states[sim.burn_in :])))
    eps, err, se = [], [], []
    for k, N in enumerate(sizes):
        e_k, r_k = [], []
        for r in range(replicates):
            em = EmConfig(data_delta, stride * N + 100, 100, derive_seed(seed, k, r))
            ts = subsample(finite_difference_labels(simulate(base, x0, em)), stride, 100)
            est = fit(ts)
            dest = estimate_diffusion(ts, est.predict)
            e_k.append(spectral_error(dest, base.sigma2))
            model = learned_model(est, factor_sigma(dest, base.diffusion))
            r_k.append(abs(float(np.mean(f(simulate(model, x0, sim, noise=noise).states[sim.burn_in :]))) - ref))
        eps.append(np.mean(e_k))
        err.append(np.mean(r_k))
        se.append(np.std(r_k, ddof=1) / np.sqrt(replicates))
    order = np.argsort(eps)
    eps, err, se = (np.asarray(v)[order] for v in (eps, err, se))
    if np.any(np.diff(eps) <= 0):
        raise ValueError("mean eps is not strictly increasing across sizes; use more replicates")
    slope, intercept, used = fit_loglog(eps, err, se)
    return ScalingReport(eps, err, se, slope, intercept, used, None, {"sizes": [int(sizes[i]) for i in order], "replicates": replicates})


# --- orchestration -----------------------------------------------------------


def run_pipeline(cfg, out_dir, stages=STAGES, log=None):
    """Run the requested stages, writing every artifact under ``out_dir``."""
    log = log or (lambda msg: None)
    os.makedirs(out_dir, exist_ok=True)
    man = RunManifest(cfg.hash(), started=_now())
    files = man.files

    def path(name):
        files.append(name)
        return os.path.join(out_dir, name)

    with open(path("config.json"), "w") as fh:
        fh.write(cfg.canonical_json() + "\n")

    truth = true_model(cfg)
    with _Stage("simulate"):
        traj, ts = training_data(cfg, truth)
        save_trajectory(traj, path("trajectory.csv"))
        save_training_set(ts, path("training_set.csv"))
        log(f"simulate: {traj.n_steps} steps, {ts.N} training samples")

    if "fit" in stages or "diffusion" in stages or "stats" in stages:
        with _Stage("fit"):
            est = fit_estimator(cfg, ts)
            with open(path("estimator.json"), "w") as fh:
                fh.write(est.to_json())
            log(f"fit: {cfg.estimator} estimator, order {cfg.order}")

    if "diffusion" in stages or "stats" in stages:
        with _Stage("diffusion"):
            dest = estimate_diffusion(ts, est.predict)
            rows = [(f"sigma2[{i}][{j}]", dest.sigma2_hat[i, j]) for i in range(dest.d) for j in range(dest.d)]
            summ = dest.summary()
            rows.append(("trace", summ["trace"]))
            rows += [(f"eigenvalue[{k}]", v) for k, v in enumerate(summ["eigenvalues"])]
            if cfg.benchmark:
                eps = spectral_error(dest, truth.sigma2)
                rows.append(("eps", eps))
                factor = factor_sigma(dest, truth.diffusion)
            else:
                factor = factor_sigma(dest)
            rows += [(f"sigma_eps[{i}][{j}]", factor.sigma_eps[i, j]) for i in range(factor.sigma_eps.shape[0]) for j in range(factor.m)]
            write_csv(path("diffusion.csv"), ["quantity", "value"], rows)
            log(f"diffusion: trace {summ['trace']:.6g}" + (f", eps {eps:.3e}" if cfg.benchmark else ""))

    if "stats" in stages:
        with _Stage("stats"):
            em = sim_config(cfg)
            noise = draw_noise(em, truth.m)
            learned = learned_model(est, factor)
            rows_l, rep_l = statistics(learned, cfg, em, noise)
            rows_t, rep_t = statistics(truth, cfg, em, noise)
            rows = [("learned",) + r for r in rows_l] + [("true",) + r for r in rows_t]
            write_csv(path("statistics.csv"), ["model", "statistic", "observable", "lag", "time", "value", "std_error"], rows)
            emit_plot(rep_l, path("two_point_learned.svg"))
            log(f"stats: {len(rows)} rows")

    man.finished = _now()
    files.append("manifest.json")
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        fh.write(man.to_json())
    return man


def run_sweep(cfg, out_dir, log=None):
    """Error scaling of the configured perturbation family (one- and two-point)."""
    log = log or (lambda msg: None)
    if cfg.family is None or cfg.eps_grid is None:
        from .errors import ConfigError

        raise ConfigError("sweep needs 'family' and 'eps_grid' in the config")
    os.makedirs(out_dir, exist_ok=True)
    man = RunManifest(cfg.hash(), started=_now())
    files = man.files
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        fh.write(cfg.canonical_json() + "\n")
    files.append("config.json")

    base = true_model(cfg)
    fam = FAMILIES[cfg.family](cfg.theta, cfg.sigma)
    em = EmConfig(cfg.sim_delta or cfg.delta, cfg.sim_n_steps or cfg.n_steps, cfg.burn_in, derive_seed(cfg.seed, 3))
    x0 = x0_for(cfg, base.d)
    rows, summary = [], {}
    with _Stage("sweep"):
        f = parse_observable(cfg.sweep_observable)
        try:
            one = one_point_error_scaling(base, fam, f, cfg.eps_grid, em, x0)
        except ErgoSdeError as exc:
            one = getattr(exc, "report", None)
            if one is None:
                raise
        rows += [("one_point",) + r for r in one.rows()]
        summary["one_point"] = one.summary()
        emit_plot(one, os.path.join(out_dir, "scaling_one_point.svg"))
        files.append("scaling_one_point.svg")
        log(f"sweep: one-point slope {one.slope:.4f} ({one.points_used} points)")

        if cfg.sweep_lag_observables:
            A = parse_observable(cfg.sweep_lag_observables[0])
            B = parse_observable(cfg.sweep_lag_observables[-1])
            try:
                reps = two_point_error_scaling(base, fam, A, B, cfg.eps_grid, cfg.max_lag, em, x0)
            except ErgoSdeError as exc:
                reps = getattr(exc, "report", None)
                if reps is None:
                    raise
            for r in reps:
                rows += [("two_point",) + row for row in r.rows()]
            summary["two_point"] = [r.summary() for r in reps]
            emit_plot(reps[0], os.path.join(out_dir, "scaling_lag0.svg"))
            files.append("scaling_lag0.svg")
            log(f"sweep: lag-0 slope {reps[0].slope:.4f}")

    write_csv(os.path.join(out_dir, "sweep.csv"), ["statistic", "eps", "lag", "error", "std_error"], rows)
    files.append("sweep.csv")
    with open(os.path.join(out_dir, "sweep_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    files.append("sweep_summary.json")
    man.finished = _now()
    files.append("manifest.json")
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        fh.write(man.to_json())
    return man, summary


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def report(out_dir):
    """Rebuild plots and a JSON summary from the CSV artifacts in ``out_dir``."""
    written, summary = [], {}
    sweep_csv = os.path.join(out_dir, "sweep.csv")
    if os.path.exists(sweep_csv):
        groups = {}
        for r in read_csv(sweep_csv):
            groups.setdefault((r["statistic"], int(r["lag"])), []).append(r)
        for (stat, lag), rs in sorted(groups.items()):
            eps = np.array([float(r["eps"]) for r in rs])
            err = np.array([float(r["error"]) for r in rs])
            se = np.array([float(r["std_error"]) for r in rs])
            slope, icpt, used = fit_loglog(eps, err, se)
            rep = ScalingReport(eps, err, se, slope, icpt, used, lag)
            summary[f"{stat}_lag{lag}"] = rep.summary()
            if stat == "one_point" or lag == 0:
                p = os.path.join(out_dir, f"report_{stat}_lag{lag}.svg")
                emit_plot(rep, p)
                written.append(p)
    stats_csv = os.path.join(out_dir, "statistics.csv")
    if os.path.exists(stats_csv):
        rows = read_csv(stats_csv)
        for model in ("learned", "true"):
            tp = [r for r in rows if r["model"] == model and r["statistic"] == "two_point"]
            if tp:
                rep = TwoPointReport(
                    np.array([int(r["lag"]) for r in tp]),
                    float(tp[1]["time"]) / int(tp[1]["lag"]) if len(tp) > 1 else 1.0,
                    np.array([float(r["value"]) for r in tp]),
                    np.array([float(r["std_error"]) for r in tp]),
                )
                p = os.path.join(out_dir, f"report_two_point_{model}.svg")
                emit_plot(rep, p)
                written.append(p)
            summary[model] = {
                r["observable"]: float(r["value"]) for r in rows if r["model"] == model and r["statistic"] == "one_point"
            }
    if not written and not summary:
        raise FileNotFoundError(f"no sweep.csv or statistics.csv in {out_dir}")
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary, written
