import csv
import json

import pytest

from ergosde.config import config_from_dict
from ergosde.diffusion import estimate_diffusion, spectral_error
from ergosde.io import load_training_set
from ergosde.pipeline import run_pipeline, true_model
from ergosde.rff import RffEstimator
from ergosde.spectral import SpectralEstimator


def cfg(**kw):
    base = {"model": "ou", "theta": 1.0, "delta": 0.1, "n_steps": 4000, "stride": 2, "sim_n_steps": 10_000, "max_lag": 20, "seed": 7}
    base.update(kw)
    return config_from_dict(base)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_end_to_end_spectral_artifacts(tmp_path):
    man = run_pipeline(cfg(), tmp_path)
    for name in ("trajectory.csv", "training_set.csv", "estimator.json", "diffusion.csv", "statistics.csv", "manifest.json"):
        assert name in man.files
        assert (tmp_path / name).exists()
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert doc["config_hash"] == cfg().hash() and doc["version"]
    SpectralEstimator.from_json((tmp_path / "estimator.json").read_text())


def test_rerun_is_byte_identical(tmp_path):
    for c in (cfg(), cfg(estimator="rff", M=16, ridge=1e-2, extension="linear", D=3.0)):
        a, b = tmp_path / f"a_{c.estimator}", tmp_path / f"b_{c.estimator}"
        ma, mb = run_pipeline(c, a), run_pipeline(c, b)
        assert ma.config_hash == mb.config_hash
        for name in ma.files:
            if name.endswith(".csv"):
                assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_benchmark_eps_row_matches_diffusion_module(tmp_path):
    c = cfg()
    run_pipeline(c, tmp_path)
    eps_row = [r for r in rows(tmp_path / "diffusion.csv") if r["quantity"] == "eps"]
    assert len(eps_row) == 1
    ts = load_training_set(tmp_path / "training_set.csv")
    est = SpectralEstimator.from_json((tmp_path / "estimator.json").read_text())
    expected = spectral_error(estimate_diffusion(ts, est.predict), true_model(c).sigma2)
    assert float(eps_row[0]["value"]) == pytest.approx(expected, rel=1e-12)


def test_data_only_mode_has_no_eps(tmp_path):
    run_pipeline(cfg(benchmark=False), tmp_path)
    names = [r["quantity"] for r in rows(tmp_path / "diffusion.csv")]
    assert "eps" not in names and "trace" in names


def test_rff_pipeline(tmp_path):
    run_pipeline(cfg(estimator="rff", M=16, ridge=1e-2, extension="linear", D=3.0), tmp_path)
    est = RffEstimator.from_json((tmp_path / "estimator.json").read_text())
    assert est.extension == "linear" and est.fm.M == 16
    stats = rows(tmp_path / "statistics.csv")
    learned = [r for r in stats if r["model"] == "learned" and r["statistic"] == "two_point"]
    assert len(learned) == 21


def test_stage_subset(tmp_path):
    man = run_pipeline(cfg(), tmp_path, stages=("simulate",))
    assert "estimator.json" not in man.files
    assert not (tmp_path / "estimator.json").exists()
