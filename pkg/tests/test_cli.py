import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from boostdens.cli import main
from boostdens.dist import BoostedDensity, DiagonalGaussian, isotropic_gaussian, mixture_random, save_density
from boostdens.experiments import AGGREGATE_COLUMNS, make_target
from boostdens.metrics import nll_normalized

TINY_RUN = ["run", "--experiment", "ring", "--n-runs", "2", "--T", "1", "--epochs", "5", "--hidden", "3"]


@pytest.fixture
def q0_snapshot(tmp_path):
    path = tmp_path / "q0.json"
    save_density(BoostedDensity(isotropic_gaussian([0.0, 0.0])), path)
    return path


def test_sample_moments(q0_snapshot, capsys):
    assert main(["sample", str(q0_snapshot), "-n", "20000", "--burn-in", "200", "--proposal-std", "2", "--thin", "2"]) == 0
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0] == ["x0", "x1"]
    x = np.array(rows[1:], dtype=float)
    assert x.shape == (20000, 2)
    np.testing.assert_allclose(x.mean(axis=0), 0.0, atol=0.06)
    np.testing.assert_allclose(x.var(axis=0), 1.0, atol=0.1)


def test_sample_zero_rows(q0_snapshot, capsys):
    assert main(["sample", str(q0_snapshot), "-n", "0"]) == 0
    assert capsys.readouterr().out == "x0,x1\n"


def test_invalid_snapshot_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2")
    assert main(["sample", str(bad)]) == 2
    assert main(["sample", str(tmp_path / "missing.json")]) == 2
    assert "boostdens" in capsys.readouterr().err


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["sample"])
    assert exc.value.code == 2


def test_metrics_of_target_against_itself(tmp_path, capsys):
    path = tmp_path / "ring.json"
    target = {"kind": "ring"}
    save_density(make_target(target), path)
    assert main(["metrics", str(path), "--target", json.dumps(target), "--n", "20000", "--points-per-axis", "200"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["kl"] == pytest.approx(0.0, abs=1e-12)
    assert out["nll"] == pytest.approx(1.0, abs=1e-12)
    assert out["coverage"] == pytest.approx(0.95, abs=0.01)


def test_metrics_kl_needs_low_dimension(tmp_path, capsys):
    path = tmp_path / "g3.json"
    save_density(isotropic_gaussian([0.0, 0.0, 0.0]), path)
    code = main(["metrics", str(path), "--target", '{"kind": "gaussian", "mean": [0, 0, 0]}', "--which", "kl"])
    assert code == 2
    assert "dim <= 2" in capsys.readouterr().err


def test_metrics_rejects_bad_target(q0_snapshot):
    assert main(["metrics", str(q0_snapshot), "--target", "{oops"]) == 2
    assert main(["metrics", str(q0_snapshot), "--target", '{"kind": "torus"}']) == 2


@pytest.mark.slow
def test_fitted_q0_nll_on_random_mixture():
    # reference mean over runs for the Gaussian fitted to the P-sample
    vals = []
    for seed in range(20):
        target = mixture_random(seed=seed)
        x = target.sample(1000, np.random.default_rng([seed, 12345]))
        vals.append(nll_normalized(target, DiagonalGaussian.fit(x), 10000, seed=seed))
    assert abs(np.mean(vals) - 1.5131) <= 0.15, f"mean {np.mean(vals):.4f}"


def test_theory_command(tmp_path, capsys):
    out = tmp_path / "theory.json"
    assert main(["theory", "--trials", "20", "--output", str(out)]) == 0
    assert json.loads(out.read_text())["passed"] is True
    assert json.loads(capsys.readouterr().out)["passed"] is True


def test_run_writes_deterministic_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(TINY_RUN + ["--output-dir", str(a)]) == 0
    assert main(TINY_RUN + ["--output-dir", str(b)]) == 0
    agg = (a / "aggregate.csv").read_text()
    assert agg == (b / "aggregate.csv").read_text()
    rows = list(csv.reader(io.StringIO(agg)))
    assert tuple(rows[0]) == tuple(AGGREGATE_COLUMNS)
    assert len(rows) == 3
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["config"]["experiment"] == "ring"


def test_env_seed_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("BOOSTDENS_SEED", "11")
    assert main(TINY_RUN + ["--output-dir", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["config"]["seed"] == 11
    monkeypatch.setenv("BOOSTDENS_SEED", "eleven")
    assert main(["theory", "--trials", "5"]) == 2


def test_bad_config_field_exits_2(tmp_path):
    assert main(TINY_RUN + ["--policy", "greedy", "--output-dir", str(tmp_path)]) == 2
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_runs": 0}))
    assert main(["run", "--config", str(cfg), "--output-dir", str(tmp_path)]) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "boostdens", "theory", "--trials", "5"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["passed"] is True
