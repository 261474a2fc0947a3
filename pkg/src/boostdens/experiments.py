"""Experiment configurations, per-run execution and CSV/JSON result emission."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import kde
from .boost import MetricsConfig, StepPolicy, run_adabode
from .dist import DiagonalGaussian, isotropic_gaussian, mixture_random, mixture_ring, save_density
from .errors import ConfigError
from .learner import ACTIVATIONS, TrainConfig
from .metrics import nll_normalized

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "config_for",
    "make_target",
    "make_q0",
    "expand_conditions",
    "run_single",
    "kde_compare_run",
    "aggregate_rows",
    "AGGREGATE_COLUMNS",
    "run_experiment",
]

EXPERIMENTS = ("ring", "random_mixture", "activations", "topology", "dimensions", "kde_compare", "theory")

AGGREGATE_COLUMNS = (
    "experiment",
    "condition",
    "t",
    "kl_mean",
    "kl_ci95",
    "nll_mean",
    "nll_ci95",
    "acc_mean",
    "acc_ci95",
    "coverage_mean",
    "coverage_ci95",
)

TOPOLOGIES = ((5,), (5, 5), (10, 10), (20, 20), (10, 10, 10))
DIMENSIONS = (2, 4, 6)


@dataclass
class ExperimentConfig:
    """One experiment; every field can come from a JSON file or a CLI flag.

    ``target`` is a dict with ``kind`` (``ring`` or ``random``) and the
    mixture parameters; ``q0`` is ``{"kind": "isotropic", "sigma": s}`` or
    ``{"kind": "fit"}``; ``policy`` is ``{"kind": ..., "value": ...}``.
    """

    experiment: str = "ring"
    target: dict = field(default_factory=lambda: {"kind": "ring", "modes": 8, "radius": 5.0, "sigma": 1.0})
    q0: dict = field(default_factory=lambda: {"kind": "isotropic", "sigma": 1.0})
    hidden: list = field(default_factory=lambda: [5, 5])
    activation: str = "relu"
    policy: dict = field(default_factory=lambda: {"kind": "fixed", "value": 0.5})
    T: int = 6
    n_runs: int = 20
    seed: int = 0
    seeds: Optional[list] = None
    epochs: int = 600
    batch_size: int = 50
    early_stop_gap: Optional[float] = None
    n_p: int = 1000
    n_q: int = 1000
    n_nll: int = 10_000
    points_per_axis: int = 200
    coverage_kappa: Optional[float] = None
    theory_trials: int = 1000
    output_dir: str = "results"
    jobs: int = 1

    def validate(self) -> None:
        problems = []
        if self.experiment not in EXPERIMENTS:
            problems.append(f"experiment: must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.n_runs < 1:
            problems.append("n_runs: must be >= 1")
        if self.T < 1:
            problems.append("T: must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            problems.append("epochs/batch_size: must be >= 1")
        if self.activation.lower() not in ACTIVATIONS:
            problems.append(f"activation: must be one of {sorted(ACTIVATIONS)}")
        if not self.hidden or any(int(h) < 1 for h in self.hidden):
            problems.append("hidden: needs at least one positive layer width")
        if self.target.get("kind") not in ("ring", "random"):
            problems.append("target.kind: must be 'ring' or 'random'")
        if self.q0.get("kind") not in ("isotropic", "fit"):
            problems.append("q0.kind: must be 'isotropic' or 'fit'")
        try:
            _policy(self.policy)
        except (ValueError, TypeError, KeyError) as exc:
            problems.append(f"policy: {exc}")
        if self.seeds is not None and len(self.seeds) != self.n_runs:
            problems.append("seeds: length must equal n_runs")
        if self.coverage_kappa is not None and not 0 < self.coverage_kappa < 1:
            problems.append("coverage_kappa: must lie in (0, 1)")
        if self.jobs < 1:
            problems.append("jobs: must be >= 1")
        if problems:
            raise ConfigError("; ".join(problems))

    def run_seeds(self) -> list[int]:
        return list(self.seeds) if self.seeds is not None else [self.seed + k for k in range(self.n_runs)]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


def config_for(experiment: str, full: bool = False, **overrides) -> ExperimentConfig:
    """Defaults for one experiment; ``full`` restores the long training and fine grid."""
    ring = {"kind": "ring", "modes": 8, "radius": 5.0, "sigma": 1.0}
    rand = {"kind": "random", "modes": 8, "box_halfwidth": 10.0, "sigma": 1.0, "dim": 2}
    base = dict(experiment=experiment)
    if experiment in ("ring", "activations", "topology"):
        base.update(target=ring, T=6, hidden=[5, 5], activation="relu", epochs=3000 if full else 600)
    elif experiment == "random_mixture":
        base.update(target=rand, T=6, hidden=[10, 10], activation="relu", epochs=3000 if full else 600)
    elif experiment == "dimensions":
        base.update(
            target=rand, T=10, hidden=[10, 10], activation="relu",
            epochs=2000 if full else 600, batch_size=250, early_stop_gap=0.2,
        )
    elif experiment == "kde_compare":
        base.update(
            target=rand, q0={"kind": "fit"}, T=2, hidden=[10, 10], activation="relu",
            policy={"kind": "linesearch_nll"}, epochs=3000 if full else 600,
        )
    elif experiment != "theory":
        raise ConfigError(f"experiment: must be one of {EXPERIMENTS}, got {experiment!r}")
    if full:
        base["points_per_axis"] = 400
    base.update(overrides)
    cfg = ExperimentConfig(**base)
    cfg.validate()
    return cfg


def _policy(d: dict) -> StepPolicy:
    kind = d["kind"]
    return StepPolicy(kind, float(d.get("value", 0.5)))


def make_target(spec: dict, seed: int = 0):
    kind = spec.get("kind")
    if kind == "ring":
        return mixture_ring(2, int(spec.get("modes", 8)), float(spec.get("radius", 5.0)), float(spec.get("sigma", 1.0)))
    if kind == "random":
        return mixture_random(
            int(spec.get("dim", 2)),
            int(spec.get("modes", 8)),
            float(spec.get("box_halfwidth", 10.0)),
            float(spec.get("sigma", 1.0)),
            seed=int(spec.get("seed", seed)),
        )
    if kind == "gaussian":
        mean = np.asarray(spec.get("mean", [0.0, 0.0]), dtype=float)
        return isotropic_gaussian(mean, float(spec.get("sigma", 1.0)))
    raise ConfigError(f"target.kind: unknown kind {kind!r}")


def make_q0(spec: dict, target, p_samples: np.ndarray) -> DiagonalGaussian:
    if spec.get("kind") == "fit":
        return DiagonalGaussian.fit(p_samples)
    return isotropic_gaussian(np.zeros(target.dim), float(spec.get("sigma", 1.0)))


def expand_conditions(cfg: ExperimentConfig) -> list[tuple[str, ExperimentConfig]]:
    """Split an experiment into labelled single-condition configs."""
    if cfg.experiment == "activations":
        return [(a, replace(cfg, activation=a)) for a in ACTIVATIONS]
    if cfg.experiment == "topology":
        return [("x".join(map(str, h)), replace(cfg, hidden=list(h))) for h in TOPOLOGIES]
    if cfg.experiment == "dimensions":
        return [(f"d={d}", replace(cfg, target={**cfg.target, "dim": d})) for d in DIMENSIONS]
    label = f"{cfg.activation}_{'x'.join(map(str, cfg.hidden))}_{_policy(cfg.policy).label()}"
    return [(label, cfg)]


def _learner_cfg(cfg: ExperimentConfig) -> TrainConfig:
    return TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size, early_stop_gap=cfg.early_stop_gap)


def _metrics_cfg(cfg: ExperimentConfig, dim: int) -> MetricsConfig:
    return MetricsConfig(
        n_p=cfg.n_p,
        n_q=cfg.n_q,
        n_nll=cfg.n_nll,
        kl=dim <= 2,
        coverage_kappa=cfg.coverage_kappa,
        points_per_axis=cfg.points_per_axis,
    )


def run_single(cfg: ExperimentConfig, seed: int):
    """One boosting run; returns ``(density, trace)``."""
    target = make_target(cfg.target, seed)
    rng = np.random.default_rng([seed, 12345])
    q0 = make_q0(cfg.q0, target, target.sample(cfg.n_p, rng))
    return run_adabode(
        target,
        q0,
        cfg.T,
        _policy(cfg.policy),
        tuple(int(h) for h in cfg.hidden),
        cfg.activation,
        _learner_cfg(cfg),
        metrics_cfg=_metrics_cfg(cfg, target.dim),
        seed=seed,
    )


def kde_compare_run(cfg: ExperimentConfig, seed: int) -> dict:
    """Normalised NLL of Q_0..Q_T and of every KDE kernel, all fitted to the same P-sample."""
    target = make_target(cfg.target, seed)
    x = target.sample(cfg.n_p, np.random.default_rng([seed, 12345]))
    q0 = make_q0(cfg.q0, target, x)
    _, trace = run_adabode(
        target, q0, cfg.T, _policy(cfg.policy), tuple(int(h) for h in cfg.hidden), cfg.activation,
        _learner_cfg(cfg), metrics_cfg=_metrics_cfg(cfg, target.dim), seed=seed,
    )
    out = {f"Q{r.t}": r.nll for r in trace.records}
    for k in kde.KERNELS:
        out[k] = nll_normalized(target, kde.fit(x, k), cfg.n_nll, seed=seed)
    return out


def _mean_ci(values: list) -> tuple[Optional[float], Optional[float]]:
    vals = [v for v in values if v is not None and math.isfinite(v)]
    if not vals:
        return None, None
    arr = np.asarray(vals, dtype=float)
    half = 1.96 * float(np.std(arr, ddof=1)) / math.sqrt(arr.size) if arr.size > 1 else 0.0
    return float(arr.mean()), half


def aggregate_rows(experiment: str, condition: str, traces: list) -> list[list]:
    """Per-round mean and normal-approximation 95% CI across runs."""
    rows = []
    n_rounds = min(len(tr) for tr in traces)
    for t in range(n_rounds):
        recs = [tr.records[t] for tr in traces]
        row = [experiment, condition, t]
        for name in ("kl", "nll", "accuracy", "coverage"):
            row.extend(_mean_ci([getattr(r, name) for r in recs]))
        rows.append(row)
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _git_blob_hash(data: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def _run_job(args):
    cfg, label, seed, run_dir, kind = args
    if kind == "kde":
        return label, seed, kde_compare_run(cfg, seed)
    bd, trace = run_single(cfg, seed)
    stem = f"{label}_seed{seed}"
    with open(Path(run_dir) / f"{stem}.csv", "w") as fh:
        trace.write_csv(fh)
    save_density(bd, Path(run_dir) / f"{stem}.json")
    return label, seed, trace


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run every condition and seed, write results under ``cfg.output_dir``; returns an exit code."""
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    status = 0

    if cfg.experiment == "theory":
        from .theory import run_theory_suite, suite_to_json

        reports = run_theory_suite(cfg.seed, cfg.theory_trials)
        path = out / "theory.json"
        path.write_text(suite_to_json(reports))
        written.append(path)
        status = 0 if all(r.passed for r in reports) else 1
    else:
        run_dir = out / "runs"
        run_dir.mkdir(exist_ok=True)
        kind = "kde" if cfg.experiment == "kde_compare" else "boost"
        jobs = [(c, label, s, str(run_dir), kind) for label, c in expand_conditions(cfg) for s in c.run_seeds()]
        if cfg.jobs > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                results = list(pool.map(_run_job, jobs))
        else:
            results = [_run_job(j) for j in jobs]

        if kind == "kde":
            table = {}
            for _, _, res in results:
                for k, v in res.items():
                    table.setdefault(k, []).append(v)
            rows = []
            for k, vals in table.items():
                mean, ci = _mean_ci(vals)
                rows.append([k, mean, ci, abs(mean - 1.0)])
            rows.sort(key=lambda r: -r[3])
            path = out / "kde_table.csv"
            _write_csv(path, ("condition", "nll_mean", "nll_ci95", "abs_diff_from_1"), rows)
            written.append(path)
        else:
            by_cond = {}
            for label, seed, trace in results:
                by_cond.setdefault(label, []).append((seed, trace))
                written.append(run_dir / f"{label}_seed{seed}.csv")
            rows = []
            for label, _ in expand_conditions(cfg):
                traces = [tr for _, tr in sorted(by_cond[label], key=lambda st: st[0])]
                rows.extend(aggregate_rows(cfg.experiment, label, traces))
            path = out / "aggregate.csv"
            _write_csv(path, AGGREGATE_COLUMNS, rows)
            written.append(path)

    manifest = {
        "config": asdict(cfg),
        "seeds": cfg.run_seeds(),
        "ci_method": "normal approximation, 1.96 * sd / sqrt(n_runs)",
        "files": {str(p.relative_to(out)): _sha256(p) for p in written},
        "content_hash": _git_blob_hash(b"".join(p.read_bytes() for p in sorted(written))),
        "exit_code": status,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return status
