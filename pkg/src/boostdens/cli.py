"""Command line entry point: ``boostdens {run,sample,metrics,theory}``.

Exit codes: 0 success, 1 a theory check was violated, 2 usage or parse error.
The ``BOOSTDENS_SEED`` environment variable overrides any configured seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from typing import Optional, Sequence

from .errors import BoostDensError, ConfigError, DimensionError, ParseError

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _env_seed() -> Optional[int]:
    raw = os.environ.get("BOOSTDENS_SEED")
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"BOOSTDENS_SEED must be an integer, got {raw!r}") from None


def _json_arg(text: str) -> dict:
    """A JSON object given inline or as a path to a file."""
    if os.path.exists(text):
        with open(text) as fh:
            text = fh.read()
    try:
        val = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"not valid JSON: {exc}") from exc
    if not isinstance(val, dict):
        raise ParseError("expected a JSON object")
    return val


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="boostdens", description="Boosted density estimation with classifier weak learners.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run an experiment and write CSV/JSON results")
    r.add_argument("--config", help="JSON config file; flags override its values")
    r.add_argument("--experiment", help="ring, random_mixture, activations, topology, dimensions, kde_compare or theory")
    r.add_argument("--T", type=int)
    r.add_argument("--n-runs", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--policy", help="wla, linesearch_nll or a number in [0, 1] for a fixed step")
    r.add_argument("--activation")
    r.add_argument("--hidden", help="comma-separated hidden widths, e.g. 5,5")
    r.add_argument("--epochs", type=int)
    r.add_argument("--coverage-kappa", type=float)
    r.add_argument("--output-dir")
    r.add_argument("--jobs", type=int)
    r.add_argument("--full", action="store_true", help="longer training and finer grids")

    s = sub.add_parser("sample", help="draw Metropolis-Hastings samples from a density snapshot (CSV to stdout)")
    s.add_argument("snapshot")
    s.add_argument("-n", type=int, default=1000)
    s.add_argument("--burn-in", type=int, default=1000)
    s.add_argument("--proposal-std", type=float, default=1.0)
    s.add_argument("--chains", type=int, default=8)
    s.add_argument("--thin", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)

    m = sub.add_parser("metrics", help="evaluate a density snapshot against a target (JSON to stdout)")
    m.add_argument("snapshot")
    m.add_argument("--target", required=True, help='JSON object or file, e.g. \'{"kind": "ring"}\'')
    m.add_argument("--which", default="kl,nll,coverage", help="comma-separated subset of kl,nll,coverage")
    m.add_argument("--n", type=int, default=10_000)
    m.add_argument("--kappa", type=float, default=0.95)
    m.add_argument("--points-per-axis", type=int, default=400)
    m.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("theory", help="run the numeric verification suite (JSON to stdout)")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--trials", type=int, default=1000)
    t.add_argument("--output", help="also write the JSON report here")
    return p


def _cmd_run(args) -> int:
    from .experiments import ExperimentConfig, config_for, run_experiment

    file_cfg = _json_arg(args.config) if args.config else {}
    experiment = args.experiment or file_cfg.get("experiment", "ring")
    base = config_for(experiment, full=args.full)
    cfg = ExperimentConfig.from_dict({**base.__dict__, **file_cfg, "experiment": experiment})
    over = {}
    for name in ("T", "n_runs", "seed", "activation", "epochs", "coverage_kappa", "output_dir", "jobs"):
        v = getattr(args, name)
        if v is not None:
            over[name] = v
    if args.hidden:
        try:
            over["hidden"] = [int(h) for h in args.hidden.split(",")]
        except ValueError:
            raise ConfigError(f"hidden: expected comma-separated integers, got {args.hidden!r}") from None
    if args.policy:
        if args.policy in ("wla", "linesearch_nll"):
            over["policy"] = {"kind": args.policy}
        else:
            try:
                over["policy"] = {"kind": "fixed", "value": float(args.policy)}
            except ValueError:
                raise ConfigError(f"policy: unknown policy {args.policy!r}") from None
    env = _env_seed()
    if env is not None:
        over["seed"] = env
        over["seeds"] = None
    cfg = replace(cfg, **over)
    t0 = time.time()
    code = run_experiment(cfg)
    print(f"{cfg.experiment}: wrote results to {cfg.output_dir} in {time.time() - t0:.1f}s", file=sys.stderr)
    return code


def _cmd_sample(args) -> int:
    from .dist import load_density
    from .mcmc import MhConfig, rw_metropolis, write_samples_csv

    density = load_density(args.snapshot)
    seed = _env_seed() if _env_seed() is not None else args.seed
    cfg = MhConfig(
        n_samples=args.n, burn_in=args.burn_in, proposal_std=args.proposal_std,
        n_chains=args.chains, thin=args.thin, seed=seed,
    )
    log_f = getattr(density, "log_unnormalized", density.log_density)
    samples, rate = rw_metropolis(log_f, density.dim, cfg, q0=getattr(density, "q0", None))
    write_samples_csv(samples, sys.stdout)
    print(f"acceptance_rate={rate:.4f}", file=sys.stderr)
    return EXIT_OK


def _cmd_metrics(args) -> int:
    from .dist import load_density
    from .experiments import make_target
    from .metrics import coverage, grid_around, kl_grid, nll_normalized

    density = load_density(args.snapshot)
    target = make_target(_json_arg(args.target))
    if target.dim != density.dim:
        raise DimensionError(f"target has dim {target.dim}, snapshot has dim {density.dim}")
    seed = _env_seed() if _env_seed() is not None else args.seed
    which = [w.strip() for w in args.which.split(",") if w.strip()]
    out = {}
    for w in which:
        if w == "kl":
            if target.dim > 2:
                raise DimensionError("kl is computed by grid quadrature and needs dim <= 2")
            lo, hi = target.bounds(4.0)
            out["kl"] = kl_grid(target, density, grid_around(lo, hi, 0.0, args.points_per_axis))
        elif w == "nll":
            out["nll"] = nll_normalized(target, density, args.n, seed=seed)
        elif w == "coverage":
            out["coverage"] = coverage(target, density, args.kappa, args.n, args.n, seed=seed)
        else:
            raise ConfigError(f"which: unknown metric {w!r}")
    print(json.dumps(out))
    return EXIT_OK


def _cmd_theory(args) -> int:
    from .theory import run_theory_suite, suite_to_json

    seed = _env_seed() if _env_seed() is not None else args.seed
    t0 = time.time()
    reports = run_theory_suite(seed, args.trials)
    doc = suite_to_json(reports, time.time() - t0)
    print(doc)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(doc)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_VIOLATION


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "sample": _cmd_sample, "metrics": _cmd_metrics, "theory": _cmd_theory}[args.command]
    try:
        return handler(args)
    except (ParseError, ConfigError) as exc:
        print(f"boostdens: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BoostDensError, FileNotFoundError) as exc:
        print(f"boostdens: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
