"""Random-walk Metropolis-Hastings for densities known up to a constant."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, TextIO

import numpy as np

from .errors import NonFiniteLogDensity

__all__ = ["MhConfig", "rw_metropolis", "write_samples_csv"]


@dataclass(frozen=True)
class MhConfig:
    """Sampler settings.

    ``init`` is ``"from_q0"`` (start each chain at a draw from a reference
    density) or ``"fixed"`` (start every chain at ``init_point``, the origin
    by default).  ``thin`` keeps every ``thin``-th post-burn-in state.
    """

    n_samples: int = 1000
    burn_in: int = 1000
    proposal_std: float = 1.0
    n_chains: int = 8
    init: str = "from_q0"
    init_point: Optional[tuple] = None
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 0 or self.burn_in < 0:
            raise ValueError("n_samples and burn_in must be >= 0")
        if not self.proposal_std > 0:
            raise ValueError("proposal_std must be positive")
        if self.n_chains < 1 or self.thin < 1:
            raise ValueError("n_chains and thin must be >= 1")
        if self.init not in ("from_q0", "fixed"):
            raise ValueError("init must be 'from_q0' or 'fixed'")

    def with_overrides(self, **kw) -> "MhConfig":
        return replace(self, **kw)


def _initial_points(dim: int, config: MhConfig, q0, streams) -> np.ndarray:
    if config.init == "fixed" or q0 is None:
        point = np.zeros(dim) if config.init_point is None else np.asarray(config.init_point, float)
        return np.tile(point, (config.n_chains, 1))
    return np.vstack([q0.sample(1, rng) for rng in streams])


def rw_metropolis(
    log_density: Callable[[np.ndarray], np.ndarray],
    dim: int,
    config: MhConfig = MhConfig(),
    q0=None,
) -> tuple[np.ndarray, float]:
    """Sample from ``exp(log_density)`` with isotropic Gaussian proposals.

    ``log_density`` maps an ``(n, dim)`` array to ``n`` log-densities; it may be
    unnormalised.  All chains advance together, each driven by its own
    generator seeded from ``(config.seed, chain_index)``, and post-burn-in
    states are merged round-robin (chain 0, chain 1, ..., chain 0, ...).

    Returns the ``(n_samples, dim)`` samples and the acceptance rate over
    post-burn-in proposals (over all proposals if nothing is kept).
    """
    n_chains = config.n_chains
    per_chain = math.ceil(config.n_samples / n_chains) if config.n_samples else 0
    n_keep_steps = per_chain * config.thin
    n_steps = config.burn_in + n_keep_steps
    streams = [np.random.default_rng([config.seed, i]) for i in range(n_chains)]

    x = _initial_points(dim, config, q0, streams)
    lx = np.asarray(log_density(x), dtype=float)
    if not np.all(np.isfinite(lx)):
        raise NonFiniteLogDensity("log-density is not finite at the initial state")

    noise = np.empty((n_steps, n_chains, dim))
    log_u = np.empty((n_steps, n_chains))
    for i, rng in enumerate(streams):
        noise[:, i, :] = rng.standard_normal((n_steps, dim))
        with np.errstate(divide="ignore"):
            log_u[:, i] = np.log(rng.random(n_steps))
    noise *= config.proposal_std

    kept = np.empty((per_chain, n_chains, dim))
    accepted = 0
    accepted_post = 0
    k = 0
    for step in range(n_steps):
        prop = x + noise[step]
        lp = np.asarray(log_density(prop), dtype=float)
        with np.errstate(invalid="ignore"):
            acc = log_u[step] < lp - lx
        n_acc = int(acc.sum())
        if n_acc:
            x = np.where(acc[:, None], prop, x)
            lx = np.where(acc, lp, lx)
        accepted += n_acc
        if step >= config.burn_in:
            accepted_post += n_acc
            if (step - config.burn_in + 1) % config.thin == 0:
                kept[k] = x
                k += 1

    if n_keep_steps:
        rate = accepted_post / (n_keep_steps * n_chains)
    else:
        rate = accepted / (n_steps * n_chains) if n_steps else 1.0
    samples = kept.reshape(per_chain * n_chains, dim)[: config.n_samples]
    return samples, float(rate)


def write_samples_csv(samples: np.ndarray, out: TextIO) -> None:
    samples = np.asarray(samples, dtype=float)
    dim = samples.shape[1] if samples.ndim == 2 else 0
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([f"x{i}" for i in range(dim)])
    for row in samples:
        writer.writerow([repr(float(v)) for v in row])


def samples_to_csv_string(samples: np.ndarray) -> str:
    buf = io.StringIO()
    write_samples_csv(samples, buf)
    return buf.getvalue()
