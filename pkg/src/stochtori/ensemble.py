"""Replica driver: many independent trajectories reduced to angle summands."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .clt import angle_terms
from .errors import DomainExitError, ReplicaBudgetError
from .rng import child
from .sim import SimConfig, SystemSpec, simulate


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    terms: np.ndarray        # (kept, n, dim) summands θ_{kδ}/(kδ)
    replica_ids: np.ndarray  # replica index of each kept row
    replicas: int
    discarded: int
    flagged: int


def replica_seed(master_seed, r: int):
    return child(master_seed, r)


def run_ensemble(spec: SystemSpec, cfg: SimConfig, master_seed, replicas: int,
                 delta: float, n: int, threads: int = 1,
                 max_discard_fraction: float | None = None) -> EnsembleResult:
    """Simulate ``replicas`` paths and keep their first ``n`` angle summands.

    Replica ``r`` uses ``child(master_seed, r)``; results are ordered by
    replica index whatever the thread count.  Paths that leave the chart
    domain (``abort`` policy) are discarded; exceeding
    ``max_discard_fraction`` raises :class:`ReplicaBudgetError`.
    """
    def one(r):
        try:
            path = simulate(spec, cfg, replica_seed(master_seed, r))
        except DomainExitError:
            return None
        return angle_terms(path, delta, n), path.flagged

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(replicas)))
    else:
        results = [one(r) for r in range(replicas)]

    kept = [r for r, res in enumerate(results) if res is not None]
    discarded = replicas - len(kept)
    if max_discard_fraction is not None and discarded > max_discard_fraction * replicas:
        raise ReplicaBudgetError(
            f"{discarded} of {replicas} replicas left the chart domain "
            f"(budget {max_discard_fraction:.3%})", discarded, replicas)
    if not kept:
        raise ReplicaBudgetError("every replica left the chart domain", discarded, replicas)
    terms = np.stack([results[r][0] for r in kept])
    flagged = sum(1 for r in kept if results[r][1])
    return EnsembleResult(terms, np.array(kept), replicas, discarded, flagged)
