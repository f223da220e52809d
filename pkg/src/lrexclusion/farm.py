"""Replica farm: independent stationary runs, each decomposed for several test functions.

Replica ``i`` draws everything (initial configuration, then the dynamics) from
``replica_rng(master_seed, i)``, so any subset of replicas can be rerun alone
and reproduces its outputs exactly, whatever the thread count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import SimParams, check_volume, replica_rng, run_kmc
from .fields import decompose, functional_weights, eps_block, jump_size
from .kernel import build_pn
from .lattice import sample_bernoulli

log = logging.getLogger(__name__)


@dataclass
class ReplicaResults:
    params: SimParams
    functions: list
    Y: np.ndarray                 # (replica, function, checkpoint)
    records: list                 # records[replica][function] -> [MartingaleRecord]
    max_jump: np.ndarray          # (replica, function)
    events: np.ndarray
    attempts: np.ndarray
    replica_ids: list = field(default_factory=list)

    def column(self, name: str, fi: int = 0, c: int = -1) -> np.ndarray:
        """``getattr(record, name)`` across replicas for function ``fi`` at checkpoint ``c``."""
        return np.array([getattr(r[fi][c], name) for r in self.records])

    def series(self, name: str, fi: int = 0) -> np.ndarray:
        """``(replica, checkpoint)`` array of one record attribute."""
        return np.array([[getattr(rec, name) for rec in r[fi]] for r in self.records])


def run_one(params: SimParams, kernel, functions, replica: int, master_seed: int,
            eps_list=(), ell_list=(), weights=None, keep_trajectory=False):
    rng = replica_rng(master_seed, replica)
    init = sample_bernoulli(params.N, 0.5, rng)
    pn = build_pn(kernel, params.n, params.b)
    traj = run_kmc(init, pn, params.n, params.t_max, rng)
    recs = [decompose(traj, f, params, kernel, eps_list, ell_list, weights=w)
            for f, w in zip(functions, weights)]
    jumps = [jump_size(traj, f, params.n) for f in functions]
    return recs, jumps, traj.n_events, traj.attempts, (traj if keep_trajectory else None)


def run_replicas(params: SimParams, kernel, functions, replicas: int = 100, master_seed: int = 0,
                 threads: int = 1, eps_list=(), ell_list=(), replica_ids=None, fields_only=False):
    check_volume(kernel, params.N)
    if not params.checkpoint_times:
        params = SimParams(params.n, params.L, params.b, params.t_max, params.seed, (params.t_max,))
    ells = set(ell_list) | {eps_block(e, params.n) for e in eps_list}
    weights = [functional_weights(f, kernel, params.n, params.b, ells) for f in functions]
    ids = list(range(replicas)) if replica_ids is None else list(replica_ids)

    def job(i):
        return run_one(params, kernel, functions, i, master_seed, eps_list, ell_list, weights)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, ids))
    else:
        results = [job(i) for i in ids]
    records = [r[0] for r in results]
    Y = np.array([[[rec.Y for rec in recs] for recs in r] for r in records])
    out = ReplicaResults(
        params, list(functions), Y, [] if fields_only else records,
        np.array([r[1] for r in results]), np.array([r[2] for r in results]),
        np.array([r[3] for r in results]), ids,
    )
    log.info("ran %d replicas at n=%d: %.0f events/replica", len(ids), params.n, out.events.mean())
    return out
