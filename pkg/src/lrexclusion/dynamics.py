"""Exact continuous-time simulation of the accelerated exclusion process.

The generator is ``n^2 sum_{x,y} p_n(y-x) eta(x)(1-eta(y)) [F(eta^{x,y}) - F(eta)]``
on the torus of ``N = L n`` sites.  We simulate it by thinning: every particle
carries a clock of rate ``n^2 sum_z p_n(z)``; at a ring a displacement is drawn
from ``p_n / sum p_n`` and the jump is suppressed if the target is occupied.
Time is kept in macroscopic units throughout.

Random numbers come from a counter-based Philox stream keyed by
``(master_seed, replica)`` and are consumed in fixed-size blocks of three
variates per attempt (exponential, particle uniform, alias uniform), so a run
is bit-reproducible on any platform with the same numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .kernel import JumpDistribution, RateKernel, build_pn
from .lattice import Configuration

BLOCK = 1 << 16


class EmptyLattice(RuntimeError):
    pass


@dataclass
class SimParams:
    n: int
    L: int = 4
    b: float = 1.0
    t_max: float = 1.0
    seed: int = 0
    checkpoint_times: tuple = ()

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.t_max < 0:
            raise ValueError("t_max must be nonnegative")
        cps = tuple(float(t) for t in self.checkpoint_times)
        if any(b < a for a, b in zip(cps, cps[1:])):
            raise ValueError("checkpoint_times must be ascending")
        if cps and (cps[0] < 0 or cps[-1] > self.t_max + 1e-12):
            raise ValueError("checkpoint_times must lie in [0, t_max]")
        self.checkpoint_times = cps

    @property
    def N(self) -> int:
        return self.L * self.n


@dataclass
class Trajectory:
    """Initial state plus accepted swaps ``(t, x, y)``: a particle moved ``x -> y``."""

    initial: Configuration
    times: np.ndarray
    origins: np.ndarray
    targets: np.ndarray
    final_time: float
    attempts: int = 0
    observations: list = field(default_factory=list)

    @property
    def n_events(self) -> int:
        return len(self.times)

    def state_at(self, t: float) -> Configuration:
        """Configuration at time ``t`` (right-continuous) by replaying swaps."""
        k = int(np.searchsorted(self.times, t, side="right"))
        c = self.initial.copy()
        for x, y in zip(self.origins[:k], self.targets[:k]):
            c.swap(int(x), int(y))
        return c

    def final_state(self) -> Configuration:
        return self.state_at(self.final_time)


def replica_rng(master_seed: int, replica: int = 0) -> np.random.Generator:
    """Independent counter-based stream for replica ``replica``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(master_seed), int(replica)])))


def total_rate(pn: JumpDistribution, n: int, particles: int) -> float:
    return n * n * particles * pn.total


def step(config: Configuration, pn: JumpDistribution, n: int, rng: np.random.Generator):
    """One thinning attempt.  Returns ``(dt, (x, y))`` or ``(dt, None)`` for a null attempt."""
    if config.count == 0:
        raise EmptyLattice("no particles to move")
    dt = rng.standard_exponential() / total_rate(pn, n, config.count)
    u1, u2 = rng.random(2)
    x = int(config.particles[min(int(u1 * config.count), config.count - 1)])
    z = int(pn.displacements[_alias_col(pn.alias_prob, pn.alias_index, u2)])
    y = (x + z) % config.N
    if config.occ[y]:
        return dt, None
    config.swap(x, y)
    return dt, (x, y)


def _alias_col(prob, alias, u):
    k = len(prob)
    s = u * k
    col = min(int(s), k - 1)
    return col if s - col < prob[col] else int(alias[col])


@njit(cache=True, nogil=True)
def _kmc_block(occ, particles, slot, t, t_max, inv_rate, disp, aprob, aidx,
               expo, u1, u2, start, ev_t, ev_x, ev_y, n_ev):
    N = occ.shape[0]
    P = particles.shape[0]
    K = disp.shape[0]
    cap = ev_t.shape[0]
    i = start
    nb = expo.shape[0]
    while i < nb:
        if n_ev >= cap:
            return t, n_ev, i, 0
        tn = t + expo[i] * inv_rate
        if tn > t_max:
            return t, n_ev, i, 1
        t = tn
        p = int(u1[i] * P)
        if p >= P:
            p = P - 1
        s = u2[i] * K
        col = int(s)
        if col >= K:
            col = K - 1
        j = col if s - col < aprob[col] else aidx[col]
        x = particles[p]
        y = (x + disp[j]) % N
        if occ[y] == 0:
            occ[x] = 0
            occ[y] = 1
            particles[p] = y
            slot[y] = p
            slot[x] = -1
            ev_t[n_ev] = t
            ev_x[n_ev] = x
            ev_y[n_ev] = y
            n_ev += 1
        i += 1
    return t, n_ev, i, 2


def run_kmc(initial: Configuration, pn: JumpDistribution, n: int, t_max: float,
            rng: np.random.Generator) -> Trajectory:
    """Thinning KMC from ``initial`` up to macroscopic time ``t_max``."""
    if initial.count == 0:
        raise EmptyLattice("no particles to move")
    c = initial.copy()
    inv_rate = 1.0 / total_rate(pn, n, c.count)
    expected = t_max / inv_rate
    cap = max(1024, int(1.2 * expected) + 64)
    ev_t = np.empty(cap)
    ev_x = np.empty(cap, dtype=np.int64)
    ev_y = np.empty(cap, dtype=np.int64)
    n_ev = 0
    attempts = 0
    t = 0.0
    if t_max <= 0:
        return Trajectory(initial.copy(), ev_t[:0], ev_x[:0], ev_y[:0], float(t_max), 0)
    while True:
        expo = rng.standard_exponential(BLOCK)
        u = rng.random((2, BLOCK))
        start = 0
        while True:
            t, n_ev, i, status = _kmc_block(
                c.occ, c.particles, c.slot, t, t_max, inv_rate, pn.displacements,
                pn.alias_prob, pn.alias_index, expo, u[0], u[1], start, ev_t, ev_x, ev_y, n_ev)
            attempts += i - start
            start = i
            if status == 0:
                cap *= 2
                ev_t = np.resize(ev_t, cap)
                ev_x = np.resize(ev_x, cap)
                ev_y = np.resize(ev_y, cap)
                continue
            break
        if status == 1:
            break
    return Trajectory(initial.copy(), ev_t[:n_ev].copy(), ev_x[:n_ev].copy(), ev_y[:n_ev].copy(),
                      float(t_max), attempts)


def check_volume(kernel: RateKernel, N: int) -> None:
    if kernel.support_radius > N // 4:
        raise ValueError(f"support radius {kernel.support_radius} exceeds N/4 = {N // 4}")


def simulate(initial: Configuration, params: SimParams, kernel: RateKernel, observers=(),
             rng: np.random.Generator | None = None) -> Trajectory:
    """Run the dynamics and call each ``observer(t, config)`` at every checkpoint.

    Observer results are collected in ``trajectory.observations`` as
    ``(t, [result per observer])``; observers get a private copy of the state.
    """
    if initial.N != params.N:
        raise ValueError(f"configuration has {initial.N} sites, params expect {params.N}")
    check_volume(kernel, params.N)
    pn = build_pn(kernel, params.n, params.b)
    if rng is None:
        rng = replica_rng(params.seed)
    traj = run_kmc(initial, pn, params.n, params.t_max, rng)
    if observers:
        c = traj.initial.copy()
        k = 0
        for tc in params.checkpoint_times:
            while k < traj.n_events and traj.times[k] <= tc:
                c.swap(int(traj.origins[k]), int(traj.targets[k]))
                k += 1
            traj.observations.append((tc, [obs(tc, c.copy()) for obs in observers]))
    return traj


def reverse_time_law_check(params: SimParams, kernel: RateKernel, f, g, replicas: int = 200,
                           master_seed: int = 0, threads: int = 1) -> dict:
    """Compare the forward process, read backwards in time, with the reversed-kernel process.

    Under stationarity ``E_fwd[Y_0(f) Y_t(g)] = E_rev[Y_t(f) Y_0(g)]``, where the
    reversed process uses ``p*(z) = p(-z)``.  Returns per-checkpoint estimates and
    z-scores of the difference (the two runs are independent).
    """
    from .farm import run_replicas
    from .stats import mean_se

    times = [t for t in params.checkpoint_times if t > 0]
    p = SimParams(params.n, params.L, params.b, params.t_max, params.seed, tuple([0.0] + times))
    fwd = run_replicas(p, kernel, [f, g], replicas=replicas, master_seed=master_seed,
                       threads=threads, fields_only=True)
    rev = run_replicas(p, kernel.reversed(), [f, g], replicas=replicas, master_seed=master_seed + 1,
                       threads=threads, fields_only=True)
    out = {"times": times, "forward": [], "reversed": [], "z": []}
    for k, _ in enumerate(times, start=1):
        a, sa = mean_se(fwd.Y[:, 0, 0] * fwd.Y[:, 1, k])
        r, sr = mean_se(rev.Y[:, 0, k] * rev.Y[:, 1, 0])
        out["forward"].append((a, sa))
        out["reversed"].append((r, sr))
        out["z"].append((a - r) / math.hypot(sa, sr) if sa or sr else 0.0)
    v_f, s_f = mean_se(fwd.Y[:, 0, -1] ** 2)
    v_r, s_r = mean_se(rev.Y[:, 0, -1] ** 2)
    out["equal_time_variance"] = {"forward": (v_f, s_f), "reversed": (v_r, s_r),
                                  "z": (v_f - v_r) / math.hypot(s_f, s_r)}
    return out
