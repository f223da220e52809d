"""Exact enumeration oracles for the Dirichlet-form inequalities, deterministic
checks of the discrete-operator limits, and Monte-Carlo estimators for the
variance bounds on the replacement errors.

Enumeration treats functions ``h`` of the full torus configuration as tables
over all ``2^N`` configurations (integer ``c`` encodes site ``x`` in bit ``x``),
equally weighted under the Bernoulli(1/2) product measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import (TestFunction, discrete_generator, lattice_values, tilted_grad)
from .kernel import RateKernel, moments
from .stats import fit_exponent, mean_se

MAX_SITES = 20
REL_TOL = 1e-12


class WindowTooLarge(ValueError):
    pass


def _check_sites(N: int) -> None:
    if N > MAX_SITES:
        raise WindowTooLarge(f"exact enumeration over 2^{N} configurations is not supported (N <= {MAX_SITES})")


@dataclass
class LocalFunction:
    """Function of the ``window`` consecutive sites starting at ``anchor``."""

    window: int
    table: np.ndarray
    anchor: int = 0

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=float)
        if self.window > MAX_SITES:
            raise WindowTooLarge(f"window {self.window} > {MAX_SITES}")
        if len(self.table) != 1 << self.window:
            raise ValueError(f"table needs 2^{self.window} entries, got {len(self.table)}")

    def index(self, occ) -> int:
        N = len(occ)
        return sum(int(occ[(self.anchor + i) % N]) << i for i in range(self.window))

    def __call__(self, config) -> float:
        occ = config.occ if hasattr(config, "occ") else config
        return float(self.table[self.index(occ)])

    def full_table(self, N: int) -> np.ndarray:
        """Values over all ``2^N`` torus configurations."""
        _check_sites(N)
        if self.window > N:
            raise WindowTooLarge(f"window {self.window} exceeds the torus size {N}")
        c = np.arange(1 << N, dtype=np.int64)
        idx = np.zeros_like(c)
        for i in range(self.window):
            idx |= ((c >> ((self.anchor + i) % N)) & 1) << i
        return self.table[idx]

    @classmethod
    def random(cls, window: int, rng, anchor: int = 0) -> "LocalFunction":
        return cls(window, rng.standard_normal(1 << window), anchor)


def swap_permutation(x: int, y: int, N: int) -> np.ndarray:
    """Index map ``c -> c^{x,y}`` on configuration integers."""
    c = np.arange(1 << N, dtype=np.int64)
    x %= N
    y %= N
    diff = ((c >> x) ^ (c >> y)) & 1
    return c ^ ((diff << x) | (diff << y))


def _table(h, N: int) -> np.ndarray:
    if isinstance(h, LocalFunction):
        return h.full_table(N)
    h = np.asarray(h, dtype=float)
    if h.shape[-1] != 1 << N:
        raise ValueError(f"table has {h.shape[-1]} entries, expected 2^{N}")
    return h


class _Swaps:
    def __init__(self, N):
        self.N = N
        self.cache = {}

    def __call__(self, x, y):
        key = (min(x % self.N, y % self.N), max(x % self.N, y % self.N))
        if key not in self.cache:
            self.cache[key] = swap_permutation(*key, self.N)
        return self.cache[key]


def dirichlet_I(h, y: int, yp: int, N: int, _swaps=None) -> np.ndarray | float:
    """``I_{y,y'}(h) = E[(h(eta^{y,y'}) - h(eta))^2]`` under Bernoulli(1/2)."""
    _check_sites(N)
    tab = _table(h, N)
    if y % N == yp % N:
        return np.zeros(tab.shape[:-1]) if tab.ndim > 1 else 0.0
    perm = (_swaps or _Swaps(N))(y, yp)
    out = np.mean((tab[..., perm] - tab) ** 2, axis=-1)
    return out if tab.ndim > 1 else float(out)


def dirichlet_form(h, N: int, _swaps=None):
    """``D(h) = 1/2 sum_x I_{x,x+1}(h)`` on the torus."""
    tab = _table(h, N)
    sw = _swaps or _Swaps(N)
    return 0.5 * sum(dirichlet_I(tab, x, x + 1, N, sw) for x in range(N))


def generator_form(h, kernel: RateKernel, N: int, _swaps=None):
    """``<h, -S h> = 1/2 sum_{x, z>0} s(z) I_{x,x+z}(h)`` on the torus."""
    if 2 * kernel.support_radius >= N:
        raise ValueError(f"kernel radius {kernel.support_radius} too large for a torus of {N} sites")
    tab = _table(h, N)
    sw = _swaps or _Swaps(N)
    total = 0.0
    for z in kernel.positive_support:
        s = kernel.s(z)
        if s:
            total = total + s * sum(dirichlet_I(tab, x, x + z, N, sw) for x in range(N))
    return 0.5 * total


def check_moving_particle(h, x: int, z: int, N: int, _swaps=None) -> dict:
    """Both sides of ``I_{x,x+z} <= (4z-3) sum_{y=x}^{x+z-1} I_{y,y+1}``, exactly."""
    if not 1 <= z <= N // 2:
        raise ValueError(f"need 1 <= z <= N/2, got z={z}")
    tab = _table(h, N)
    sw = _swaps or _Swaps(N)
    lhs = np.atleast_1d(dirichlet_I(tab, x, x + z, N, sw))
    chain = np.atleast_1d(sum(dirichlet_I(tab, y, y + 1, N, sw) for y in range(x, x + z)))
    rhs = (4 * z - 3) * chain
    violations = int(np.sum(lhs > rhs * (1 + REL_TOL) + 1e-15))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(chain > 0, lhs / chain, 0.0)
    return {"x": x, "z": z, "factor": 4 * z - 3, "lhs": lhs, "rhs": rhs,
            "violations": violations, "minimal_factor": float(ratio.max(initial=0.0))}


def check_equiv_dirichlet(kernel: RateKernel, N: int, trials: int, rng, window: int | None = None) -> dict:
    """``c1 <h,-Sh> <= D(h) <= c2 <h,-Sh>`` for random Gaussian tables ``h``."""
    if N > 16:
        raise WindowTooLarge(f"N={N} > 16")
    mom = moments(kernel)
    w = N if window is None else window
    tabs = np.stack([LocalFunction.random(w, rng).full_table(N) for _ in range(trials)])
    sw = _Swaps(N)
    D = dirichlet_form(tabs, N, sw)
    G = generator_form(tabs, kernel, N, sw)
    nonconst = G > 1e-14
    ratio = D[nonconst] / G[nonconst]
    lower = int(np.sum(mom.c1 * G > D * (1 + REL_TOL) + 1e-15))
    upper = int(np.sum(D > mom.c2 * G * (1 + REL_TOL) + 1e-15))
    return {"c1": mom.c1, "c2": mom.c2, "trials": trials, "N": N,
            "min_ratio": float(ratio.min()), "max_ratio": float(ratio.max()),
            "lower_violations": lower, "upper_violations": upper,
            "D": D, "G": G}


def moving_particle_suite(N: int, trials: int, z_max: int, rng) -> dict:
    """Moving-particle inequality for every ``(x, z <= z_max)`` over random tables."""
    tabs = rng.standard_normal((trials, 1 << N))
    sw = _Swaps(N)
    nn = np.stack([dirichlet_I(tabs, y, y + 1, N, sw) for y in range(N)])
    violations = 0
    worst = {}
    for z in range(1, z_max + 1):
        for x in range(N):
            lhs = dirichlet_I(tabs, x, x + z, N, sw)
            chain = sum(nn[(x + i) % N] for i in range(z))
            violations += int(np.sum(lhs > (4 * z - 3) * chain * (1 + REL_TOL) + 1e-15))
            worst[z] = max(worst.get(z, 0.0), float(np.max(lhs / chain)))
    return {"N": N, "trials": trials, "z_max": z_max, "violations": violations, "minimal_factor": worst}


# -- deterministic discrete-approximation checks ----------------------------------

@dataclass
class LemmaReport:
    lemma: str
    grid: list
    errors: dict
    exponents: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    passed: bool = False

    def as_dict(self) -> dict:
        return {"lemma": self.lemma, "grid": list(self.grid), "errors": self.errors,
                "exponents": self.exponents, "extra": self.extra, "pass": self.passed}


def appendix_errors(f: TestFunction, kernel: RateKernel, n: int) -> dict:
    mom = moments(kernel)
    u = np.arange(int(round(f.L * n))) / n
    S = discrete_generator(f, kernel, n)
    target = 0.5 * mom.sigma2 * f(u, 2)
    fv = lattice_values(f, n)
    dsum = sum(s * np.sum((n * (np.roll(fv, -z) - fv)) ** 2) for z, s in kernel.s_values.items()) / n
    tg = tilted_grad(f, kernel, n)
    exact = mom.sigma2 * f.norms["d1_l2_sq"]
    return {
        "sup_generator": float(np.max(np.abs(S - target))),
        "l1_generator": float(np.sum(np.abs(S - target)) / n),
        "energy": float(abs(dsum - exact)),
        "tilted_gradient": float(np.sum((tg - mom.m * f(u, 1)) ** 2) / n),
        "energy_value": float(dsum),
        "energy_limit": float(exact),
    }


def check_appendix_lemmas(f: TestFunction, kernel: RateKernel, n_list) -> LemmaReport:
    """Error sequences of the four discrete approximations; pass iff each strictly
    decreases along ``n_list`` with a negative fitted exponent."""
    rows = [appendix_errors(f, kernel, n) for n in n_list]
    keys = ["sup_generator", "l1_generator", "energy", "tilted_gradient"]
    errors = {k: [r[k] for r in rows] for k in keys}
    exps = {k: fit_exponent(n_list, errors[k])[0] if min(errors[k]) > 0 else -math.inf for k in keys}
    ok = all(all(b < a for a, b in zip(v, v[1:])) and exps[k] < 0 for k, v in errors.items())
    extra = {"energy_value": [r["energy_value"] for r in rows], "energy_limit": rows[0]["energy_limit"]}
    return LemmaReport("discrete_approximations", list(n_list), errors, exps, extra, ok)


# -- Monte-Carlo estimators of the replacement errors ------------------------------

def _sum_tg2(f, kernel, n):
    return float(np.sum(tilted_grad(f, kernel, n) ** 2))


def estimate_ibp_error(n_list, kernel: RateKernel, f: TestFunction, replicas: int, t: float = 0.25,
                       L: int = 4, b: float = 1.0, master_seed: int = 0, threads: int = 1,
                       window=(-1.4, -0.6)) -> LemmaReport:
    """``E[R_t^2]`` with ``R = A - A^`` at each ``n``; fit of the decay exponent in ``n``.

    Also records ``E[R_s^2]`` on a time grid (monotone in ``s``) and the ratio to
    ``min(t/n, t^2 n)``.
    """
    from .dynamics import SimParams
    from .farm import run_replicas

    times = (t / 4, t / 2, t)
    means, ses, by_time, crude = [], [], [], []
    for i, n in enumerate(n_list):
        p = SimParams(n, L, b, t, checkpoint_times=times)
        res = run_replicas(p, kernel, [f], replicas, master_seed + 1000 * i, threads)
        R = res.series("R")
        m, s = mean_se(R[:, -1] ** 2)
        means.append(m)
        ses.append(s)
        by_time.append([mean_se(R[:, c] ** 2)[0] for c in range(len(times))])
        crude.append(m / min(t / n, t * t * n))
    slope, slope_se = fit_exponent(n_list, means)
    monotone = all(all(b > a for a, b in zip(row, row[1:])) for row in by_time)
    ok = window[0] <= slope <= window[1]
    return LemmaReport("integration_by_parts", list(n_list), {"E_R2": means, "se": ses},
                       {"n": slope, "n_se": slope_se},
                       {"t": t, "times": times, "E_R2_by_time": by_time, "monotone_in_t": monotone,
                        "ratio_to_crude_bound": crude}, ok)


def pair_profile(ell: int) -> float:
    """``G(ell) = sum_{r=1}^{ell-1} F(r)^2`` with ``F(r) = (ell-r)(ell-r-1)/(ell(ell-1))``.

    ``psi^ell`` is the uniform average of ``eta_(i) eta_(j)`` over pairs in the
    block, so ``eta_(x) eta_(x+1) - psi^ell`` moves weight from separation 1 to
    separations ``r < ell`` with tail mass ``F(r)``.  For a slowly varying test
    function the time-integrated variance is proportional to the inverse
    Dirichlet norm of that move in the separation coordinate, ``G(ell)``.
    ``G(2) = 0`` and ``G(ell) <= ell/5`` with ``G(ell)/ell -> 1/5``, so the ratio
    ``error/G`` being flat in ``ell`` is the finite-ell form of linear growth.
    """
    r = np.arange(1, ell)
    F = (ell - r) * (ell - r - 1) / (ell * (ell - 1))
    return float(np.sum(F * F))


def estimate_bg_error(n: int, kernel: RateKernel, f: TestFunction, ell_list, replicas: int,
                      t: float = 0.25, L: int = 4, b: float = 1.0, master_seed: int = 0,
                      threads: int = 1, linear_slack: float = 0.2, gap_window=(-2.5, -1.5)) -> LemmaReport:
    """Second-order Boltzmann-Gibbs replacement error and the psi/psi~ gap versus ``ell``.

    ``bg[ell] = E[(int sum (eta_ eta_+1 - psi^ell) tg ds)^2]`` must grow at most
    linearly: the fitted exponent of ``bg/G(ell)`` (see ``pair_profile``) must
    not exceed ``linear_slack``.  The raw log-log exponent of ``bg`` is reported
    too; over small ``ell`` it overstates the growth because ``bg(2) = 0``.
    The gap ``E[(int sum (psi - psi~) tg ds)^2]`` must decay with exponent in
    ``gap_window``.
    """
    from .dynamics import SimParams
    from .farm import run_replicas

    p = SimParams(n, L, b, t, checkpoint_times=(t,))
    res = run_replicas(p, kernel, [f], replicas, master_seed, threads, ell_list=tuple(ell_list))
    J = res.column("J")
    bg, bg_se, gap, gap_se = [], [], [], []
    for ell in ell_list:
        psi_i = np.array([r[0][-1].psi_int[ell] for r in res.records])
        psit = np.array([r[0][-1].psi_tilde_int[ell] for r in res.records])
        m, s = mean_se((J - psi_i) ** 2)
        bg.append(m)
        bg_se.append(s)
        m, s = mean_se((psi_i - psit) ** 2)
        gap.append(m)
        gap_se.append(s)
    scale = t * _sum_tg2(f, kernel, n)
    fit = [i for i, ell in enumerate(ell_list) if ell > 2]
    ells = [ell_list[i] for i in fit]
    raw_slope, raw_se = fit_exponent(ells, [bg[i] for i in fit])
    shape = [bg[i] / pair_profile(ell_list[i]) for i in fit]
    shape_slope, shape_se = fit_exponent(ells, shape)
    gap_slope, gap_slope_se = fit_exponent(ell_list, gap)
    ok = shape_slope <= linear_slack and gap_window[0] <= gap_slope <= gap_window[1]
    return LemmaReport(
        "boltzmann_gibbs", list(ell_list),
        {"bg": bg, "bg_se": bg_se, "gap": gap, "gap_se": gap_se},
        {"bg_shape": shape_slope, "bg_shape_se": shape_se, "bg_ell": raw_slope, "bg_ell_se": raw_se,
         "gap_ell": gap_slope, "gap_ell_se": gap_slope_se},
        {"n": n, "t": t,
         "bg_over_profile": shape,
         "bg_constant": [v * n * n / (ell * scale) for v, ell in zip(bg, ell_list)],
         "gap_constant": [v * ell * ell / scale for v, ell in zip(gap, ell_list)]},
        ok)


def increment_moments(series: np.ndarray, times, gaps) -> dict:
    """``E[(X_{s+g} - X_s)^2]`` per gap, pooled over every start ``s`` on the grid.

    ``series`` has shape ``(replica, len(times))``.  Also returns the per-start
    estimates to check that they depend on the gap only.
    """
    times = np.asarray(times, dtype=float)
    out = {}
    for g in gaps:
        per_start = []
        for i, s in enumerate(times):
            j = np.flatnonzero(np.isclose(times, s + g))
            if len(j):
                d2 = (series[:, j[0]] - series[:, i]) ** 2
                per_start.append((float(s), *mean_se(d2)))
        if per_start:
            out[g] = per_start
    return out


def check_time_regularity(series: np.ndarray, times, gaps, min_exponent: float = 1.2) -> LemmaReport:
    """Fitted exponent of ``E[(A^_t - A^_s)^2]`` in ``|t-s|`` must be at least ``min_exponent``."""
    inc = increment_moments(series, times, gaps)
    gs = sorted(inc)
    vals = [float(np.mean([m for _, m, _ in inc[g]])) for g in gs]
    ses = [float(np.sqrt(np.mean([s * s for _, _, s in inc[g]]))) for g in gs]
    if len(gs) < 2 or min(vals) <= 0:
        return LemmaReport("time_regularity", gs, {"increment_m2": vals}, {}, {}, False)
    slope, slope_se = fit_exponent(gs, vals)
    # spread of per-start estimates at each gap, in units of their standard errors
    spread = {}
    for g in gs:
        ms = np.array([m for _, m, _ in inc[g]])
        ss = np.array([s for _, _, s in inc[g]])
        spread[g] = float(np.max(np.abs(ms - ms.mean()) / np.maximum(ss, 1e-300))) if len(ms) > 1 else 0.0
    return LemmaReport("time_regularity", gs, {"increment_m2": vals, "se": ses},
                       {"gap": slope, "gap_se": slope_se}, {"stationarity_spread_se": spread},
                       slope >= min_exponent)
