"""Test functions, discrete operators and the additive functionals of the fluctuation field.

Everything lives on the torus of ``N = L n`` sites, i.e. the macroscopic circle
``[0, L)``.  Test functions are Schwartz functions wrapped around that circle.

The observables along a trajectory are integrals of piecewise-constant
functions of the configuration, so ``decompose`` accumulates them exactly,
event by event, updating each integrand incrementally when a particle moves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from numpy.polynomial import Polynomial
from scipy.special import gamma as gamma_fn

from .kernel import RateKernel, build_pn
from .lattice import Configuration, block_sums


class DegenerateBlock(ValueError):
    pass


class EmptyTrajectory(ValueError):
    pass


class TestFunction:
    """``f(u) = P((u - c)/s) exp(-((u - c)/s)^2 / 2)`` wrapped onto ``[0, L)``.

    Derivatives are exact: each one maps ``P -> P' - vP`` and divides by ``s``.
    ``norms`` holds torus values of ``||f||_inf``, ``||f''||_inf`` (grid
    maxima), ``||f||^2`` and ``||f'||^2``.
    """

    __test__ = False  # not a pytest class

    def __init__(self, poly, center, scale, L, name="f", family="custom", params=None):
        self.poly = Polynomial(poly)
        self.center = float(center)
        self.scale = float(scale)
        self.L = float(L)
        self.name = name
        self.family = family
        self.params = dict(params or {})
        self._derivs = [self.poly]
        for _ in range(4):
            p = self._derivs[-1]
            self._derivs.append(p.deriv() - Polynomial([0, 1]) * p)
        reach = 12.0 + 2.0 * math.sqrt(self.poly.degree() + 1)
        self._images = int(math.ceil(reach * self.scale / self.L)) + 1
        self.norms = self._norms()

    def __call__(self, u, deriv: int = 0):
        u = np.asarray(u, dtype=float)
        p = self._derivs[deriv]
        out = np.zeros_like(u)
        for k in range(-self._images, self._images + 1):
            v = (u - self.center - k * self.L) / self.scale
            out += p(v) * np.exp(-0.5 * v * v)
        return out / self.scale ** deriv

    def _gauss_square_integral(self, p: Polynomial) -> float:
        # int p(v)^2 exp(-v^2) dv from the even moments Gamma(j + 1/2)
        q = (p * p).coef
        return float(sum(c * gamma_fn(j / 2 + 0.5) for j, c in enumerate(q) if j % 2 == 0))

    def _norms(self) -> dict:
        # periodic trapezoid sums are spectrally accurate for these smooth periodic functions
        M = 1 << 15
        u = np.arange(M) * (self.L / M)
        du = self.L / M
        return {
            "sup": float(np.max(np.abs(self(u)))),
            "sup_d2": float(np.max(np.abs(self(u, 2)))),
            "l2_sq": float(np.sum(self(u) ** 2) * du),
            "d1_l2_sq": float(np.sum(self(u, 1) ** 2) * du),
        }

    def full_line_norms(self) -> dict:
        """Closed-form ``||f||^2`` and ``||f'||^2`` of the unwrapped function."""
        return {
            "l2_sq": self.scale * self._gauss_square_integral(self._derivs[0]),
            "d1_l2_sq": self._gauss_square_integral(self._derivs[1]) / self.scale,
        }

    def quadrature_d1_l2_sq(self, points: int = 200001) -> float:
        from scipy.integrate import trapezoid

        u = np.linspace(0.0, self.L, points)
        return float(trapezoid(self(u, 1) ** 2, u))

    def fourier(self, M: int = 4096) -> np.ndarray:
        """``hat f_k = int_0^L f(u) e^{-2 pi i k u / L} du`` for ``k = 0..M/2`` (rfft order)."""
        u = np.arange(M) * self.L / M
        return np.fft.rfft(self(u)) * self.L / M

    def describe(self) -> dict:
        return {"name": self.name, "family": self.family, **self.params}

    def __repr__(self):
        return f"TestFunction({self.name!r}, {self.family}, {self.params})"


def gaussian(center, width, L, amplitude=1.0, name="f") -> TestFunction:
    return TestFunction([amplitude], center, width, L, name, "gaussian",
                        {"center": center, "width": width, "amplitude": amplitude})


def hermite(order, scale, L, center=None, name="f") -> TestFunction:
    """Physicists' Hermite polynomial ``H_order`` times the Gaussian envelope."""
    from numpy.polynomial.hermite import herm2poly

    coef = herm2poly([0] * order + [1])
    c = L / 2 if center is None else center
    return TestFunction(coef, c, scale, L, name, "hermite", {"order": order, "scale": scale, "center": c})


def test_function_from_config(spec: dict, L) -> TestFunction:
    family = spec.get("family", "gaussian")
    name = spec.get("name", family)
    if family == "gaussian":
        return gaussian(spec.get("center", L / 2), spec["width"], L, spec.get("amplitude", 1.0), name)
    if family == "hermite":
        return hermite(int(spec["order"]), spec["scale"], L, spec.get("center"), name)
    raise ValueError(f"unknown test function family {family!r}")


# -- discrete operators -------------------------------------------------------------

def lattice_values(f: TestFunction, n: int, deriv: int = 0) -> np.ndarray:
    N = int(round(f.L * n))
    return f(np.arange(N) / n, deriv)


def _check_torus(f: TestFunction, n: int) -> int:
    N = f.L * n
    if abs(N - round(N)) > 1e-9:
        raise ValueError(f"L * n = {N} is not an integer")
    return int(round(N))


def discrete_generator(f: TestFunction, kernel: RateKernel, n: int, x=None):
    """``S_n f(x/n) = n^2 sum_z s(z) (f((x+z)/n) - f(x/n))`` (all sites if ``x`` is None)."""
    N = _check_torus(f, n)
    fv = lattice_values(f, n)
    out = np.zeros(N)
    for z, s in kernel.s_values.items():
        if s:
            out += s * (np.roll(fv, -z) - fv)
    out *= n * n
    return out if x is None else out[x % N]


def grad(f: TestFunction, n: int, x, z):
    """``n (f((x+z)/n) - f(x/n))``."""
    x = np.asarray(x)
    return n * (f((x + z) / n) - f(x / n))


def tilted_grad(f: TestFunction, kernel: RateKernel, n: int, x=None):
    """``2 sum_{z>0} a(z) grad_{x,x+z} f``; tends to ``m f'(x/n)``."""
    N = _check_torus(f, n)
    fv = lattice_values(f, n)
    out = np.zeros(N)
    for z in kernel.positive_support:
        a = kernel.a(z)
        if a:
            out += a * (np.roll(fv, -z) - fv)
    out *= 2 * n
    return out if x is None else out[x % N]


def fluctuation_field(config: Configuration, f: TestFunction, n: int) -> float:
    """``Y(f) = n^{-1/2} sum_x (eta(x) - 1/2) f(x/n)``."""
    fv = lattice_values(f, n)
    if len(fv) != config.N:
        raise ValueError(f"test function torus has {len(fv)} sites, configuration {config.N}")
    return float(np.dot(config.occ - 0.5, fv) / math.sqrt(n))


def psi(config: Configuration, x: int, ell: int):
    """Block functionals ``(psi_x^ell, psi~_x^ell)`` of the block density ``eta^ell(x)``."""
    if ell < 2:
        raise DegenerateBlock(f"psi needs a block of at least 2 sites, got {ell}")
    d = config.block_average(x, ell) - 0.5
    tilde = d * d
    return ell / (ell - 1) * tilde - 1.0 / (4 * (ell - 1)), tilde


def psi_tilde(config: Configuration, x: int, ell: int) -> float:
    d = config.block_average(x, ell) - 0.5
    return d * d


def eps_block(eps: float, n: int) -> int:
    """Block length ``eps n`` rounded to the nearest integer, at least 2."""
    return max(2, int(round(eps * n)))


# -- additive functionals ----------------------------------------------------------

@dataclass
class FunctionalWeights:
    """Per-site weights of every integrand for one ``(f, kernel, n, b)``."""

    n: int
    gamma_n: float
    b: float
    fv: np.ndarray        # f(x/n)/sqrt(n)
    sfv: np.ndarray       # S_n f(x/n)/sqrt(n)
    zpos: np.ndarray      # positive displacements of a
    WA: np.ndarray        # a(z) grad_{x,x+z} f, shape (N, len(zpos))
    tg: np.ndarray        # tilted gradient
    disp: np.ndarray      # signed displacements of p_n
    KQ: np.ndarray        # n p_n(d) (f((x+d)/n) - f(x/n))^2, shape (N, len(disp))
    ells: np.ndarray


def functional_weights(f: TestFunction, kernel: RateKernel, n: int, b: float, ells=()) -> FunctionalWeights:
    N = _check_torus(f, n)
    pn = build_pn(kernel, n, b)
    fv = lattice_values(f, n)
    rt = math.sqrt(n)
    zpos = np.array([z for z in kernel.positive_support if kernel.a(z) != 0], dtype=np.int64)
    WA = np.zeros((N, max(len(zpos), 1)))
    for j, z in enumerate(zpos):
        WA[:, j] = kernel.a(z) * n * (np.roll(fv, -z) - fv)
    if len(zpos) == 0:
        zpos = np.array([1], dtype=np.int64)
    disp = pn.displacements
    KQ = np.empty((N, len(disp)))
    for j, d in enumerate(disp):
        KQ[:, j] = n * pn.probs[j] * (np.roll(fv, -d) - fv) ** 2
    ells = np.array(sorted(set(int(e) for e in ells)), dtype=np.int64)
    return FunctionalWeights(n, pn.gamma_n, b, fv / rt, discrete_generator(f, kernel, n) / rt,
                             zpos, WA, tilted_grad(f, kernel, n), disp, KQ, ells)


def integrands(occ, w: FunctionalWeights) -> np.ndarray:
    """From-scratch values ``[Y, Y(S_n f), U, J, QV rate, Psi~_ell...]`` at one configuration.

    ``U = sum_{x,z>0} eta_(x) eta_(x+z) a(z) grad f`` (so ``dA/dt = -2b U``),
    ``J = sum_x eta_(x) eta_(x+1) tilde-grad f`` (so ``dA^/dt = -b J``), with
    ``eta_ = eta - 1/2``.
    """
    occ = np.asarray(occ, dtype=float)
    e = occ - 0.5
    out = np.empty(5 + len(w.ells))
    out[0] = e @ w.fv
    out[1] = e @ w.sfv
    out[2] = sum(e @ (np.roll(e, -z) * w.WA[:, j]) for j, z in enumerate(w.zpos))
    out[3] = e @ (np.roll(e, -1) * w.tg)
    out[4] = sum(occ @ ((1 - np.roll(occ, -d)) * w.KQ[:, j]) for j, d in enumerate(w.disp))
    for i, ell in enumerate(w.ells):
        d = block_sums(occ.astype(np.int64), ell) / ell - 0.5
        out[5 + i] = (d * d) @ w.tg
    return out


@njit(cache=True, nogil=True)
def _flip(u, newv, occ, vals, fv, sfv, zpos, WA, tg, disp, KQ, ells, bsum):
    N = occ.shape[0]
    dv = float(newv) - float(occ[u])
    vals[0] += dv * fv[u]
    vals[1] += dv * sfv[u]
    acc = 0.0
    for j in range(zpos.shape[0]):
        z = zpos[j]
        acc += (occ[(u + z) % N] - 0.5) * WA[u, j]
        xm = (u - z) % N
        acc += (occ[xm] - 0.5) * WA[xm, j]
    vals[2] += dv * acc
    um = (u - 1) % N
    vals[3] += dv * ((occ[(u + 1) % N] - 0.5) * tg[u] + (occ[um] - 0.5) * tg[um])
    acc = 0.0
    for j in range(disp.shape[0]):
        d = disp[j]
        acc += (1.0 - occ[(u + d) % N]) * KQ[u, j]
        xm = (u - d) % N
        acc -= occ[xm] * KQ[xm, j]
    vals[4] += dv * acc
    for i in range(ells.shape[0]):
        ell = ells[i]
        acc = 0.0
        for k in range(ell):
            x = (u - k) % N
            old = bsum[i, x] / ell - 0.5
            bsum[i, x] += dv
            new = bsum[i, x] / ell - 0.5
            acc += (new * new - old * old) * tg[x]
        vals[5 + i] += acc
    occ[u] = newv


@njit(cache=True, nogil=True)
def _replay(occ, vals, bsum, ev_t, ev_x, ev_y, cps, t_end, fv, sfv, zpos, WA, tg, disp, KQ, ells, snap, ints):
    nv = vals.shape[0]
    integ = np.zeros(nv)
    t = 0.0
    k = 0
    ne = ev_t.shape[0]
    for c in range(cps.shape[0]):
        tc = cps[c]
        while k < ne and ev_t[k] <= tc:
            te = ev_t[k]
            for i in range(nv):
                integ[i] += vals[i] * (te - t)
            t = te
            _flip(ev_x[k], 0, occ, vals, fv, sfv, zpos, WA, tg, disp, KQ, ells, bsum)
            _flip(ev_y[k], 1, occ, vals, fv, sfv, zpos, WA, tg, disp, KQ, ells, bsum)
            k += 1
        for i in range(nv):
            integ[i] += vals[i] * (tc - t)
            snap[c, i] = vals[i]
            ints[c, i] = integ[i]
        t = tc
    return k


@dataclass
class MartingaleRecord:
    t: float
    Y: float
    Y0: float
    drift_int: float
    A: float
    A_hat: float
    R: float
    M: float
    QV: float
    A_eps: dict = field(default_factory=dict)
    J: float = 0.0
    U: float = 0.0
    psi_int: dict = field(default_factory=dict)
    psi_tilde_int: dict = field(default_factory=dict)

    def nonlinear_drift(self, gamma_n, n) -> float:
        return -2.0 * gamma_n * math.sqrt(n) * self.U


def replay_functionals(trajectory, w: FunctionalWeights, checkpoints):
    """Raw exact integrals: ``(values at checkpoints, time integrals up to checkpoints)``."""
    occ = trajectory.initial.occ.astype(np.float64).copy()
    if len(occ) != len(w.fv):
        raise ValueError("trajectory and test function live on different tori")
    vals = integrands(occ, w)
    bsum = np.zeros((len(w.ells), len(occ)))
    for i, ell in enumerate(w.ells):
        bsum[i] = block_sums(trajectory.initial.occ, ell)
    cps = np.asarray(checkpoints, dtype=float)
    snap = np.zeros((len(cps), len(vals)))
    ints = np.zeros((len(cps), len(vals)))
    _replay(occ, vals, bsum, trajectory.times, trajectory.origins, trajectory.targets, cps,
            trajectory.final_time, w.fv, w.sfv, w.zpos, w.WA, w.tg, w.disp, w.KQ, w.ells, snap, ints)
    return snap, ints, vals


def decompose(trajectory, f: TestFunction, params, kernel: RateKernel, eps_list=(), ell_list=(),
              weights: FunctionalWeights | None = None):
    """Exact Dynkin decomposition of ``Y_t(f)`` at every checkpoint of ``params``.

    ``M = Y_t - Y_0 - int Y(S_n f) - (gamma_n sqrt(n)/b) A_t`` with
    ``A_t = -2b int sum_{x,z>0} eta_(x) eta_(x+z) a(z) grad f``.
    """
    if trajectory is None:
        raise EmptyTrajectory("no trajectory")
    cps = list(params.checkpoint_times) or [trajectory.final_time]
    n, b = params.n, params.b
    eps_ells = {eps: eps_block(eps, n) for eps in eps_list}
    for ell in ell_list:
        if ell < 2:
            raise DegenerateBlock(f"block length {ell} < 2")
    w = weights or functional_weights(f, kernel, n, b, set(ell_list) | set(eps_ells.values()))
    snap, ints, _ = replay_functionals(trajectory, w, cps)
    Y0 = integrands(trajectory.initial.occ, w)[0]
    g = w.gamma_n * math.sqrt(n)
    total_tg = float(w.tg.sum())
    ell_index = {int(e): i for i, e in enumerate(w.ells)}
    records = []
    for c, t in enumerate(cps):
        Y, drift, U, J, QV = snap[c, 0], ints[c, 1], ints[c, 2], ints[c, 3], ints[c, 4]
        A = -2.0 * b * U
        A_hat = -b * J
        psit = {ell: ints[c, 5 + ell_index[ell]] for ell in ell_list}
        psi_i = {ell: ell / (ell - 1) * psit[ell] - t * total_tg / (4 * (ell - 1)) for ell in ell_list}
        records.append(MartingaleRecord(
            t=float(t), Y=float(Y), Y0=float(Y0), drift_int=float(drift), A=float(A), A_hat=float(A_hat),
            R=float(A - A_hat), M=float(Y - Y0 - drift + 2.0 * g * U), QV=float(QV),
            A_eps={eps: float(ints[c, 5 + ell_index[ell]]) for eps, ell in eps_ells.items()},
            J=float(J), U=float(U), psi_int=psi_i, psi_tilde_int=psit,
        ))
    return records


def jump_size(trajectory, f: TestFunction, n: int) -> float:
    """Largest ``|Y_t(f) - Y_{t-}(f)|`` over the accepted swaps."""
    if trajectory.n_events == 0:
        return 0.0
    fv = lattice_values(f, n)
    return float(np.max(np.abs(fv[trajectory.targets] - fv[trajectory.origins])) / math.sqrt(n))


def jump_bound(f: TestFunction, n: int) -> float:
    return 2.0 * max(f.norms["sup"], float(np.max(np.abs(lattice_values(f, n))))) / math.sqrt(n)


def dynkin_martingale(trajectory, f: TestFunction, kernel: RateKernel, params, times):
    """``Y_t - Y_0 - int L_n Y ds`` straight from the generator, one holding interval at a time.

    Brute force (O(N |support|) per event); used to cross-check ``decompose``.
    """
    n = params.n
    pn = build_pn(kernel, n, params.b)
    fv = lattice_values(f, n) / math.sqrt(n)
    diffs = [(d, p, np.roll(fv, -d) - fv) for d, p in zip(pn.displacements, pn.probs)]

    def generator_Y(occ):
        occ = occ.astype(float)
        return n * n * sum(p * np.dot(occ * (1 - np.roll(occ, -d)), df) for d, p, df in diffs)

    c = trajectory.initial.copy()
    Y0 = float(np.dot(c.occ - 0.5, fv))
    out = []
    integral, t, k = 0.0, 0.0, 0
    for tc in times:
        while k < trajectory.n_events and trajectory.times[k] <= tc:
            integral += generator_Y(c.occ) * (trajectory.times[k] - t)
            t = trajectory.times[k]
            c.swap(int(trajectory.origins[k]), int(trajectory.targets[k]))
            k += 1
        integral += generator_Y(c.occ) * (tc - t)
        t = tc
        out.append(float(np.dot(c.occ - 0.5, fv)) - Y0 - integral)
    return out


def expected_qv_rate(f: TestFunction, kernel: RateKernel, n: int) -> float:
    """``(1/(4n)) sum_{x,y} s(y-x) (grad_{x,y} f)^2``: stationary mean of ``d<M>/dt``."""
    fv = lattice_values(f, n)
    tot = sum(s * np.sum((n * (np.roll(fv, -z) - fv)) ** 2) for z, s in kernel.s_values.items())
    return tot / (4 * n)


def qv_rate_bound(f: TestFunction, kernel: RateKernel, n: int) -> float:
    """``(2/n) sum_{x,y} s(y-x) (grad f)^2``, an upper bound for ``d<M>/dt``."""
    return 8.0 * expected_qv_rate(f, kernel, n)
