"""Reference solver for the stochastic Burgers equation on the torus.

    dY = (1/2) sigma2 Y'' dt + b m (Y^2)' dt + (1/2) sigma d(xi')

with stationary white-noise data (cell variance ``1/(4 dx)``).  The linear
part is integrated exactly in law, mode by mode (each Fourier mode is an
Ornstein-Uhlenbeck process); the nonlinearity is applied by an explicit step
in the skew-symmetric form

    N_j = b m (Y_{j+1}^2 - Y_{j-1}^2 + Y_j (Y_{j+1} - Y_{j-1})) / (3 dx),

which conserves both ``sum_j Y_j`` and ``sum_j Y_j^2`` and has zero
divergence, so the discrete Gaussian measure is invariant under the exact
nonlinear flow.  With dealiasing on, the field entering the nonlinearity and
the resulting tendency are both projected onto the lower two thirds of the
spectrum (a Galerkin truncation, which keeps those properties).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SCHEMES = ("exponential", "explicit")


class Instability(FloatingPointError):
    pass


@dataclass
class GridField:
    """Cell values on ``M`` equispaced points of ``[0, L)``; leading axes are replicas."""

    values: np.ndarray
    L: float = 4.0
    sigma2: float = 1.0
    b: float = 0.0
    m: float = 1.0

    @property
    def M(self) -> int:
        return self.values.shape[-1]

    @property
    def dx(self) -> float:
        return self.L / self.M

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.M) * self.dx

    def pair(self, f, deriv: int = 0) -> np.ndarray:
        """``Y(f) = sum_j Y_j f(x_j) dx``."""
        return self.values @ f(self.x, deriv) * self.dx

    def total(self) -> np.ndarray:
        return self.values.sum(axis=-1)

    def copy(self) -> "GridField":
        return GridField(self.values.copy(), self.L, self.sigma2, self.b, self.m)


@dataclass
class SolverParams:
    dt: float = 1e-4
    t_max: float = 1.0
    noise_seed: int = 0
    scheme: str = "exponential"
    dealias: bool = True

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.dt <= 0 or self.t_max < 0:
            raise ValueError("dt must be positive and t_max nonnegative")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    def check(self, grid: GridField) -> None:
        if self.scheme == "explicit" and self.dt > grid.dx ** 2 / (2 * grid.sigma2):
            raise Instability(
                f"explicit scheme needs dt <= dx^2/(2 sigma2) = {grid.dx ** 2 / (2 * grid.sigma2):.3g}")


def sample_stationary(M: int, dx: float, rng: np.random.Generator, batch: int | None = None,
                      sigma2: float = 1.0, b: float = 0.0, m: float = 1.0) -> GridField:
    """White noise of variance 1/4: i.i.d. centred Gaussian cells of variance ``1/(4 dx)``."""
    if M < 8:
        raise ValueError(f"need M >= 8, got {M}")
    shape = (M,) if batch is None else (batch, M)
    vals = rng.standard_normal(shape) * (0.5 / math.sqrt(dx))
    return GridField(vals, M * dx, sigma2, b, m)


def nonlinearity(Y: np.ndarray, b: float, m: float, dx: float) -> np.ndarray:
    up = np.roll(Y, -1, axis=-1)
    um = np.roll(Y, 1, axis=-1)
    return (b * m / (3 * dx)) * (up * up - um * um + Y * (up - um))


def dealias_cutoff(M: int) -> int:
    """Largest retained wavenumber index under the two-thirds rule."""
    return M // 3


def wavenumbers(M: int, L: float) -> np.ndarray:
    return 2 * math.pi * np.arange(M // 2 + 1) / L


class Stepper:
    """Precomputed per-mode coefficients for one grid and time step."""

    def __init__(self, grid: GridField, params: SolverParams):
        params.check(grid)
        M, dx, dt = grid.M, grid.dx, params.dt
        self.M, self.dx, self.dt = M, dx, dt
        self.b, self.m = grid.b, grid.m
        k = np.arange(M // 2 + 1)
        if params.scheme == "exponential":
            lam = 0.5 * grid.sigma2 * wavenumbers(M, grid.L) ** 2
            self.decay = np.exp(-lam * dt)
            var_gain = -np.expm1(-2 * lam * dt)
        else:
            lam = 2 * grid.sigma2 * np.sin(math.pi * k / M) ** 2 / dx ** 2
            self.decay = 1 - lam * dt
            var_gain = 2 * lam * dt
        # stationary rfft variance per real component: M v / 2, v = 1/(4 dx); Nyquist is real
        comp_var = np.full(len(k), M / (8 * dx))
        if M % 2 == 0:
            comp_var[-1] = M / (4 * dx)
        self.noise_sd = np.sqrt(var_gain * comp_var)
        self.noise_sd[0] = 0.0
        self.nyquist = M % 2 == 0
        self.mask = np.ones(len(k))
        if params.dealias:
            self.mask[k > dealias_cutoff(M)] = 0.0
        self.nonlinear = grid.b != 0 and grid.m != 0

    def tendency(self, Yhat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Projected nonlinear tendency in real space and Fourier space."""
        u = np.fft.irfft(Yhat * self.mask, n=self.M)
        Nh = np.fft.rfft(nonlinearity(u, self.b, self.m, self.dx)) * self.mask
        return Nh, u

    def advance(self, Y: np.ndarray, rng: np.random.Generator, want_nonlinear: bool = False):
        """One step ``Y -> Y'``.  Optionally returns the projected tendency ``P N(P Y)``."""
        Yhat = np.fft.rfft(Y)
        Nreal = None
        if self.nonlinear:
            Nh, _ = self.tendency(Yhat)
            Yhat = Yhat + self.dt * Nh
            if want_nonlinear:
                Nreal = np.fft.irfft(Nh, n=self.M)
        shape = Yhat.shape
        noise = rng.standard_normal(shape + (2,))
        kick = self.noise_sd * (noise[..., 0] + 1j * noise[..., 1])
        if self.nyquist:
            kick[..., -1] = self.noise_sd[-1] * noise[..., -1, 0]
        Yhat = self.decay * Yhat + kick
        out = np.fft.irfft(Yhat, n=self.M)
        if not np.all(np.isfinite(out)):
            raise Instability("non-finite field value")
        if want_nonlinear:
            if Nreal is None:
                Nreal = np.zeros_like(out)
            return out, Nreal
        return out


def step(grid: GridField, params: SolverParams, rng: np.random.Generator) -> GridField:
    """Advance ``grid`` by one time step (convenience wrapper; loops should reuse a ``Stepper``)."""
    out = Stepper(grid, params).advance(grid.values, rng)
    return GridField(out, grid.L, grid.sigma2, grid.b, grid.m)


def _fourier_coeffs(f, L: float, M: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    u = np.arange(M) * L / M
    fh = np.fft.fft(f(u)) * (L / M)
    k = 2 * math.pi * np.fft.fftfreq(M, d=L / M)
    return fh, k


def ou_covariance(f, g, t: float, sigma2: float, L: float = 4.0, M: int = 4096) -> float:
    """``(1/4) <f, P_t g>`` for the heat semigroup with generator ``(1/2) sigma2 d^2``.

    Computed mode by mode, ``(1/4L) sum_k exp(-sigma2 k^2 t / 2) f^_k conj(g^_k)``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    fh, k = _fourier_coeffs(f, L, M)
    gh, _ = _fourier_coeffs(g, L, M)
    return float(0.25 * np.real(np.sum(np.exp(-0.5 * sigma2 * k * k * t) * fh * np.conj(gh))) / L)


def block_mean(Y: np.ndarray, k: int) -> np.ndarray:
    """Forward average of ``k`` consecutive cells with wrap-around (the grid ``Y * iota_eps``)."""
    if k == 1:
        return Y
    ext = np.concatenate([Y, Y[..., : k - 1]], axis=-1)
    cs = np.cumsum(ext, axis=-1)
    cs = np.concatenate([np.zeros(cs.shape[:-1] + (1,)), cs], axis=-1)
    M = Y.shape[-1]
    return (cs[..., k: k + M] - cs[..., :M]) / k


def eps_cells(eps: float, dx: float) -> int:
    return max(1, int(round(eps / dx)))


def mollified_square(Y: np.ndarray, fprime: np.ndarray, eps_list, dx: float) -> dict:
    """``int (Y * iota_eps)^2 f' dx`` for each ``eps``."""
    return {e: (block_mean(Y, eps_cells(e, dx)) ** 2) @ fprime * dx for e in eps_list}


def burgers_functional(history: np.ndarray, f, eps_list, dx: float, dt: float, L: float | None = None) -> dict:
    """Left-point time quadrature of ``int int (Y_s * iota_eps)^2 f' dx ds`` from a stored history.

    ``history`` has shape ``(..., steps + 1, M)``.  Returns the per-eps values
    and the Cauchy differences ``B_eps - B_{eps'}`` between consecutive ``eps``.
    """
    history = np.asarray(history, dtype=float)
    M = history.shape[-1]
    x = np.arange(M) * dx
    fp = f(x, 1)
    vals = {}
    for e in eps_list:
        sq = block_mean(history[..., :-1, :], eps_cells(e, dx)) ** 2
        vals[e] = (sq @ fp).sum(axis=-1) * dx * dt
    es = sorted(eps_list, reverse=True)
    cauchy = {(a, c): vals[a] - vals[c] for a, c in zip(es, es[1:])}
    return {"B": vals, "cauchy": cauchy}


@dataclass
class SolveResult:
    grid_M: int
    L: float
    sigma2: float
    b: float
    m: float
    dt: float
    times: np.ndarray                       # recording times, starting at 0
    Y: np.ndarray                           # (replica, function, record)
    linear_int: np.ndarray                  # int Y_s((1/2) sigma2 f'') ds
    nonlinear_int: np.ndarray               # int <P N(P Y_s), f> ds, the solver's own drift
    B: dict                                 # eps -> (replica, function, record)
    mode_power: np.ndarray                  # mean |Y^_k|^2 over snapshots and replicas
    mode_power_se: np.ndarray               # across replicas of per-replica time averages
    snapshots: int                          # per replica
    max_mass_drift: float                   # max over steps of |sum Y' - sum Y|
    history: np.ndarray | None = None
    functions: list = field(default_factory=list)

    def martingale(self) -> np.ndarray:
        """``Y_t - Y_0 - int Y((1/2) sigma2 f'') - int <N, f>``."""
        return self.Y - self.Y[..., :1] - self.linear_int - self.nonlinear_int

    def mode_ratio(self) -> np.ndarray:
        """Pooled mode power over its stationary value ``M/(4 dx)``, for ``k = 1..M/2``."""
        target = self.grid_M * self.grid_M / (4 * self.L)
        return self.mode_power[1:] / target

    def mode_ratio_se(self) -> np.ndarray:
        target = self.grid_M * self.grid_M / (4 * self.L)
        return self.mode_power_se[1:] / target


def batch_rng(seed: int, batch: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 1 << 20, int(batch)])))


def solve(M: int, params: SolverParams, functions=(), L: float = 4.0, sigma2: float = 1.0,
          b: float = 0.0, m: float = 1.0, replicas: int = 1, eps_list=(), record_every: float = 1 / 64,
          snapshot_every: float = 1 / 64, batch_size: int = 50, keep_history: bool = False) -> SolveResult:
    """Run ``replicas`` independent stationary solutions and accumulate the test statistics.

    Replicas are processed in batches of ``batch_size`` whose random streams
    are keyed by ``(noise_seed, batch index)``, so results do not depend on how
    batches are scheduled.  ``record_every``/``snapshot_every`` are rounded to
    whole steps.
    """
    dt = params.dt
    n_steps = params.n_steps
    rec_stride = max(1, int(round(record_every / dt)))
    snap_stride = max(1, int(round(snapshot_every / dt)))
    n_rec = n_steps // rec_stride + 1
    dx = L / M
    x = np.arange(M) * dx
    F = np.array([f(x) for f in functions]).reshape(len(functions), M)
    F2 = np.array([0.5 * sigma2 * f(x, 2) for f in functions]).reshape(len(functions), M)
    F1 = np.array([f(x, 1) for f in functions]).reshape(len(functions), M)
    nf = len(functions)
    eps_list = list(eps_list)

    Y_rec = np.zeros((replicas, nf, n_rec))
    lin_rec = np.zeros_like(Y_rec)
    nl_rec = np.zeros_like(Y_rec)
    B_rec = {e: np.zeros_like(Y_rec) for e in eps_list}
    power = np.zeros((replicas, M // 2 + 1))
    snaps = 0
    drift = 0.0
    hist = np.zeros((replicas, n_rec, M)) if keep_history else None

    for bi, start in enumerate(range(0, replicas, batch_size)):
        stop = min(replicas, start + batch_size)
        rng = batch_rng(params.noise_seed, bi)
        grid = sample_stationary(M, dx, rng, batch=stop - start, sigma2=sigma2, b=b, m=m)
        stepper = Stepper(grid, params)
        Y = grid.values
        lin = np.zeros((stop - start, nf))
        nl = np.zeros_like(lin)
        Bacc = {e: np.zeros_like(lin) for e in eps_list}
        lin_prev = Y @ F2.T * dx

        def record(r, Y):
            Y_rec[start:stop, :, r] = Y @ F.T * dx
            lin_rec[start:stop, :, r] = lin
            nl_rec[start:stop, :, r] = nl
            for e in eps_list:
                B_rec[e][start:stop, :, r] = Bacc[e]
            if hist is not None:
                hist[start:stop, r] = Y

        def snapshot(Y):
            power[start:stop] += np.abs(np.fft.rfft(Y)) ** 2

        record(0, Y)
        snapshot(Y)
        for i in range(1, n_steps + 1):
            for e in eps_list:
                Bacc[e] += dt * (block_mean(Y, eps_cells(e, dx)) ** 2) @ F1.T * dx
            mass = Y.sum(axis=-1)
            Ynew, Nreal = stepper.advance(Y, rng, want_nonlinear=True)
            drift = max(drift, float(np.max(np.abs(Ynew.sum(axis=-1) - mass))))
            nl += dt * (Nreal @ F.T) * dx
            lin_new = Ynew @ F2.T * dx
            lin += 0.5 * dt * (lin_prev + lin_new)
            lin_prev = lin_new
            Y = Ynew
            if i % rec_stride == 0:
                record(i // rec_stride, Y)
            if i % snap_stride == 0:
                snapshot(Y)

    snaps = n_steps // snap_stride + 1
    per_rep = power / snaps
    mean = per_rep.mean(axis=0)
    se = per_rep.std(axis=0, ddof=1) / math.sqrt(replicas) if replicas > 1 else np.full_like(mean, np.nan)
    times = np.arange(n_rec) * rec_stride * dt
    return SolveResult(M, L, sigma2, b, m, dt, times, Y_rec, lin_rec, nl_rec, B_rec, mean, se,
                       snaps, drift, hist, list(functions))
