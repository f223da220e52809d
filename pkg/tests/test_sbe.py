import math

import numpy as np
import pytest

from lrexclusion import sbe
from lrexclusion.fields import gaussian


def test_stationary_sample_variance(rng):
    M, dx = 64, 4 / 64
    g = sbe.sample_stationary(M, dx, rng, batch=4000)
    assert g.values.var() == pytest.approx(1 / (4 * dx), rel=0.02)
    f = gaussian(1.0, 0.2, 4)
    h = gaussian(3.0, 0.2, 4)
    # disjointly supported test functions are uncorrelated
    c = np.mean(g.pair(f) * g.pair(h))
    assert abs(c) < 4 * math.sqrt(sbe.ou_covariance(f, f, 0, 1) * sbe.ou_covariance(h, h, 0, 1) / 4000)
    assert np.var(g.pair(f)) == pytest.approx(sbe.ou_covariance(f, f, 0, 1), rel=0.1)
    with pytest.raises(ValueError):
        sbe.sample_stationary(4, 1.0, rng)


def test_nonlinearity_conservation(rng):
    Y = rng.standard_normal((10, 96))
    N = sbe.nonlinearity(Y, 1.3, 0.7, 0.05)
    assert np.allclose(N.sum(axis=-1), 0, atol=1e-10)
    assert np.allclose((Y * N).sum(axis=-1), 0, atol=1e-9)
    # divergence of the flow: d N_j / d Y_j = (Y_{j+1} - Y_{j-1}) b m/(3 dx) sums to zero
    J = (np.roll(Y, -1, -1) - np.roll(Y, 1, -1)).sum(axis=-1)
    assert np.allclose(J, 0, atol=1e-10)
    # consistency with b m (Y^2)' for a smooth field
    x = np.arange(512) * 4 / 512
    u = np.sin(2 * math.pi * x / 4)
    exact = 2 * u * np.cos(2 * math.pi * x / 4) * 2 * math.pi / 4
    assert np.max(np.abs(sbe.nonlinearity(u, 1, 1, 4 / 512) - exact)) < 1e-3


def test_constant_field_without_noise_is_fixed():
    grid = sbe.GridField(np.full(32, 2.5), b=1.0)
    st = sbe.Stepper(grid, sbe.SolverParams(dt=1e-3))
    st.noise_sd[:] = 0
    Y = grid.values
    for _ in range(20):
        Y = st.advance(Y, np.random.default_rng(0))
    assert np.allclose(Y, 2.5, atol=1e-12)


def test_mass_conserved_and_deterministic():
    params = sbe.SolverParams(dt=1e-3, t_max=0.05, noise_seed=3)
    f = gaussian(2, 0.4, 4)
    a = sbe.solve(64, params, [f], b=1.0, replicas=6, batch_size=4)
    b = sbe.solve(64, params, [f], b=1.0, replicas=6, batch_size=4)
    assert a.max_mass_drift < 1e-10
    assert np.array_equal(a.Y, b.Y)


def test_linear_modes_are_stationary():
    params = sbe.SolverParams(dt=2e-3, t_max=0.5, noise_seed=1)
    r = sbe.solve(32, params, [], b=0.0, replicas=400, batch_size=200, snapshot_every=0.1)
    ratio = r.mode_ratio()[: sbe.dealias_cutoff(32)]
    se = r.mode_ratio_se()[: sbe.dealias_cutoff(32)]
    assert np.all(np.abs(ratio - 1) < 5 * se + 0.02)


def test_ou_covariance_limits():
    f = gaussian(2, 0.4, 4)
    xs = np.arange(4096) * 4 / 4096
    assert sbe.ou_covariance(f, f, 0, 1) == pytest.approx(0.25 * np.sum(f(xs) ** 2) * 4 / 4096, rel=1e-10)
    mean = np.sum(f(xs)) * 4 / 4096
    assert sbe.ou_covariance(f, f, 1e4, 1) == pytest.approx(0.25 * mean * mean / 4, rel=1e-8)
    with pytest.raises(ValueError):
        sbe.ou_covariance(f, f, -1, 1)


def test_ou_covariance_decay_matches_solver():
    f = gaussian(2, 0.4, 4)
    params = sbe.SolverParams(dt=1e-3, t_max=0.25, noise_seed=5)
    r = sbe.solve(128, params, [f], b=0.0, replicas=600, batch_size=200, record_every=0.25)
    c = np.mean(r.Y[:, 0, 0] * r.Y[:, 0, -1])
    target = sbe.ou_covariance(f, f, 0.25, 1)
    se = np.std(r.Y[:, 0, 0] * r.Y[:, 0, -1]) / math.sqrt(600)
    assert abs(c - target) < 4 * se


def test_block_mean_and_burgers_functional():
    Y = np.arange(8.0)
    assert np.allclose(sbe.block_mean(Y, 2), [0.5, 1.5, 2.5, 3.5, 4.5, 5.5, 6.5, 3.5])
    const = np.full((5, 64), 1.7)
    f = gaussian(2, 0.4, 4)
    out = sbe.burgers_functional(const, f, [0.25, 0.125], 4 / 64, 0.01)
    # the integral of f' over the torus vanishes
    for v in out["B"].values():
        assert abs(v) < 1e-10
    assert set(out["cauchy"]) == {(0.25, 0.125)}


def test_explicit_scheme_stability_check():
    grid = sbe.GridField(np.zeros(64))
    with pytest.raises(sbe.Instability):
        sbe.Stepper(grid, sbe.SolverParams(dt=1e-2, scheme="explicit"))
    sbe.Stepper(grid, sbe.SolverParams(dt=1e-3, scheme="explicit"))
    with pytest.raises(ValueError):
        sbe.SolverParams(scheme="implicit")


def test_martingale_reversal_signature():
    """Stationary solution: forward martingale increments are uncorrelated with the past."""
    f = gaussian(2, 0.4, 4)
    params = sbe.SolverParams(dt=1e-3, t_max=0.2, noise_seed=9)
    r = sbe.solve(64, params, [f], b=1.0, replicas=300, batch_size=150, record_every=0.1)
    Mt = r.martingale()[:, 0]
    inc = Mt[:, 2] - Mt[:, 1]
    past = r.Y[:, 0, 1]
    c = np.mean(inc * past)
    se = np.std(inc * past) / math.sqrt(300)
    assert abs(c) < 4 * se
    target = 0.25 * 0.2 * f.norms["d1_l2_sq"]
    v = np.mean(Mt[:, 2] ** 2)
    assert v == pytest.approx(target, rel=0.25)
