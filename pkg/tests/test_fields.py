import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrexclusion.dynamics import SimParams, replica_rng, run_kmc
from lrexclusion.fields import (DegenerateBlock, EmptyTrajectory, decompose, discrete_generator,
                                dynkin_martingale, expected_qv_rate, fluctuation_field, functional_weights,
                                gaussian, grad, hermite, integrands, jump_bound, jump_size, lattice_values,
                                psi, psi_tilde, replay_functionals, tilted_grad)
from lrexclusion.fields import test_function_from_config as function_from_config
from lrexclusion.kernel import build_pn, moments
from lrexclusion.lattice import Configuration, sample_bernoulli


def test_psi_squared_identity():
    for a, b in itertools.product((0, 1), repeat=2):
        c = Configuration([a, b, 1, 0, 0, 1])
        p, pt = psi(c, 0, 2)
        assert p == (a - 0.5) * (b - 0.5)
        assert pt == psi_tilde(c, 0, 2)
    assert psi(Configuration([1, 0, 1, 1]), 0, 2)[0] == -0.25
    assert psi(Configuration([1, 1, 0, 1]), 0, 2)[0] == 0.25


@pytest.mark.parametrize("ell", range(2, 7))
def test_psi_centred_under_bernoulli(ell):
    total = 0.0
    for bits in itertools.product((0, 1), repeat=ell):
        total += psi(Configuration(list(bits)), 0, ell)[0]
    assert abs(total / 2 ** ell) < 1e-15


def test_psi_degenerate():
    with pytest.raises(DegenerateBlock):
        psi(Configuration([1, 0, 1]), 0, 1)


def test_norms_against_closed_form():
    # narrow functions: the torus integrals equal the full-line Gamma-moment formulas
    for f in (gaussian(2.0, 0.4, 4), hermite(2, 0.3, 4), gaussian(1.0, 0.3, 4, amplitude=2.0)):
        exact = f.full_line_norms()
        assert f.norms["l2_sq"] == pytest.approx(exact["l2_sq"], rel=1e-9)
        assert f.norms["d1_l2_sq"] == pytest.approx(exact["d1_l2_sq"], rel=1e-8)
        assert f.norms["d1_l2_sq"] == pytest.approx(f.quadrature_d1_l2_sq(), rel=1e-8)


def test_norms_follow_the_torus():
    # a wide function overlaps its images; norms must be those of the wrapped function
    f = hermite(2, 0.5, 4)
    from scipy.integrate import quad
    val, _ = quad(lambda u: float(f(np.array([u]))[0] ** 2), 0, 4, limit=200, epsabs=1e-13)
    assert f.norms["l2_sq"] == pytest.approx(val, rel=1e-10)
    assert abs(f.norms["l2_sq"] - f.full_line_norms()["l2_sq"]) > 1e-5


def test_derivatives_against_finite_differences():
    f = hermite(3, 0.5, 4)
    u = np.linspace(0.3, 3.7, 50)
    h = 1e-5
    for d in range(3):
        fd = (f(u + h, d) - f(u - h, d)) / (2 * h)
        np.testing.assert_allclose(f(u, d + 1), fd, rtol=1e-6, atol=1e-6)


def test_config_builder():
    f = function_from_config({"family": "gaussian", "width": 0.4, "name": "g"}, 4)
    assert f.name == "g" and f.center == 2.0
    with pytest.raises(ValueError):
        function_from_config({"family": "sine"}, 4)


def test_generator_and_gradients_against_loops(pl, bump):
    n, N = 16, 64
    fv = lattice_values(bump, n)
    S = discrete_generator(bump, pl, n)
    tg = tilted_grad(bump, pl, n)
    for x in (0, 5, 31, 63):
        s_loop = n * n * sum(pl.s(z) * (fv[(x + z) % N] - fv[x]) for z in range(-8, 9) if z)
        assert S[x] == pytest.approx(s_loop, abs=1e-10)
        t_loop = 2 * sum(pl.a(z) * n * (fv[(x + z) % N] - fv[x]) for z in range(1, 9))
        assert tg[x] == pytest.approx(t_loop, abs=1e-12)
    assert grad(bump, n, 3, 2) == pytest.approx(n * (fv[5] - fv[3]))


def test_generator_limits(pl, bump):
    mom = moments(pl)
    n = 256
    u = np.arange(4 * n) / n
    assert np.max(np.abs(discrete_generator(bump, pl, n) - 0.5 * mom.sigma2 * bump(u, 2))) < 1e-2
    assert np.max(np.abs(tilted_grad(bump, pl, n) - mom.m * bump(u, 1))) < 5e-2


def test_generator_symmetric_about_centre(nn):
    f = gaussian(2.0, 0.4, 4)
    # odd part of f about the centre yields an odd S_n f
    S = discrete_generator(f, nn, 32)
    x = np.arange(1, 60)
    np.testing.assert_allclose(S[64 - x], S[64 + x], atol=1e-9)


def _brute_integrands(occ, f, kernel, n, b, ells):
    N = len(occ)
    e = occ - 0.5
    fv = lattice_values(f, n)
    pn = build_pn(kernel, n, b)
    S = discrete_generator(f, kernel, n)
    tg = tilted_grad(f, kernel, n)
    Y = e @ fv / math.sqrt(n)
    YS = e @ S / math.sqrt(n)
    U = sum(e[x] * e[(x + z) % N] * kernel.a(z) * n * (fv[(x + z) % N] - fv[x])
            for x in range(N) for z in range(1, kernel.support_radius + 1))
    J = sum(e[x] * e[(x + 1) % N] * tg[x] for x in range(N))
    QV = sum(occ[x] * (1 - occ[(x + d) % N]) * n * p * (fv[(x + d) % N] - fv[x]) ** 2
             for x in range(N) for d, p in pn.p_values.items())
    c = Configuration(occ.astype(np.uint8))
    P = [sum(psi_tilde(c, x, ell) * tg[x] for x in range(N)) for ell in ells]
    return np.array([Y, YS, U, J, QV] + P)


def test_integrands_against_brute_force(pl, bump):
    n = 16
    occ = sample_bernoulli(64, 0.5, replica_rng(1)).occ.astype(float)
    w = functional_weights(bump, pl, n, 1.0, (3, 5))
    np.testing.assert_allclose(integrands(occ, w), _brute_integrands(occ, bump, pl, n, 1.0, (3, 5)),
                               rtol=1e-12, atol=1e-12)


def test_replay_matches_piecewise_recomputation(pl, bump):
    n = 16
    params = SimParams(n, 4, 1.0, 0.02)
    rng = replica_rng(4)
    init = sample_bernoulli(params.N, 0.5, rng)
    tr = run_kmc(init, build_pn(pl, n, 1.0), n, params.t_max, rng)
    w = functional_weights(bump, pl, n, 1.0, (4,))
    cps = [0.007, 0.02]
    snap, ints, _ = replay_functionals(tr, w, cps)
    # oracle: recompute every integrand from scratch on each holding interval
    c = init.copy()
    acc = np.zeros_like(ints)
    t, k = 0.0, 0
    for ci, tc in enumerate(cps):
        while k < tr.n_events and tr.times[k] <= tc:
            acc[ci:] += integrands(c.occ, w) * (tr.times[k] - t)
            t = tr.times[k]
            c.swap(int(tr.origins[k]), int(tr.targets[k]))
            k += 1
        acc[ci:] += integrands(c.occ, w) * (tc - t)
        t = tc
        np.testing.assert_allclose(snap[ci], integrands(c.occ, w), atol=1e-9)
    np.testing.assert_allclose(ints, acc, rtol=1e-9, atol=1e-9)


def test_decomposition_equals_dynkin(pl, bump):
    params = SimParams(16, 4, 1.0, 0.05, checkpoint_times=(0.01, 0.05))
    for r in range(3):
        rng = replica_rng(9, r)
        init = sample_bernoulli(params.N, 0.5, rng)
        tr = run_kmc(init, build_pn(pl, 16, 1.0), 16, params.t_max, rng)
        recs = decompose(tr, bump, params, pl, eps_list=(0.25,), ell_list=(2, 4))
        brute = dynkin_martingale(tr, bump, pl, params, params.checkpoint_times)
        for rec, m in zip(recs, brute):
            assert abs(rec.M - m) <= 1e-10
            assert rec.R == pytest.approx(rec.A - rec.A_hat)
            # the psi^2 replacement is exact: int sum psi^2 tg = J
            assert rec.psi_int[2] == pytest.approx(rec.J, abs=1e-10)
        assert recs[-1].Y == pytest.approx(fluctuation_field(tr.final_state(), bump, 16))
    with pytest.raises(EmptyTrajectory):
        decompose(None, bump, params, pl)
    with pytest.raises(DegenerateBlock):
        decompose(tr, bump, params, pl, ell_list=(1,))


def test_qv_stationary_mean(pl, bump):
    n = 16
    w = functional_weights(bump, pl, n, 1.0)
    # E[eta(x)(1 - eta(y))] = 1/4 under Bernoulli(1/2); the a-part cancels
    assert 0.25 * w.KQ.sum() == pytest.approx(expected_qv_rate(bump, pl, n), rel=1e-12)


@given(st.integers(0, 50))
@settings(max_examples=10, deadline=None)
def test_jump_size_within_bound(seed):
    from lrexclusion.kernel import power_law

    k = power_law(3, 4)
    f = gaussian(2.0, 0.3, 4)
    rng = replica_rng(seed)
    tr = run_kmc(sample_bernoulli(64, 0.5, rng), build_pn(k, 16, 1.0), 16, 0.01, rng)
    assert jump_size(tr, f, 16) <= jump_bound(f, 16)
