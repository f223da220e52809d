import itertools
import math

import numpy as np
import pytest
from scipy.linalg import expm

from lrexclusion.dynamics import (EmptyLattice, SimParams, check_volume, replica_rng, reverse_time_law_check,
                                  run_kmc, simulate, step)
from lrexclusion.fields import gaussian
from lrexclusion.kernel import build_pn, power_law
from lrexclusion.lattice import Configuration, sample_bernoulli


def test_params_validation():
    with pytest.raises(ValueError):
        SimParams(1)
    with pytest.raises(ValueError):
        SimParams(8, checkpoint_times=(0.5, 0.2))
    with pytest.raises(ValueError):
        SimParams(8, t_max=1.0, checkpoint_times=(2.0,))
    assert SimParams(8, L=4).N == 32


def test_empty_lattice(nn):
    c = Configuration(np.zeros(8, dtype=np.uint8))
    with pytest.raises(EmptyLattice):
        run_kmc(c, build_pn(nn, 2, 1.0), 2, 1.0, replica_rng(0))
    with pytest.raises(EmptyLattice):
        step(c, build_pn(nn, 2, 1.0), 2, replica_rng(0))


def test_volume_guard(pl):
    with pytest.raises(ValueError):
        check_volume(pl, 16)
    check_volume(pl, 32)


def test_run_is_deterministic_and_conserves(pl):
    p = build_pn(pl, 16, 1.0)
    a = run_kmc(sample_bernoulli(64, 0.5, replica_rng(3)), p, 16, 0.2, replica_rng(3, 1))
    b = run_kmc(sample_bernoulli(64, 0.5, replica_rng(3)), p, 16, 0.2, replica_rng(3, 1))
    assert np.array_equal(a.times, b.times) and np.array_equal(a.targets, b.targets)
    assert np.all(np.diff(a.times) >= 0)
    fin = a.final_state()
    assert fin.count == a.initial.count and fin.is_consistent()
    # every accepted move goes from an occupied site to an empty one
    c = a.initial.copy()
    for x, y in zip(a.origins, a.targets):
        assert c.occ[x] == 1 and c.occ[y] == 0
        c.swap(int(x), int(y))


def _transition_matrix(kernel, n, b, N, K):
    states = [s for s in itertools.product((0, 1), repeat=N) if sum(s) == K]
    index = {s: i for i, s in enumerate(states)}
    pn = build_pn(kernel, n, b)
    Q = np.zeros((len(states), len(states)))
    for s in states:
        i = index[s]
        for x in range(N):
            if not s[x]:
                continue
            for d, p in pn.p_values.items():
                y = (x + d) % N
                if s[y]:
                    continue
                t = list(s)
                t[x], t[y] = 0, 1
                Q[i, index[tuple(t)]] += n * n * p
        Q[i, i] = -Q[i].sum()
    return states, index, Q


def test_law_at_time_t_matches_matrix_exponential():
    # N = 8 sites, 3 particles: 56 states; exact P_t from the generator
    k = power_law(3, 2)
    n, N, t = 2, 8, 0.05
    states, index, Q = _transition_matrix(k, n, 1.0, N, 3)
    start = (1, 1, 0, 1, 0, 0, 0, 0)
    prob = expm(Q * t)[index[start]]
    reps = 6000
    counts = np.zeros(len(states))
    pn = build_pn(k, n, 1.0)
    for r in range(reps):
        tr = run_kmc(Configuration(start), pn, n, t, replica_rng(11, r))
        counts[index[tuple(int(v) for v in tr.final_state().occ)]] += 1
    # chi-square over states with expected count >= 5, lumping the rest
    e = prob * reps
    big = e >= 5
    obs = np.append(counts[big], counts[~big].sum())
    exp = np.append(e[big], e[~big].sum())
    chi2 = float(np.sum((obs - exp) ** 2 / exp))
    dof = len(obs) - 1
    assert chi2 < dof + 5 * math.sqrt(2 * dof)


def test_single_step_rates(pl):
    # next accepted displacement from one particle on an empty ring follows p_n
    n = 16
    pn = build_pn(pl, n, 1.0)
    rng = replica_rng(5)
    disp = []
    for _ in range(20000):
        c = Configuration(np.eye(1, 64, 0, dtype=np.uint8)[0])
        dt, mv = step(c, pn, n, rng)
        x, y = mv
        d = (y - x) % 64
        disp.append(d if d <= 32 else d - 64)
    disp = np.array(disp)
    for z, p in pn.p_values.items():
        freq = np.mean(disp == z)
        expect = p / pn.total
        assert abs(freq - expect) <= 5 * math.sqrt(expect * (1 - expect) / len(disp)) + 1e-12


def test_observers_see_checkpoints(pl):
    params = SimParams(16, 4, 1.0, 0.1, 0, (0.0, 0.05, 0.1))
    init = sample_bernoulli(params.N, 0.5, replica_rng(0))
    seen = []
    tr = simulate(init, params, pl, observers=[lambda t, c: (t, c.count)], rng=replica_rng(0, 1))
    for t, (obs,) in tr.observations:
        seen.append(obs)
    assert [t for t, _ in seen] == [0.0, 0.05, 0.1]
    assert all(cnt == init.count for _, cnt in seen)
    assert tr.state_at(0.1) == tr.final_state()


@pytest.mark.slow
def test_reverse_time_law(pl):
    f = gaussian(1.6, 0.4, 4)
    g = gaussian(2.4, 0.4, 4)
    params = SimParams(16, 4, 1.0, 0.2, 0, (0.1, 0.2))
    out = reverse_time_law_check(params, pl, f, g, replicas=300, master_seed=2)
    assert all(abs(z) < 4 for z in out["z"])
    assert abs(out["equal_time_variance"]["z"]) < 4
