"""Acceptance suite: seven criteria, one PASS/FAIL line each.

Run alone with ``pytest -s tests/test_acceptance.py``; the lines are also
printed when output is captured.  Criteria 4-7 are Monte-Carlo runs and take
minutes on one core.
"""

import os
import time

import pytest

from lrexclusion import suites
from lrexclusion.fields import gaussian
from lrexclusion.kernel import nearest_neighbor, power_law

THREADS = os.cpu_count() or 1
SEED = 2024


@pytest.fixture(scope="module")
def kernel():
    return power_law(3, 8)


@pytest.fixture(scope="module")
def f():
    return gaussian(2.0, 0.4, 4)


def _report(capsys, number, title, criteria, elapsed):
    ok = all(c.passed for c in criteria)
    with capsys.disabled():
        print()
        for c in criteria:
            print("    " + c.line())
        print(f"criterion {number} ({title}): {'PASS' if ok else 'FAIL'} [{elapsed:.1f} s]")
    failed = [c.line() for c in criteria if not c.passed]
    assert not failed, "\n".join(failed)


def test_1_exact_identities(kernel, capsys):
    kernels = [kernel, nearest_neighbor(), power_law(2.5, 20)]
    suites.exact_identities(kernels, seed=SEED + 1)  # compiles the jitted kernels
    t0 = time.time()
    crit = suites.exact_identities(kernels, seed=SEED)
    elapsed = time.time() - t0
    crit.append(suites.Criterion("wall_time_s", elapsed, 1.0, None, elapsed < 1.0))
    _report(capsys, 1, "exact identities", crit, elapsed)


def test_2_enumeration(capsys):
    t0 = time.time()
    nn = nearest_neighbor()
    crit, _ = suites.enumeration([power_law(3, 3), power_law(3, 5), nn], nn, N=12, trials=1000, z_max=5,
                                 seed=SEED)
    _report(capsys, 2, "enumeration", crit, time.time() - t0)


def test_3_appendix(kernel, f, capsys):
    t0 = time.time()
    crit, _ = suites.appendix(f, [nearest_neighbor(), kernel], (32, 64, 128, 256), rel_tol=0.02)
    _report(capsys, 3, "appendix determinism", crit, time.time() - t0)


def test_4_stationary(kernel, f, capsys):
    t0 = time.time()
    crit, _ = suites.stationary(kernel, f, n=64, L=4, b=1.0, t=1.0, replicas=200, master_seed=SEED,
                                threads=THREADS)
    _report(capsys, 4, "stationary statistics", crit, time.time() - t0)


def test_5_scalings(kernel, f, capsys):
    t0 = time.time()
    crit, _ = suites.scalings(kernel, f, n_list=(16, 32, 64), bg_n=64, ell_list=(4, 8, 16, 32),
                              replicas=400, t=0.25, master_seed=SEED, threads=THREADS,
                              bg_f=gaussian(2.0, 1.0, 4))
    _report(capsys, 5, "replacement scalings", crit, time.time() - t0)


def test_6_spde(f, capsys):
    t0 = time.time()
    crit, _ = suites.spde(f, M=256, t=1.0, replicas=400, b_list=(0.0, 1.0), seed=SEED)
    _report(capsys, 6, "SPDE solver", crit, time.time() - t0)


def test_7_cross_validation(kernel, f, capsys):
    t0 = time.time()
    crit, _ = suites.cross_validation(kernel, f, n=64, times=(0.1, 0.5, 1.0), replicas=400,
                                      master_seed=SEED, threads=THREADS)
    _report(capsys, 7, "cross-validation at b=0", crit, time.time() - t0)
