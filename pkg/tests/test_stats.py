import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrexclusion.stats import RunningStats, fit_exponent, mean_se, variance_se


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=60), st.integers(0, 60))
@settings(max_examples=80, deadline=None)
def test_merge_equals_single_pass(xs, cut):
    cut = min(cut, len(xs))
    a = RunningStats().extend(xs[:cut])
    b = RunningStats().extend(xs[cut:])
    m = a.merge(b)
    ref = np.asarray(xs)
    assert m.count == len(xs)
    assert m.mean == pytest.approx(ref.mean(), abs=1e-9)
    assert m.variance == pytest.approx(ref.var(ddof=1), rel=1e-9, abs=1e-9)


def test_fit_exponent_exact_power():
    x = np.array([16, 32, 64, 128])
    s, se = fit_exponent(x, 3.0 * x ** -1.5)
    assert s == pytest.approx(-1.5)
    assert se == pytest.approx(0, abs=1e-12)


def test_estimators(rng):
    x = rng.normal(0, 2, 40_000)
    m, s = mean_se(x)
    assert abs(m) < 4 * s
    v, sv = variance_se(x, mean=0.0)
    assert abs(v - 4) < 4 * sv
