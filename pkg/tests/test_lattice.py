import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lrexclusion.lattice import Configuration, block_sums, sample_bernoulli


def occupancies(max_n=40):
    return st.lists(st.integers(0, 1), min_size=2, max_size=max_n).map(lambda v: np.array(v, dtype=np.uint8))


@given(occupancies(), st.data())
@settings(max_examples=80, deadline=None)
def test_swap_is_involution(occ, data):
    c = Configuration(occ)
    x = data.draw(st.integers(0, c.N - 1))
    y = data.draw(st.integers(0, c.N - 1).filter(lambda v: v != x))
    before = c.copy()
    c.swap(x, y)
    assert c.is_consistent()
    assert c.count == before.count
    c.swap(x, y)
    assert c == before and c.is_consistent()


def test_swap_moves_particle():
    c = Configuration([1, 0, 0, 0])
    c.swap(0, 2)
    assert list(c.occ) == [0, 0, 1, 0]
    assert list(c.particles) == [2]
    with pytest.raises(ValueError):
        c.swap(1, 5)  # 5 == 1 mod 4


@given(occupancies(), st.data())
@settings(max_examples=60, deadline=None)
def test_block_average_matches_loop(occ, data):
    c = Configuration(occ)
    ell = data.draw(st.integers(1, c.N))
    x = data.draw(st.integers(-c.N, 2 * c.N))
    expect = sum(int(occ[(x + i) % c.N]) for i in range(ell)) / ell
    assert c.block_average(x, ell) == pytest.approx(expect, abs=1e-15)
    assert block_sums(occ, ell)[x % c.N] == round(expect * ell)


def test_block_average_trivial_cases():
    c = Configuration([1, 0, 1, 1])
    assert c.block_average(1, 1) == 0.0
    assert c.block_average(0, 4) == 0.75
    with pytest.raises(ValueError):
        c.block_average(0, 5)


@given(occupancies(70))
@settings(max_examples=40, deadline=None)
def test_hex_roundtrip(occ):
    c = Configuration(occ)
    assert Configuration.from_hex(c.to_hex(), c.N) == c


def test_bernoulli_density(rng):
    c = sample_bernoulli(100_000, 0.5, rng)
    assert abs(c.count / c.N - 0.5) < 4 * 0.5 / np.sqrt(c.N)
    with pytest.raises(ValueError):
        sample_bernoulli(10, 1.0, rng)
