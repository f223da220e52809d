"""Occupancy configurations on the periodic lattice ``Z/NZ``."""

from __future__ import annotations

import numpy as np


class Configuration:
    """Exclusion configuration with a dense particle list for O(1) sampling.

    ``occ[x]`` is the occupancy, ``particles[:count]`` the occupied sites and
    ``slot[x]`` the index of ``x`` in ``particles`` (or -1).  Site arithmetic
    is always modulo ``N``.
    """

    def __init__(self, occupancy):
        occ = np.asarray(occupancy, dtype=np.uint8).copy()
        if occ.ndim != 1 or not np.all(occ <= 1):
            raise ValueError("occupancy must be a 1-d array of bits")
        self.N = len(occ)
        self.occ = occ
        self.particles = np.flatnonzero(occ).astype(np.int64)
        self.slot = np.full(self.N, -1, dtype=np.int64)
        self.slot[self.particles] = np.arange(len(self.particles))

    @property
    def count(self) -> int:
        return len(self.particles)

    def copy(self) -> "Configuration":
        c = Configuration.__new__(Configuration)
        c.N = self.N
        c.occ = self.occ.copy()
        c.particles = self.particles.copy()
        c.slot = self.slot.copy()
        return c

    def swap(self, x: int, y: int) -> None:
        """Exchange occupancies at ``x`` and ``y`` (the map ``eta -> eta^{x,y}``)."""
        x %= self.N
        y %= self.N
        if x == y:
            raise ValueError("swap needs two distinct sites")
        ox, oy = self.occ[x], self.occ[y]
        if ox == oy:
            return
        src, dst = (x, y) if ox else (y, x)
        i = self.slot[src]
        self.particles[i] = dst
        self.slot[dst] = i
        self.slot[src] = -1
        self.occ[x], self.occ[y] = oy, ox

    def block_average(self, x: int, ell: int) -> float:
        """Mean occupancy of ``x, x+1, ..., x+ell-1`` (wrapping)."""
        if not 1 <= ell <= self.N:
            raise ValueError(f"block length must lie in [1, N], got {ell}")
        idx = (x + np.arange(ell)) % self.N
        return float(self.occ[idx].mean())

    def is_consistent(self) -> bool:
        if not np.array_equal(np.sort(self.particles), np.flatnonzero(self.occ)):
            return False
        return bool(np.all(self.slot[self.particles] == np.arange(self.count)))

    def to_hex(self) -> str:
        return np.packbits(self.occ).tobytes().hex()

    @classmethod
    def from_hex(cls, text: str, N: int) -> "Configuration":
        bits = np.unpackbits(np.frombuffer(bytes.fromhex(text), dtype=np.uint8))[:N]
        return cls(bits)

    def __eq__(self, other):
        return isinstance(other, Configuration) and np.array_equal(self.occ, other.occ)

    def __repr__(self):
        return f"Configuration(N={self.N}, particles={self.count})"


def sample_bernoulli(N: int, rho: float, rng: np.random.Generator) -> Configuration:
    """I.i.d. Bernoulli(rho) occupancies (the product measure ``mu_rho``)."""
    if not 0.0 < rho < 1.0:
        raise ValueError(f"density must lie in (0, 1), got {rho}")
    return Configuration((rng.random(N) < rho).astype(np.uint8))


def block_sums(occ, ell: int) -> np.ndarray:
    """``sum_{y=x}^{x+ell-1} occ[y]`` for every ``x`` (wrapping)."""
    occ = np.asarray(occ, dtype=np.int64)
    ext = np.concatenate([occ, occ[: ell - 1]]) if ell > 1 else occ
    c = np.concatenate([[0], np.cumsum(ext)])
    return c[ell: ell + len(occ)] - c[: len(occ)]
