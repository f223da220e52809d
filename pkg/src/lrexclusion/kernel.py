"""Jump-rate kernels ``p_n(z) = s(z) + gamma_n a(z)`` for long-range exclusion.

A kernel is the pair ``(s, a)``: ``s`` a symmetric, irreducible transition
probability with finite variance and ``a`` an antisymmetric perturbation
dominated by ``s``.  Analytic families (power laws) are truncated at a finite
``support_radius`` and the mass beyond it is recorded, never redistributed.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import reduce

import numpy as np
from scipy.special import zeta

NORMALIZATION_TOL = 1e-12


class KernelError(ValueError):
    """Base class for kernel rejections; ``hypothesis`` names the violated rule."""

    hypothesis = "kernel"

    def __init__(self, message, z=None):
        super().__init__(message)
        self.z = z


class SymmetryViolation(KernelError):
    hypothesis = "s(z) = s(-z) >= 0"


class AntisymmetryViolation(KernelError):
    hypothesis = "a(z) = -a(-z)"


class DominationViolation(KernelError):
    hypothesis = "|a(z)| <= C s(z)"


class Reducible(KernelError):
    hypothesis = "gcd of the support of s equals 1"


class NotNormalized(KernelError):
    hypothesis = "sum of s plus tail mass equals 1"


class NegativeRate(KernelError):
    hypothesis = "p_n(z) >= 0"


@dataclass(frozen=True)
class RateKernel:
    """Validated, finitely supported kernel.  Immutable and safe to share."""

    support_radius: int
    s_values: dict
    a_values: dict
    domination_C: float
    tail_mass_s: float = 0.0
    spec: dict = field(default_factory=dict, compare=False)

    @property
    def positive_support(self) -> np.ndarray:
        """Sorted ``z > 0`` with ``s(z) > 0`` or ``a(z) != 0``."""
        zs = {abs(z) for z, v in self.s_values.items() if v > 0}
        zs |= {abs(z) for z, v in self.a_values.items() if v != 0}
        return np.array(sorted(zs), dtype=np.int64)

    def s(self, z: int) -> float:
        return self.s_values.get(int(z), 0.0)

    def a(self, z: int) -> float:
        return self.a_values.get(int(z), 0.0)

    def s_array(self, zs) -> np.ndarray:
        return np.array([self.s(z) for z in zs], dtype=float)

    def a_array(self, zs) -> np.ndarray:
        return np.array([self.a(z) for z in zs], dtype=float)

    def reversed(self) -> "RateKernel":
        """Kernel of the adjoint dynamics, ``p*(z) = p(-z)``, i.e. ``a -> -a``."""
        spec = dict(self.spec)
        spec["reversed"] = not spec.get("reversed", False)
        return RateKernel(
            self.support_radius,
            dict(self.s_values),
            {z: -v for z, v in self.a_values.items()},
            self.domination_C,
            self.tail_mass_s,
            spec,
        )


@dataclass(frozen=True)
class KernelMoments:
    sigma2: float
    m: float
    c1: float
    c2: float
    path_to_one: tuple


@dataclass(frozen=True)
class JumpDistribution:
    """``p_n`` over the signed displacements plus a Vose alias table."""

    n: int
    gamma_n: float
    p_values: dict
    displacements: np.ndarray
    probs: np.ndarray
    alias_prob: np.ndarray
    alias_index: np.ndarray

    @property
    def total(self) -> float:
        return float(self.probs.sum())

    def sample(self, rng, size=None):
        u = rng.random(size)
        return self.displacements[alias_draw(self.alias_prob, self.alias_index, u)]


def _as_int_map(values) -> dict:
    out = {}
    for z, v in dict(values).items():
        z = int(z)
        if z == 0:
            if float(v) != 0.0:
                raise SymmetryViolation("p(0) must vanish", z=0)
            continue
        out[z] = float(v)
    return out


def validate_kernel(s_values, a_values=None, C=1.0, tail_mass_s=0.0, spec=None) -> RateKernel:
    """Check the finite-variance/domination hypotheses and build a ``RateKernel``.

    Raises the ``KernelError`` subclass naming the first violated hypothesis.
    """
    s_map = _as_int_map(s_values)
    a_map = _as_int_map(a_values or {})
    if not s_map:
        raise NotNormalized("empty support for s")
    if C <= 0:
        raise DominationViolation(f"domination constant must be positive, got {C}")

    for z, v in s_map.items():
        if v < 0:
            raise SymmetryViolation(f"s({z}) = {v} < 0", z=z)
        if not math.isclose(v, s_map.get(-z, 0.0), rel_tol=1e-12, abs_tol=1e-15):
            raise SymmetryViolation(f"s({z}) = {v} != s({-z}) = {s_map.get(-z, 0.0)}", z=z)
    for z, v in a_map.items():
        if not math.isclose(v, -a_map.get(-z, 0.0), rel_tol=1e-12, abs_tol=1e-15):
            raise AntisymmetryViolation(f"a({z}) = {v} != -a({-z})", z=z)
    for z, v in a_map.items():
        if abs(v) > C * s_map.get(z, 0.0) * (1 + 1e-12):
            raise DominationViolation(f"|a({z})| = {abs(v)} > C s({z}) = {C * s_map.get(z, 0.0)}", z=z)

    positive = [z for z, v in s_map.items() if z > 0 and v > 0]
    g = reduce(math.gcd, positive, 0)
    if g != 1:
        raise Reducible(f"gcd of support of s is {g}")

    total = sum(s_map.values()) + tail_mass_s
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise NotNormalized(f"sum s + tail = {total!r}")

    radius = max(abs(z) for z in set(s_map) | set(a_map))
    return RateKernel(radius, s_map, a_map, float(C), float(tail_mass_s), dict(spec or {}))


def nearest_neighbor(asymmetry: float = 0.5, C: float = 1.0) -> RateKernel:
    """``s(+-1) = 1/2`` and ``a(+-1) = +-asymmetry``."""
    return validate_kernel(
        {1: 0.5, -1: 0.5},
        {1: asymmetry, -1: -asymmetry},
        C,
        spec={"family": "nearest_neighbor", "asymmetry": asymmetry},
    )


def power_law(beta: float, zmax: int, c: float | None = None, C: float = 1.0) -> RateKernel:
    """``s(z) = c/|z|^(1+beta)``, ``a(z) = sgn(z) s(z)``, truncated at ``zmax``.

    ``c`` defaults to the constant normalizing the untruncated series; the
    mass beyond ``zmax`` becomes ``tail_mass_s``.
    """
    if beta <= 2:
        raise KernelError(f"power law needs beta > 2 for finite variance, got {beta}")
    if c is None:
        c = 1.0 / (2.0 * zeta(1.0 + beta))
    s_map, a_map = {}, {}
    for z in range(1, zmax + 1):
        v = c / z ** (1.0 + beta)
        s_map[z] = s_map[-z] = v
        a_map[z], a_map[-z] = v, -v
    tail = 1.0 - math.fsum(s_map.values())
    return validate_kernel(
        s_map, a_map, C, tail_mass_s=tail,
        spec={"family": "power_law", "beta": beta, "c": c, "zmax": zmax},
    )


def kernel_from_config(block: dict) -> RateKernel:
    """Build a kernel from a config block: a named family or explicit tables."""
    family = block.get("family")
    if family == "nearest_neighbor":
        return nearest_neighbor(block.get("asymmetry", 0.5), block.get("C", 1.0))
    if family == "power_law":
        return power_law(block["beta"], int(block["zmax"]), block.get("c"), block.get("C", 1.0))
    if "s" in block:
        k = validate_kernel(block["s"], block.get("a", {}), block.get("C", 1.0), block.get("tail_mass_s", 0.0))
        return RateKernel(k.support_radius, k.s_values, k.a_values, k.domination_C, k.tail_mass_s, dict(block))
    raise KernelError(f"unrecognized kernel block: {block!r}")


def _path_to_one(kernel: RateKernel) -> tuple:
    steps = [z for z, v in kernel.s_values.items() if v > 0]
    bound = 2 * kernel.support_radius + 1
    # BFS layers from 0, then pick the path maximizing the weakest step among shortest paths
    dist = {0: 0}
    best = {0: math.inf}
    parent = {0: None}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        if u == 1:
            break
        for z in steps:
            v = u + z
            if abs(v) > bound:
                continue
            w = min(best[u], kernel.s(z))
            if v not in dist:
                dist[v] = dist[u] + 1
                best[v] = w
                parent[v] = u
                queue.append(v)
            elif dist[v] == dist[u] + 1 and w > best[v]:
                best[v] = w
                parent[v] = u
    path = [1]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return tuple(reversed(path))


def moments(kernel: RateKernel) -> KernelMoments:
    sigma2 = math.fsum(z * z * v for z, v in kernel.s_values.items())
    m = math.fsum(z * v for z, v in kernel.a_values.items())
    path = _path_to_one(kernel)
    hops = len(path) - 1
    min_s = min(kernel.s(path[i + 1] - path[i]) for i in range(hops))
    c2 = (4 * hops - 3) * hops / min_s
    return KernelMoments(sigma2, m, 1.0 / (4.0 * sigma2), c2, path)


def gamma_sequence(n: int, b: float, C: float) -> float:
    """``b / sqrt(n)`` once ``n >= (bC)^2`` (so ``gamma_n C <= 1``), else 0."""
    if n >= (b * C) ** 2:
        return b / math.sqrt(n)
    return 0.0


def build_alias(probs) -> tuple[np.ndarray, np.ndarray]:
    """Vose alias table for the (unnormalized) weights ``probs``."""
    p = np.asarray(probs, dtype=float)
    k = len(p)
    scaled = p * k / p.sum()
    prob = np.zeros(k)
    alias = np.arange(k, dtype=np.int64)
    small = [i for i in range(k) if scaled[i] < 1.0]
    large = [i for i in range(k) if scaled[i] >= 1.0]
    while small and large:
        s, l = small.pop(), large.pop()
        prob[s] = scaled[s]
        alias[s] = l
        scaled[l] = (scaled[l] + scaled[s]) - 1.0
        (small if scaled[l] < 1.0 else large).append(l)
    for i in large + small:
        prob[i] = 1.0
    return prob, alias


def alias_draw(prob, alias, u):
    """Map uniforms ``u`` in [0, 1) to alias-table columns (one uniform per draw)."""
    k = len(prob)
    scaled = np.asarray(u) * k
    col = np.minimum(scaled.astype(np.int64), k - 1)
    frac = scaled - col
    return np.where(frac < prob[col], col, alias[col])


def build_pn(kernel: RateKernel, n: int, b: float) -> JumpDistribution:
    gamma = gamma_sequence(n, b, kernel.domination_C)
    zs = sorted(set(kernel.s_values) | set(kernel.a_values))
    p_values = {}
    for z in zs:
        p = kernel.s(z) + gamma * kernel.a(z)
        if p < 0:
            raise NegativeRate(f"p_n({z}) = {p} < 0 at n={n}, b={b}", z=z)
        if p > 0:
            p_values[z] = p
    disp = np.array(list(p_values), dtype=np.int64)
    probs = np.array([p_values[z] for z in disp], dtype=float)
    prob, alias = build_alias(probs)
    return JumpDistribution(n, gamma, p_values, disp, probs, prob, alias)
