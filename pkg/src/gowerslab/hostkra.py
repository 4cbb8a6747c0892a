"""Prefiltered groups, Host-Kra cube groups and the polynomial-map criterion.

A group model is any object with ``identity()``, ``mul(a, b)`` and
``inv(a)``; finite models also provide ``elements()``.  Cubes are tuples of
2^k entries indexed by omega in {0,1}^k in lexicographic order.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import budget
from .abelian import GroupSpec
from .heisenberg import HeisenbergPoint, heis_inv, heis_mul, in_level

DEFAULT_SAMPLES = 10**5


# -- group models -----------------------------------------------------------


class AbelianModel:
    def __init__(self, g: GroupSpec):
        self.g = g

    def identity(self):
        return self.g.zero()

    def mul(self, a, b):
        return self.g.add(a, b)

    def inv(self, a):
        return self.g.neg(a)

    def elements(self):
        return [tuple(int(v) for v in row) for row in self.g.coords]

    def __repr__(self):
        return f"AbelianModel({self.g})"


class HeisenbergModP:
    """Upper unitriangular 3x3 matrices over Z/p: (a,b,c)(a',b',c') = (a+a', b+b', c+c'+ab')."""

    def __init__(self, p: int):
        if p < 2:
            raise ValueError("p: need p >= 2")
        self.p = p

    def identity(self):
        return (0, 0, 0)

    def mul(self, u, v):
        p = self.p
        return ((u[0] + v[0]) % p, (u[1] + v[1]) % p, (u[2] + v[2] + u[0] * v[1]) % p)

    def inv(self, u):
        p = self.p
        return ((-u[0]) % p, (-u[1]) % p, (-u[2] + u[0] * u[1]) % p)

    def elements(self):
        return list(itertools.product(range(self.p), repeat=3))

    def __repr__(self):
        return f"HeisenbergModP({self.p})"


class TorusModel:
    """R/Z with exact Fraction (or float) values."""

    def identity(self):
        return Fraction(0)

    def mul(self, a, b):
        return (a + b) % 1

    def inv(self, a):
        return (-a) % 1


class RealHeisenbergModel:
    def __init__(self, N: int):
        self.N = N

    def identity(self):
        return HeisenbergPoint.identity(self.N)

    def mul(self, a, b):
        return heis_mul(a, b)

    def inv(self, a):
        return heis_inv(a)


def commutator(model, a, b):
    return model.mul(model.mul(model.mul(a, b), model.inv(a)), model.inv(b))


def generated_subgroup(model, gens, cap: int = 10**6) -> frozenset:
    """Closure of the generators under multiplication (finite models)."""
    e = model.identity()
    seen = {e}
    queue = deque([e])
    gens = list(gens)
    while queue:
        a = queue.popleft()
        for s in gens:
            b = model.mul(a, s)
            if b not in seen:
                seen.add(b)
                if len(seen) > cap:
                    raise budget.BudgetExceeded("subgroup closure exceeded its cap")
                queue.append(b)
    return frozenset(seen)


# -- prefiltrations ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Prefiltration:
    """G_0 >= G_1 >= ... >= G_s with G_i trivial for i > s (finite models)."""

    model: object
    level_generators: tuple[tuple, ...]
    levels: tuple[frozenset, ...] = field(default=())

    def __post_init__(self):
        gens = tuple(tuple(g) for g in self.level_generators)
        levels = tuple(generated_subgroup(self.model, g) for g in gens)
        for i in range(len(levels) - 1):
            if not levels[i + 1] <= levels[i]:
                raise ValueError(f"levels: G_{i + 1} is not contained in G_{i}")
        s = len(levels) - 1
        e = self.model.identity()
        for i, gi in enumerate(gens):
            for j, gj in enumerate(gens):
                for a in gi:
                    for b in gj:
                        com = commutator(self.model, a, b)
                        target = levels[i + j] if i + j <= s else frozenset({e})
                        if com not in target:
                            raise ValueError(f"levels: commutator [{a}, {b}] escapes G_{i + j}")
        object.__setattr__(self, "level_generators", gens)
        object.__setattr__(self, "levels", levels)

    @property
    def degree(self) -> int:
        return len(self.levels) - 1

    @property
    def is_filtration(self) -> bool:
        return len(self.levels) < 2 or self.levels[0] == self.levels[1]

    def generators(self, i: int) -> tuple:
        if i < len(self.level_generators):
            return self.level_generators[i]
        return ()

    def member(self, i: int, a) -> bool:
        if i < len(self.levels):
            return a in self.levels[i]
        return a == self.model.identity()

    @classmethod
    def abelian(cls, g: GroupSpec) -> Prefiltration:
        model = AbelianModel(g)
        basis = tuple(tuple(1 if i == j else 0 for j in range(g.rank)) for i in range(g.rank))
        return cls(model, (basis, basis))

    @classmethod
    def lower_central_heisenberg(cls, p: int) -> Prefiltration:
        model = HeisenbergModP(p)
        top = ((1, 0, 0), (0, 1, 0))
        return cls(model, (top, top, ((0, 0, 1),)))

    def restrict(self, subgroup: frozenset) -> Prefiltration:
        """The induced prefiltration Gamma_i = Gamma & G_i (generated by all its elements)."""
        gens = tuple(tuple(sorted(subgroup & lvl)) for lvl in self.levels)
        return Prefiltration(self.model, gens)


@dataclass(frozen=True, eq=False)
class TorusFiltration:
    """R/Z = H_0 = ... = H_s, H_{s+1} = 0."""

    degree: int
    model: object = field(default_factory=TorusModel)

    def member(self, i: int, a) -> bool:
        if i <= self.degree:
            return True
        return a % 1 == 0


@dataclass(frozen=True, eq=False)
class HeisenbergFiltration:
    N: int
    tol: float = 1e-9

    @property
    def model(self):
        return RealHeisenbergModel(self.N)

    degree = 2

    def member(self, i: int, a) -> bool:
        return in_level(a, i, self.tol)


# -- cubes -------------------------------------------------------------------


def omegas(k: int) -> list[tuple[int, ...]]:
    return list(itertools.product((0, 1), repeat=k))


def hk_generators(filt: Prefiltration, k: int) -> list[tuple]:
    if not 0 <= k <= 4:
        raise ValueError("k: need 0 <= k <= 4")
    e = filt.model.identity()
    oms = omegas(k)
    out = []
    for om0 in oms:
        for gen in filt.generators(sum(om0)):
            out.append(tuple(gen if all(a >= b for a, b in zip(om, om0)) else e for om in oms))
    return out


def cube_mul(model, p, q):
    return tuple(model.mul(a, b) for a, b in zip(p, q))


def hk_closure(gens: Sequence[tuple], model, k: int | None = None, cap: int | None = None) -> set:
    """Breadth-first closure of the identity cube under right multiplication."""
    gens = list(gens)
    if k is None:
        if not gens:
            raise ValueError("k: needed when there are no generators")
        k = len(gens[0]).bit_length() - 1
    e = model.identity()
    start = (e,) * 2**k
    limit = budget.work_cap(10**6) if cap is None else cap
    seen = {start}
    queue = deque([start])
    while queue:
        c = queue.popleft()
        for s in gens:
            d = cube_mul(model, c, s)
            if d not in seen:
                seen.add(d)
                if len(seen) > limit:
                    raise budget.BudgetExceeded(f"Host-Kra closure exceeded {limit} cubes")
                queue.append(d)
    return seen


def host_kra_group(filt: Prefiltration, k: int, checked: bool = True) -> set:
    cubes = hk_closure(hk_generators(filt, k), filt.model, k)
    if checked and isinstance(filt.model, AbelianModel) and filt.degree == 1 and filt.is_filtration:
        if cubes != parallelepipeds(filt.model.g, k):
            raise AssertionError("abelian Host-Kra group differs from the parallelepipeds")
    return cubes


def parallelepipeds(g: GroupSpec, k: int) -> set:
    """{(x + omega.h)_omega : x, h_1..h_k in G}."""
    elems = [tuple(int(v) for v in row) for row in g.coords]
    oms = omegas(k)
    out = set()
    for x in elems:
        for hs in itertools.product(elems, repeat=k):
            cube = []
            for om in oms:
                y = x
                for bit, h in zip(om, hs):
                    if bit:
                        y = g.add(y, h)
                cube.append(y)
            out.add(tuple(cube))
    return out


# -- polynomial maps --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PolynomialMapTable:
    source: GroupSpec
    target: object  # a filtration object with .model and .member
    values: tuple

    def __post_init__(self):
        if len(self.values) != self.source.cardinality:
            raise ValueError(f"values: need {self.source.cardinality} entries")

    def __call__(self, x):
        return self.values[self.source.index(x)]


@dataclass(frozen=True)
class PolyCheck:
    ok: bool
    witness: tuple | None
    mode: str
    tuples: int


def iterated_derivative(phi: Callable, model, x, hs, sub: Callable):
    """d_{h_1} ... d_{h_k} phi(x) with d_h psi(x) = psi(x) psi(x - h)^{-1}."""
    if not hs:
        return phi(x)
    h, rest = hs[0], hs[1:]
    a = iterated_derivative(phi, model, x, rest, sub)
    b = iterated_derivative(phi, model, sub(x, h), rest, sub)
    return model.mul(a, model.inv(b))


def check_derivatives(phi: Callable, target, tuples, sub: Callable, depth: int):
    """First (x, h_1..h_k) with a k-th derivative outside H_k, over the given (x, hs) stream."""
    model = target.model
    count = 0
    for x, hs in tuples:
        for k in range(1, min(depth, len(hs)) + 1):
            count += 1
            d = iterated_derivative(phi, model, x, tuple(hs[:k]), sub)
            if not target.member(k, d):
                return (x,) + tuple(hs[:k]), count
    return None, count


def is_polynomial(m: PolynomialMapTable, depth: int, samples: int = DEFAULT_SAMPLES,
                  seed: int = 0, exhaustive: bool | None = None) -> PolyCheck:
    deg = getattr(m.target, "degree", None)
    if deg is not None and depth < deg + 1:
        raise ValueError(f"depth: need depth >= degree + 1 = {deg + 1}")
    g = m.source
    n = g.cardinality
    work = n ** (depth + 1)
    if exhaustive is None:
        exhaustive = work <= budget.work_cap(10**6)
    elems = [tuple(int(v) for v in row) for row in g.coords]
    if exhaustive:
        budget.check(work, "is_polynomial exhaustive")
        # every k-th derivative is reached by the tuple prefixes of the depth-tuples
        stream = ((x, hs) for x in elems for hs in itertools.product(elems, repeat=depth))
        mode = "exhaustive"
    else:
        rng = np.random.Generator(np.random.Philox(seed))
        draws = rng.integers(0, n, size=(samples, depth + 1))
        stream = ((elems[r[0]], tuple(elems[v] for v in r[1:])) for r in draws)
        mode = "sampled"
    witness, count = check_derivatives(m, m.target, stream, g.sub, depth)
    return PolyCheck(witness is None, witness, mode, count)
