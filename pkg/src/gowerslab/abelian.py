"""Finite abelian groups presented as products of cyclic factors.

Elements and frequencies are plain tuples of integers; the dual group of
Z/N_1 x ... x Z/N_k is identified with the group itself through
xi . x = sum_i a_i x_i / N_i (mod 1).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from .budget import ENUMERATION_CAP

GroupElement = tuple[int, ...]
Frequency = tuple[int, ...]


@dataclass(frozen=True)
class GroupSpec:
    orders: tuple[int, ...]

    def __post_init__(self):
        orders = tuple(int(n) for n in self.orders)
        if any(n < 1 for n in orders):
            raise ValueError(f"orders: every cyclic order must be >= 1, got {orders}")
        object.__setattr__(self, "orders", orders)

    @property
    def rank(self) -> int:
        return len(self.orders)

    @property
    def cardinality(self) -> int:
        return math.prod(self.orders)

    def __len__(self) -> int:
        return self.cardinality

    def __str__(self) -> str:
        if not self.orders:
            return "Z/1"
        return "x".join(f"Z/{n}" for n in self.orders)

    @cached_property
    def exponent(self) -> int:
        """lcm of the cyclic orders; every pairing has this as a denominator."""
        return math.lcm(*self.orders) if self.orders else 1

    @cached_property
    def strides(self) -> np.ndarray:
        s = np.ones(self.rank, dtype=np.int64)
        for i in range(self.rank - 2, -1, -1):
            s[i] = s[i + 1] * self.orders[i + 1]
        return s

    # -- validation and scalar arithmetic ---------------------------------

    def check(self, x: Sequence[int], what: str = "element") -> GroupElement:
        x = tuple(int(v) for v in x)
        if len(x) != self.rank:
            raise ValueError(f"{what}: expected {self.rank} coordinates for {self}, got {len(x)}")
        for v, n in zip(x, self.orders):
            if not 0 <= v < n:
                raise ValueError(f"{what}: coordinate {v} out of range for Z/{n}")
        return x

    def reduce(self, x: Sequence[int]) -> GroupElement:
        if len(x) != self.rank:
            raise ValueError(f"element: expected {self.rank} coordinates, got {len(x)}")
        return tuple(int(v) % n for v, n in zip(x, self.orders))

    def zero(self) -> GroupElement:
        return (0,) * self.rank

    def add(self, x: Sequence[int], y: Sequence[int]) -> GroupElement:
        return self.reduce([a + b for a, b in zip(x, y)])

    def sub(self, x: Sequence[int], y: Sequence[int]) -> GroupElement:
        return self.reduce([a - b for a, b in zip(x, y)])

    def neg(self, x: Sequence[int]) -> GroupElement:
        return self.reduce([-a for a in x])

    def scale(self, m: int, x: Sequence[int]) -> GroupElement:
        return self.reduce([m * a for a in x])

    def index(self, x: Sequence[int]) -> int:
        return int(np.dot(self.reduce(x), self.strides)) if self.rank else 0

    def element(self, i: int) -> GroupElement:
        i = int(i)
        if not 0 <= i < self.cardinality:
            raise IndexError(f"index {i} out of range for {self}")
        out = []
        for n in reversed(self.orders):
            i, r = divmod(i, n)
            out.append(r)
        return tuple(reversed(out))

    # -- dense (vectorized) views -----------------------------------------

    @cached_property
    def coords(self) -> np.ndarray:
        """(|G|, rank) integer array of all elements in enumeration order."""
        _check_cap(self)
        if self.rank == 0:
            return np.zeros((1, 0), dtype=np.int64)
        grids = np.indices(self.orders, dtype=np.int64).reshape(self.rank, -1)
        return np.ascontiguousarray(grids.T)

    def index_array(self, coords: np.ndarray) -> np.ndarray:
        coords = np.asarray(coords, dtype=np.int64)
        if self.rank == 0:
            return np.zeros(coords.shape[:-1], dtype=np.int64)
        reduced = np.mod(coords, np.asarray(self.orders, dtype=np.int64))
        return reduced @ self.strides

    def translate_indices(self, h: Sequence[int], sign: int = 1) -> np.ndarray:
        """Indices of x + sign*h for every x in enumeration order."""
        return self.index_array(self.coords + sign * np.asarray(self.reduce(h), dtype=np.int64))

    @cached_property
    def neg_indices(self) -> np.ndarray:
        return self.index_array(-self.coords)

    @cached_property
    def add_table(self) -> np.ndarray:
        """add_table[h, x] = index of x + h (only built for small groups)."""
        n = self.cardinality
        if n * n > 2**26:
            raise MemoryError(f"sum table for {self} is too large")
        return self.index_array(self.coords[None, :, :] + self.coords[:, None, :])

    @cached_property
    def sub_table(self) -> np.ndarray:
        """sub_table[h, x] = index of x - h (only built for small groups)."""
        n = self.cardinality
        if n * n > 2**26:
            raise MemoryError(f"difference table for {self} is too large")
        return self.index_array(self.coords[None, :, :] - self.coords[:, None, :])

    def pairing_numerators(self, xis: np.ndarray, xs: np.ndarray) -> np.ndarray:
        """Integer matrix P with xi_a . x_b = P[a, b] / exponent (mod 1)."""
        xis = np.atleast_2d(np.asarray(xis, dtype=np.int64))
        xs = np.atleast_2d(np.asarray(xs, dtype=np.int64))
        if self.rank == 0:
            return np.zeros((xis.shape[0], xs.shape[0]), dtype=np.int64)
        weights = np.asarray([self.exponent // n for n in self.orders], dtype=np.int64)
        # reduce factor by factor so the int64 products stay small
        out = np.zeros((xis.shape[0], xs.shape[0]), dtype=np.int64)
        for i, n in enumerate(self.orders):
            prod = np.outer(xis[:, i] % n, xs[:, i] % n) % n
            out = (out + prod * weights[i]) % self.exponent
        return out


def _check_cap(g: GroupSpec, cap: int = ENUMERATION_CAP) -> None:
    if g.cardinality > cap:
        raise MemoryError(f"group {g} has {g.cardinality} elements, above the enumeration cap {cap}")


def parse_group(text: str) -> GroupSpec:
    """Parse strings such as ``"Z/4xZ/6"`` (case-insensitive)."""
    if not isinstance(text, str) or not text.strip():
        raise ValueError("group: empty group description")
    parts = re.split(r"\s*[xX]\s*", text.strip())
    orders = []
    for part in parts:
        m = re.fullmatch(r"[zZ]\s*/\s*(\d+)", part)
        if m is None:
            raise ValueError(f"group: cannot parse factor {part!r} in {text!r}")
        orders.append(int(m.group(1)))
    return GroupSpec(tuple(orders))


# -- torus values --------------------------------------------------------


@dataclass(frozen=True)
class TorusValue:
    """An element of R/Z, exact when built from a Fraction."""

    value: Fraction | float

    def __post_init__(self):
        v = self.value
        if isinstance(v, float):
            r = v - math.floor(v)
            if r >= 1.0:
                r = 0.0
        else:
            v = Fraction(v)
            r = v - math.floor(v)
        object.__setattr__(self, "value", r)

    @property
    def exact(self) -> bool:
        return isinstance(self.value, Fraction)

    def __add__(self, other: TorusValue | Fraction | int) -> TorusValue:
        o = other.value if isinstance(other, TorusValue) else other
        return TorusValue(self.value + o)

    __radd__ = __add__

    def __neg__(self) -> TorusValue:
        return TorusValue(-self.value)

    def __sub__(self, other: TorusValue | Fraction | int) -> TorusValue:
        o = other.value if isinstance(other, TorusValue) else other
        return TorusValue(self.value - o)

    def __mul__(self, m: int) -> TorusValue:
        if not isinstance(m, int):
            raise TypeError("torus values can only be scaled by integers")
        return TorusValue(self.value * m)

    __rmul__ = __mul__

    def __float__(self) -> float:
        return float(self.value)

    def centered(self) -> Fraction | float:
        """Representative in (-1/2, 1/2]."""
        return self.value - 1 if self.value > Fraction(1, 2) else self.value

    def norm(self) -> Fraction | float:
        """Distance to the nearest integer."""
        return min(self.value, 1 - self.value)

    def e(self) -> complex:
        return complex(np.exp(2j * np.pi * float(self.value)))

    def __repr__(self) -> str:
        return f"TorusValue({self.value})"


def e(theta) -> np.ndarray | complex:
    """The standard character theta -> exp(2 pi i theta)."""
    return np.exp(2j * np.pi * np.asarray(theta, dtype=float))


# -- the three core operations -------------------------------------------


def pairing(xi: Sequence[int], x: Sequence[int], g: GroupSpec) -> TorusValue:
    if len(xi) != g.rank or len(x) != g.rank:
        raise ValueError(
            f"pairing: dimension mismatch (frequency {len(xi)}, element {len(x)}, group rank {g.rank})"
        )
    total = sum(Fraction(int(a) * int(b), n) for a, b, n in zip(xi, x, g.orders))
    return TorusValue(total)


def enumerate_group(g: GroupSpec, cap: int = ENUMERATION_CAP) -> Iterator[GroupElement]:
    _check_cap(g, cap)
    for i in range(g.cardinality):
        yield g.element(i)


def character_kernel(S: Sequence[Sequence[int]], g: GroupSpec) -> list[GroupElement]:
    S = [g.check(xi, "frequency") for xi in S]
    if not S:
        return [tuple(int(v) for v in row) for row in g.coords]
    num = g.pairing_numerators(np.asarray(S), g.coords)
    mask = np.all(num == 0, axis=0)
    return [tuple(int(v) for v in row) for row in g.coords[mask]]
