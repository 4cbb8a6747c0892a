"""Bilinear forms and quadratic phases on finitely generated abelian groups.

A group here is Z/d_1 x ... x Z/d_r x Z^m, written as a tuple of orders
with 0 standing for a free factor.  Values are exact Fractions, taken
mod 1 when ``torus`` is set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Sequence

import numpy as np

from .abelian import GroupSpec


class NotSymmetric(ValueError):
    def __init__(self, pair):
        super().__init__(f"form is not symmetric on generator pair {pair}")
        self.pair = pair


def _mod1(v: Fraction) -> Fraction:
    return v - math.floor(v)


def binom2(x) -> Fraction:
    """x(x-1)/2, the polynomial extension of binom(x, 2)."""
    return Fraction(x) * (Fraction(x) - 1) / 2


@dataclass(frozen=True)
class FGGroup:
    orders: tuple[int, ...]

    def __post_init__(self):
        orders = tuple(int(d) for d in self.orders)
        if any(d < 0 for d in orders):
            raise ValueError("orders: negative order")
        object.__setattr__(self, "orders", orders)

    @property
    def rank(self) -> int:
        return len(self.orders)

    @property
    def torsion(self) -> tuple[int, ...]:
        return tuple(d for d in self.orders if d)

    @property
    def free_rank(self) -> int:
        return sum(1 for d in self.orders if d == 0)

    def reduce(self, u: Sequence[int]) -> tuple[int, ...]:
        return tuple(int(v) % d if d else int(v) for v, d in zip(u, self.orders))

    def add(self, u, v) -> tuple[int, ...]:
        return self.reduce([a + b for a, b in zip(u, v)])

    @classmethod
    def finite(cls, g: GroupSpec) -> FGGroup:
        return cls(g.orders)


@dataclass(frozen=True)
class GlobalBilinearForm:
    """B(u, v) = sum_{a,b} u_a v_b beta[a][b]."""

    group: FGGroup
    matrix: tuple[tuple[Fraction, ...], ...]
    torus: bool = True

    def __post_init__(self):
        n = self.group.rank
        mat = tuple(tuple(Fraction(v) for v in row) for row in self.matrix)
        if len(mat) != n or any(len(r) != n for r in mat):
            raise ValueError(f"matrix: expected a {n}x{n} coefficient matrix")
        if self.torus:
            mat = tuple(tuple(_mod1(v) for v in row) for row in mat)
        for a, da in enumerate(self.group.orders):
            if not da:
                continue
            for b in range(n):
                for v in (mat[a][b], mat[b][a]):
                    bad = (v * da).denominator != 1 if self.torus else v != 0
                    if bad:
                        raise ValueError(
                            f"matrix: coefficient ({a},{b}) = {v} is incompatible with the Z/{da} factor"
                        )
        object.__setattr__(self, "matrix", mat)

    def __call__(self, u: Sequence[int], v: Sequence[int]) -> Fraction:
        total = sum(
            (int(u[a]) * int(v[b]) * self.matrix[a][b]
             for a in range(self.group.rank) for b in range(self.group.rank)
             if u[a] and v[b]),
            Fraction(0),
        )
        return _mod1(total) if self.torus else total

    def asymmetry(self):
        n = self.group.rank
        for a in range(n):
            for b in range(a + 1, n):
                if self.matrix[a][b] != self.matrix[b][a]:
                    return (a, b)
        return None

    @property
    def symmetric(self) -> bool:
        return self.asymmetry() is None

    @classmethod
    def zero(cls, group: FGGroup, torus: bool = True) -> GlobalBilinearForm:
        n = group.rank
        return cls(group, tuple((Fraction(0),) * n for _ in range(n)), torus)


@dataclass(frozen=True)
class GlobalQuadraticPhase:
    """phi(u) = sum_a q_a(u_a) + sum_{a<b} u_a u_b beta_ab + sum_a l_a u_a.

    q_a(x) = a_a binom(x,2)/d - a_a x binom(d,2)/d^2 on a Z/d factor (a_a = d beta_aa),
    and beta_aa x^2/2 on a free factor.
    """

    form: GlobalBilinearForm
    linear: tuple[Fraction, ...] = field(default=())

    def __post_init__(self):
        n = self.form.group.rank
        lin = tuple(Fraction(v) for v in self.linear) if self.linear else (Fraction(0),) * n
        if len(lin) != n:
            raise ValueError(f"linear: expected {n} coefficients")
        if self.form.torus:
            lin = tuple(_mod1(v) for v in lin)
        for a, d in enumerate(self.form.group.orders):
            if d and ((lin[a] * d).denominator != 1 if self.form.torus else lin[a] != 0):
                raise ValueError(f"linear: coefficient {a} = {lin[a]} is incompatible with Z/{d}")
        object.__setattr__(self, "linear", lin)

    @property
    def group(self) -> FGGroup:
        return self.form.group

    @property
    def torus(self) -> bool:
        return self.form.torus

    def lifted(self, u: Sequence) -> Fraction:
        """The real polynomial behind phi, evaluated at integer (or rational) u."""
        beta = self.form.matrix
        total = Fraction(0)
        for a, d in enumerate(self.group.orders):
            x = Fraction(u[a])
            if not x:
                continue
            if d:
                coeff = beta[a][a] * d  # integer by construction
                total += coeff * binom2(x) / d - coeff * x * comb(d, 2) / d**2
            else:
                total += beta[a][a] * x * x / 2
            total += self.linear[a] * x
        n = self.group.rank
        for a in range(n):
            if not u[a]:
                continue
            for b in range(a + 1, n):
                if u[b]:
                    total += Fraction(u[a]) * Fraction(u[b]) * beta[a][b]
        return total

    def __call__(self, u: Sequence[int]) -> Fraction:
        v = self.lifted(u)
        return _mod1(v) if self.torus else v

    def with_linear(self, extra: Sequence[Fraction]) -> GlobalQuadraticPhase:
        return GlobalQuadraticPhase(self.form, tuple(a + Fraction(b) for a, b in zip(self.linear, extra)))

    def report(self) -> dict:
        return {
            "orders": list(self.group.orders),
            "beta": [[str(v) for v in row] for row in self.form.matrix],
            "linear": [str(v) for v in self.linear],
            "torus": self.torus,
        }


def integrate_global(B: GlobalBilinearForm) -> GlobalQuadraticPhase:
    pair = B.asymmetry()
    if pair is not None:
        raise NotSymmetric(pair)
    return GlobalQuadraticPhase(B)


def form_from_function(g: GroupSpec, fn) -> GlobalBilinearForm:
    """Coefficients of a global bilinear form on a finite group from its values on basis pairs."""
    n = g.rank
    basis = [tuple(1 if i == j else 0 for j in range(n)) for i in range(n)]
    mat = tuple(tuple(Fraction(fn(basis[a], basis[b])) for b in range(n)) for a in range(n))
    return GlobalBilinearForm(FGGroup.finite(g), mat)


def phase_table(phi: GlobalQuadraticPhase, g: GroupSpec) -> list[Fraction]:
    """phi on every element of the finite group g (same presentation), in enumeration order."""
    return [phi(tuple(int(v) for v in row)) for row in g.coords]


def to_numerators(values: Sequence[Fraction]) -> tuple[np.ndarray, int]:
    den = math.lcm(*(Fraction(v).denominator for v in values)) if len(values) else 1
    return np.array([int(Fraction(v) * den) for v in values], dtype=np.int64), den
