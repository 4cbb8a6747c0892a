"""Integer lattice utilities: Hermite/Smith normal forms and LLL reduction.

The normal forms themselves come from sympy; the callers verify every
structural claim they rely on with exact integer arithmetic.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Sequence

from sympy import ZZ, Matrix
from sympy.polys.matrices import DomainMatrix
from sympy.polys.matrices.normalforms import hermite_normal_form, smith_normal_decomp

from .abelian import GroupElement, GroupSpec


def lattice_basis(rows: Sequence[Sequence[int]]) -> list[list[int]]:
    """A basis (as rows) of the full-rank integer lattice spanned by ``rows``."""
    rows = [list(map(int, r)) for r in rows]
    dim = len(rows[0])
    cols = DomainMatrix([[ZZ(r[i]) for r in rows] for i in range(dim)], (dim, len(rows)), ZZ)
    h = hermite_normal_form(cols).to_Matrix()
    basis = [[int(h[i, j]) for i in range(dim)] for j in range(h.shape[1]) if any(h[i, j] for i in range(dim))]
    if len(basis) != dim:
        raise ValueError("lattice is not of full rank")
    return basis


def lll_reduce(basis: Sequence[Sequence[int]]) -> list[list[int]]:
    dm = DomainMatrix([[ZZ(int(v)) for v in r] for r in basis], (len(basis), len(basis[0])), ZZ)
    red = dm.lll().to_Matrix()
    return [[int(red[i, j]) for j in range(red.shape[1])] for i in range(red.shape[0])]


def rational_inverse(m: Sequence[Sequence[Fraction]]) -> list[list[Fraction]]:
    inv = Matrix([[Fraction(v) for v in r] for r in m]).inv()
    return [[Fraction(int(inv[i, j].p), int(inv[i, j].q)) for j in range(inv.shape[1])] for i in range(inv.shape[0])]


def smith(m: Sequence[Sequence[int]]):
    """Return (diag, U, V) with U * m * V = diag(d) for a square integer matrix."""
    n = len(m)
    dm = DomainMatrix([[ZZ(int(v)) for v in r] for r in m], (n, len(m[0])), ZZ)
    d, u, v = smith_normal_decomp(dm)
    d, u, v = d.to_Matrix(), u.to_Matrix(), v.to_Matrix()
    diag = [int(d[i, i]) for i in range(min(d.shape))]
    return diag, [[int(u[i, j]) for j in range(n)] for i in range(n)], [[int(v[i, j]) for j in range(v.shape[1])] for i in range(v.shape[0])]


def _matmul(a, b):
    return [[sum(x * y for x, y in zip(row, col)) for col in zip(*b)] for row in a]


def _span(g: GroupSpec, gens: list[GroupElement]) -> set[GroupElement]:
    span = {g.zero()}
    for gen in gens:
        frontier = set(span)
        cur = set(span)
        while True:
            frontier = {g.add(x, gen) for x in frontier} - cur
            if not frontier:
                break
            cur |= frontier
        span = cur
    return span


def cyclic_decomposition(g: GroupSpec, subgroup: Sequence[GroupElement]):
    """Decompose a subgroup of G as a direct sum of cyclic groups.

    Returns (generators, orders) with every order > 1 and the map
    t -> sum_k t_k * gen_k a bijection from prod Z/orders onto the subgroup.
    """
    members = {tuple(x) for x in subgroup}
    k = g.rank
    if len(members) == 1 or k == 0:
        return [], []
    # small generating set
    gens: list[GroupElement] = []
    span = {g.zero()}
    for x in sorted(members):
        if x not in span:
            gens.append(x)
            span = _span(g, gens)
        if len(span) == len(members):
            break
    rows = [[g.orders[i] if i == j else 0 for j in range(k)] for i in range(k)] + [list(x) for x in gens]
    basis = lattice_basis(rows)
    inv = rational_inverse(basis)
    rel = _matmul([[Fraction(g.orders[i]) if i == j else Fraction(0) for j in range(k)] for i in range(k)], inv)
    if any(v.denominator != 1 for r in rel for v in r):
        raise ArithmeticError("relation matrix is not integral")
    diag, _, V = smith([[int(v) for v in r] for r in rel])
    vinv = rational_inverse(V)
    new_basis = _matmul(vinv, basis)
    generators, orders = [], []
    for row, d in zip(new_basis, diag):
        d = abs(d)
        if any(Fraction(v).denominator != 1 for v in row):
            raise ArithmeticError("change of basis is not unimodular")
        if d > 1:
            generators.append(g.reduce([int(v) for v in row]))
            orders.append(d)
    if math.prod(orders) != len(members):
        raise ArithmeticError("cyclic decomposition has the wrong order")
    return generators, orders


def decomposition_table(g: GroupSpec, generators, orders) -> dict[GroupElement, tuple[int, ...]]:
    """Map each subgroup element to its coordinates t in prod Z/orders."""
    table = {}
    for t in itertools.product(*(range(d) for d in orders)):
        x = g.zero()
        for tk, gen in zip(t, generators):
            x = g.add(x, g.scale(tk, gen))
        if x in table:
            raise ArithmeticError("cyclic decomposition is not injective")
        table[x] = t
    return table
