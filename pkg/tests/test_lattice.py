import itertools
from fractions import Fraction

import numpy as np
import pytest

from gowerslab.abelian import GroupSpec, character_kernel
from gowerslab.lattice import (cyclic_decomposition, decomposition_table, lattice_basis, lll_reduce,
                               rational_inverse, smith)


def det(m):
    return round(float(np.linalg.det(np.array(m, dtype=float))))


def in_lattice(v, basis):
    coeffs = np.linalg.solve(np.array(basis, dtype=float).T, np.array(v, dtype=float))
    return np.allclose(coeffs, np.round(coeffs), atol=1e-9)


def test_basis_spans_generators():
    rows = [[12, 0], [0, 12], [3, 8], [6, 4]]
    b = lattice_basis(rows)
    assert len(b) == 2
    assert all(in_lattice(r, b) for r in rows)
    # each basis row is itself an integer combination of the generators: index bound via det
    assert abs(det(b)) == 12


def test_lll_preserves_lattice():
    rng = np.random.default_rng(3)
    for _ in range(20):
        m = rng.integers(-30, 30, size=(3, 3)).tolist()
        if det(m) == 0:
            continue
        red = lll_reduce(m)
        assert abs(det(red)) == abs(det(m))
        assert all(in_lattice(r, m) for r in red) and all(in_lattice(r, red) for r in m)


def test_smith_decomposition():
    m = [[2, 4, 4], [-6, 6, 12], [10, -4, -16]]
    d, U, V = smith(m)
    prod = np.array(U) @ np.array(m) @ np.array(V)
    assert np.array_equal(prod, np.diag(d))
    assert all(d[i + 1] % d[i] == 0 for i in range(len(d) - 1) if d[i])


def test_rational_inverse():
    m = [[Fraction(1, 2), Fraction(1, 3)], [Fraction(2), Fraction(5, 7)]]
    inv = rational_inverse(m)
    prod = [[sum(a * b for a, b in zip(r, c)) for c in zip(*inv)] for r in m]
    assert prod == [[1, 0], [0, 1]]


@pytest.mark.parametrize("orders,S", [((12,), [(4,)]), ((4, 6), [(2, 3)]), ((6, 6), [(1, 1)]), ((8, 4), [])])
def test_cyclic_decomposition_is_bijective(orders, S):
    g = GroupSpec(orders)
    K = character_kernel(S, g)
    gens, ords = cyclic_decomposition(g, K)
    table = decomposition_table(g, gens, ords)
    assert set(table) == set(K)
    assert len(table) == int(np.prod(ords)) if ords else len(K) == 1
