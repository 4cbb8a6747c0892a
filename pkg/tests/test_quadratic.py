import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gowerslab.abelian import GroupSpec
from gowerslab.quadratic import (FGGroup, GlobalBilinearForm, GlobalQuadraticPhase, NotSymmetric,
                                 form_from_function, integrate_global, phase_table)


def cocycle_failures(phi, form, group, points):
    return [(u, v) for u in points for v in points
            if (phi(group.add(u, v)) - phi(u) - phi(v) - form(u, v)) % 1]


def test_z2_example():
    phi = integrate_global(GlobalBilinearForm(FGGroup((2,)), ((Fraction(1, 2),),)))
    assert phi((0,)) == 0 and phi((1,)) == Fraction(3, 4)
    assert (phi((1,)) + phi((1,)) + Fraction(1, 2)) % 1 == phi((0,))


def test_free_factor_example():
    form = GlobalBilinearForm(FGGroup((0,)), ((Fraction(1, 3),),), torus=False)
    phi = integrate_global(form)
    for x in range(-6, 7):
        assert phi((x,)) == Fraction(x * x, 6)
        for y in range(-6, 7):
            assert phi((x + y,)) - phi((x,)) - phi((y,)) == Fraction(x * y, 3) == form((x,), (y,))


def test_zero_form_gives_zero_phase():
    grp = FGGroup((4, 6))
    phi = integrate_global(GlobalBilinearForm.zero(grp))
    assert all(phi(u) == 0 for u in itertools.product(range(4), range(6)))


def test_asymmetric_rejected():
    form = GlobalBilinearForm(FGGroup((4, 4)), ((0, Fraction(1, 4)), (Fraction(1, 2), 0)))
    with pytest.raises(NotSymmetric) as info:
        integrate_global(form)
    assert info.value.pair == (0, 1)


def test_incompatible_coefficient_rejected():
    with pytest.raises(ValueError):
        GlobalBilinearForm(FGGroup((4,)), ((Fraction(1, 3),),))


def test_cocycle_exhaustive_on_144():
    rng = np.random.default_rng(5)
    grp = FGGroup((12, 12))
    g = GroupSpec((12, 12))
    for _ in range(3):
        a, b, c = (int(v) for v in rng.integers(0, 12, size=3))
        form = GlobalBilinearForm(grp, ((Fraction(a, 12), Fraction(b, 12)), (Fraction(b, 12), Fraction(c, 12))))
        phi = integrate_global(form)
        pts = [tuple(int(v) for v in row) for row in g.coords]
        assert not cocycle_failures(phi, form, grp, pts)


def test_cocycle_mixed_torsion_and_free_words():
    grp = FGGroup((3, 0, 0))
    mat = ((Fraction(1, 3), Fraction(2, 3), Fraction(1, 3)),
           (Fraction(2, 3), Fraction(5, 7), Fraction(1, 11)),
           (Fraction(1, 3), Fraction(1, 11), Fraction(2, 9)))
    form = GlobalBilinearForm(grp, mat)
    phi = integrate_global(form)
    # words of length <= 4 in the generators and their inverses
    gens = [(1, 0, 0), (0, 1, 0), (0, 0, 1), (0, -1, 0), (0, 0, -1)]
    words = {(0, 0, 0)}
    for _ in range(4):
        words |= {grp.add(w, s) for w in words for s in gens}
    assert not cocycle_failures(phi, form, grp, sorted(words))


def test_form_from_function_and_table():
    g = GroupSpec((6,))
    form = form_from_function(g, lambda x, y: Fraction(x[0] * y[0], 6))
    phi = integrate_global(form)
    table = phase_table(phi, g)
    assert len(table) == 6 and table[0] == 0


def test_with_linear_stays_quadratic():
    grp = FGGroup((8,))
    form = GlobalBilinearForm(grp, ((Fraction(3, 8),),))
    phi = integrate_global(form).with_linear([Fraction(5, 8)])
    pts = [(x,) for x in range(8)]
    assert not cocycle_failures(phi, form, grp, pts)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.integers(1, 6), st.data())
def test_cocycle_random_cyclic_products(n, m, data):
    grp = FGGroup((n, m))
    a = data.draw(st.integers(0, n - 1))
    c = data.draw(st.integers(0, m - 1))
    import math
    d = math.gcd(n, m)
    b = data.draw(st.integers(0, d - 1))
    form = GlobalBilinearForm(grp, ((Fraction(a, n), Fraction(b, d)), (Fraction(b, d), Fraction(c, m))))
    phi = integrate_global(form)
    pts = list(itertools.product(range(n), range(m)))
    assert not cocycle_failures(phi, form, grp, pts)
