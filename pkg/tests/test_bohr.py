from fractions import Fraction

import numpy as np
import pytest

from gowerslab.abelian import GroupSpec, pairing
from gowerslab.bohr import (FrequencySet, NoRegularRadius, bohr_enumerate, bohr_report, bohr_seminorm,
                            find_regular_radius, is_regular)


def seminorm_brute(S, x):
    if not S.freqs:
        return Fraction(0)
    return max(pairing(xi, x, S.group).norm() for xi in S.freqs)


def count_brute(S, r):
    g = S.group
    return sum(1 for i in range(g.cardinality) if seminorm_brute(S, g.element(i)) < r)


def sweep_violation(S, rho, points=10**4):
    """Fine kappa grid oracle with exact counts; the first violating kappa or None."""
    a = 100 * len(S)
    B = count_brute(S, rho)
    norms = sorted(seminorm_brute(S, S.group.element(i)) for i in range(S.group.cardinality))
    import bisect
    for k in range(points + 1):
        kappa = Fraction(-1, a) + Fraction(2 * k, a * points)
        c = bisect.bisect_left(norms, (1 + kappa) * rho)
        if c < B - a * abs(kappa) * B or c > B + a * abs(kappa) * B:
            return kappa
    return None


def violates(S, rho, kappa):
    a = 100 * len(S)
    B = count_brute(S, rho)
    c = count_brute(S, (1 + kappa) * rho)
    return abs(kappa) <= Fraction(1, a) and (c < B - a * abs(kappa) * B or c > B + a * abs(kappa) * B)


def test_seminorm_examples():
    g = GroupSpec((8,))
    assert bohr_seminorm(FrequencySet(g, ((1,),)), (3,)) == Fraction(3, 8)
    assert bohr_seminorm(FrequencySet(g, ()), (5,)) == 0
    assert bohr_seminorm(FrequencySet(g, ((1,), (3,))), (3,)) == Fraction(3, 8)


def test_enumerate_examples():
    g = GroupSpec((8,))
    assert bohr_enumerate(FrequencySet(g, ()), Fraction(1, 4)).cardinality == 8
    assert set(bohr_enumerate(FrequencySet(g, ((1,),)), Fraction(1, 4)).members) == {(0,), (1,), (7,)}
    assert bohr_enumerate(FrequencySet(GroupSpec((5,)), ((1,),)), Fraction(1, 10)).members == ((0,),)
    with pytest.raises(ValueError):
        bohr_enumerate(FrequencySet(g, ((1,),)), Fraction(1, 2))


def test_duplicate_frequencies_rejected():
    with pytest.raises(ValueError):
        FrequencySet(GroupSpec((8,)), ((1,), (1,)))


@pytest.mark.parametrize("orders,S", [((512,), ((5,),)), ((16, 8), ((1, 2), (3, 0))), ((7, 9), ((2, 4),))])
def test_membership_symmetry_monotonicity(orders, S):
    g = GroupSpec(orders)
    S = FrequencySet(g, S)
    elems = [g.element(i) for i in range(g.cardinality)]
    prev = set()
    for rho in (Fraction(1, 50), Fraction(1, 8), Fraction(3, 16), Fraction(1, 4), Fraction(49, 100)):
        B = set(bohr_enumerate(S, rho).members)
        assert B == {x for x in elems if seminorm_brute(S, x) < rho}
        assert g.zero() in B and all(g.neg(x) in B for x in B)
        assert prev <= B
        prev = B


def test_empty_set_regular_by_convention():
    S = FrequencySet(GroupSpec((6,)), ())
    assert is_regular(S, Fraction(1, 4)).regular
    assert bohr_report(S, Fraction(1, 4))["regular_by_convention"]


def test_regularity_matches_sweep_z64():
    S = FrequencySet(GroupSpec((64,)), ((1,),))
    rho = Fraction(1, 5)
    res = is_regular(S, rho)
    assert res.regular == (sweep_violation(S, rho) is None)


def test_breakpoint_radius_gives_witness():
    S = FrequencySet(GroupSpec((8,)), ((1,),))
    res = is_regular(S, Fraction(1, 8))
    oracle = sweep_violation(S, Fraction(1, 8))
    assert res.regular == (oracle is None)
    if not res.regular:
        assert violates(S, Fraction(1, 8), res.witness)


def test_regularity_random_instances():
    rng = np.random.default_rng(7)
    shapes = [(12,), (31,), (64,), (4, 6), (9, 9), (101,)]
    for t in range(200):
        g = GroupSpec(shapes[t % len(shapes)])
        s = 1 + t % 2
        idx = rng.choice(np.arange(1, g.cardinality), size=s, replace=False)
        S = FrequencySet(g, tuple(g.element(int(i)) for i in idx))
        rho = Fraction(int(rng.integers(1, 490)), 1000)
        res = is_regular(S, rho)
        oracle = sweep_violation(S, rho, points=400)
        if oracle is not None:
            assert not res.regular
        if not res.regular:
            assert violates(S, rho, res.witness)


def test_is_regular_precondition():
    S = FrequencySet(GroupSpec((8,)), ((1,),))
    with pytest.raises(ValueError):
        is_regular(S, Fraction(1, 2))


def test_find_regular_radius():
    S = FrequencySet(GroupSpec((101,)), ((1,),))
    rho = find_regular_radius(S, Fraction(1, 10), Fraction(1, 5))
    assert Fraction(1, 10) <= rho <= Fraction(1, 5) and is_regular(S, rho).regular
    # a narrow window around a regular radius
    rho2 = find_regular_radius(S, rho - Fraction(1, 10**6), rho + Fraction(1, 10**6))
    assert is_regular(S, rho2).regular


def test_find_regular_radius_exhausted():
    # just below 1/3 every radius sees |B| jump from 1 to 3 inside the kappa window
    S = FrequencySet(GroupSpec((3,)), ((1,),))
    with pytest.raises(NoRegularRadius):
        find_regular_radius(S, Fraction(3301, 10000), Fraction(3333, 10000))


def test_report_fields():
    rep = bohr_report(FrequencySet(GroupSpec((8,)), ((1,),)), Fraction(1, 4))
    assert rep["rho"] == "1/4" and rep["cardinality"] == 3
    assert set(rep) >= {"S", "rho", "cardinality", "regular", "witness"}
