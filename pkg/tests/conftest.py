import itertools
import sys
from fractions import Fraction
from math import comb

import numpy as np
import pytest

from gowerslab.abelian import GroupSpec, e
from gowerslab.fourier import DenseFunction


def random_function(g: GroupSpec, rng, unimodular: bool = False) -> DenseFunction:
    n = g.cardinality
    if unimodular:
        return DenseFunction(g, e(rng.random(n)), bounded=True)
    r = np.sqrt(rng.random(n))
    return DenseFunction(g, r * e(rng.random(n)), bounded=True)


def planted_phase(N: int, a: int, b: int = 0) -> list[Fraction]:
    """The integrated cyclic quadratic a binom(x,2)/N - a x binom(N,2)/N^2 + b x/N."""
    return [Fraction(a * comb(x, 2), N) - Fraction(a * x * comb(N, 2), N * N) + Fraction(b * x, N)
            for x in range(N)]


def planted_function(N: int, a: int, b: int = 0) -> tuple[GroupSpec, list[Fraction], DenseFunction]:
    g = GroupSpec((N,))
    ph = planted_phase(N, a, b)
    return g, ph, DenseFunction(g, e(np.array([float(p) for p in ph])), bounded=True)


def naive_power(f: DenseFunction, d: int) -> float:
    """Literal E_{x,h} of the signed product over {0,1}^d."""
    g = f.group
    elems = [g.element(i) for i in range(g.cardinality)]
    total = 0j
    for x in elems:
        for hs in itertools.product(elems, repeat=d):
            prod = 1 + 0j
            for om in itertools.product((0, 1), repeat=d):
                y = x
                for bit, h in zip(om, hs):
                    if bit:
                        y = g.add(y, h)
                v = f(y)
                prod *= np.conj(v) if sum(om) % 2 else v
            total += prod
    return (total / g.cardinality ** (d + 1)).real


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: s[6:10]):
            terminalreporter.write_line(line)
