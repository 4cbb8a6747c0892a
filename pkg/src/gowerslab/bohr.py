"""Bohr sets with exact rational membership and an exact regularity test."""
from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .abelian import GroupElement, GroupSpec

SAFETY_CANDIDATES = 10**4


class NoRegularRadius(RuntimeError):
    pass


@dataclass(frozen=True)
class FrequencySet:
    group: GroupSpec
    freqs: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        freqs = tuple(self.group.check(xi, "frequency") for xi in self.freqs)
        if len(set(freqs)) != len(freqs):
            raise ValueError("freqs: duplicate frequency in S")
        object.__setattr__(self, "freqs", freqs)

    def __len__(self) -> int:
        return len(self.freqs)

    def __iter__(self):
        return iter(self.freqs)

    @cached_property
    def _numerators(self) -> np.ndarray:
        """(|S|, |G|) pairing numerators over the group exponent."""
        g = self.group
        if not self.freqs:
            return np.zeros((0, g.cardinality), dtype=np.int64)
        return g.pairing_numerators(np.asarray(self.freqs), g.coords)

    @cached_property
    def seminorm_numerators(self) -> np.ndarray:
        """v with ||x||_S = v[x] / exponent, for every x in enumeration order."""
        num = self._numerators
        if num.shape[0] == 0:
            return np.zeros(self.group.cardinality, dtype=np.int64)
        L = self.group.exponent
        return np.minimum(num, L - num).max(axis=0)

    @cached_property
    def sorted_numerators(self) -> list[int]:
        return sorted(int(v) for v in self.seminorm_numerators)

    def seminorms(self) -> list[Fraction]:
        L = self.group.exponent
        return [Fraction(int(v), L) for v in self.seminorm_numerators]

    def count_below(self, r: Fraction) -> int:
        """#{x : ||x||_S < r}."""
        return bisect_left(self.sorted_numerators, Fraction(r) * self.group.exponent)

    def members_mask(self, rho: Fraction) -> np.ndarray:
        # v < rho*L  <=>  v < ceil(rho*L) for integer v
        t = -((-Fraction(rho) * self.group.exponent) // 1)
        return self.seminorm_numerators < int(t)

    def lifted_pairings(self, x: Sequence[int]) -> tuple[Fraction, ...]:
        """Centered lifts in (-1/2, 1/2] of xi.x for xi in S."""
        g = self.group
        idx = g.index(x)
        L = g.exponent
        out = []
        for row in self._numerators:
            v = int(row[idx])
            out.append(Fraction(v - L if 2 * v > L else v, L))
        return tuple(out)

    def centered_numerators(self) -> np.ndarray:
        """(|G|, |S|) integers c with centered lift of xi.x equal to c / exponent."""
        L = self.group.exponent
        num = self._numerators.T.copy()
        num[2 * num > L] -= L
        return num


@dataclass(frozen=True)
class BohrSet:
    S: FrequencySet
    rho: Fraction
    members: tuple[GroupElement, ...] = field(default=(), compare=False)

    @property
    def group(self) -> GroupSpec:
        return self.S.group

    @property
    def cardinality(self) -> int:
        return len(self.members)

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.S.members_mask(self.rho))

    def __contains__(self, x) -> bool:
        return bohr_seminorm(self.S, x) < self.rho


def bohr_seminorm(S: FrequencySet, x: Sequence[int]) -> Fraction:
    if not S.freqs:
        return Fraction(0)
    x = S.group.check(x)
    return Fraction(int(S.seminorm_numerators[S.group.index(x)]), S.group.exponent)


def bohr_enumerate(S: FrequencySet, rho) -> BohrSet:
    rho = Fraction(rho)
    if not 0 < rho < Fraction(1, 2):
        raise ValueError(f"rho: radius must lie in (0, 1/2), got {rho}")
    mask = S.members_mask(rho)
    coords = S.group.coords[mask]
    members = tuple(tuple(int(v) for v in row) for row in coords)
    return BohrSet(S, rho, members)


class Regularity(NamedTuple):
    regular: bool
    witness: Fraction | None


def is_regular(S: FrequencySet, rho) -> Regularity:
    rho = Fraction(rho)
    if len(S) == 0:
        return Regularity(True, None)
    a = 100 * len(S)
    if not (0 < rho and rho * (1 + Fraction(1, a)) < Fraction(1, 2)):
        raise ValueError(f"rho: need 0 < rho(1 + 1/(100|S|)) < 1/2, got rho = {rho}")
    B = S.count_below(rho)
    L = S.group.exponent
    lo, hi = -Fraction(1, a), Fraction(1, a)

    def violated(kappa: Fraction, count: int) -> bool:
        slack = a * abs(kappa) * B
        return count < B - slack or count > B + slack

    # breakpoints of kappa -> count((1+kappa) rho)
    points = {lo, hi, Fraction(0)}
    for v in set(S.sorted_numerators):
        k = Fraction(v, L) / rho - 1
        if lo < k < hi:
            points.add(k)
    points = sorted(points)
    for k in points:
        if violated(k, S.count_below((1 + k) * rho)):
            return Regularity(False, k)
    for left, right in zip(points, points[1:]):
        mid = (left + right) / 2
        c = S.count_below((1 + mid) * rho)
        near, far = (left, right) if abs(left) <= abs(right) else (right, left)
        m = abs(near)
        if c > B + a * m * B:
            limit = (Fraction(c, B) - 1) / a
        elif c < B - a * m * B:
            limit = (1 - Fraction(c, B)) / a
        else:
            continue
        # |kappa| must stay strictly below limit, and kappa strictly inside (left, right)
        edge = min(abs(far), limit)
        mag = (m + edge) / 2
        return Regularity(False, mag if left >= 0 else -mag)
    return Regularity(True, None)


def _candidates(S: FrequencySet, lo: Fraction, hi: Fraction):
    for k in range(64):
        yield lo + (hi - lo) * Fraction(2 * k + 1, 128)
    L = S.group.exponent
    cuts = sorted({Fraction(v, L) for v in S.sorted_numerators if lo < Fraction(v, L) < hi})
    cuts = [lo] + cuts + [hi]
    for left, right in zip(cuts, cuts[1:]):
        yield (left + right) / 2
    yield lo
    yield hi


def find_regular_radius(S: FrequencySet, rho_lo, rho_hi) -> Fraction:
    lo, hi = Fraction(rho_lo), Fraction(rho_hi)
    if not (0 < lo < hi < Fraction(1, 2)):
        raise ValueError(f"rho_lo/rho_hi: need 0 < rho_lo < rho_hi < 1/2, got [{lo}, {hi}]")
    if len(S) == 0:
        return lo + (hi - lo) / 2
    a = 100 * len(S)
    tried = 0
    seen = set()
    for rho in _candidates(S, lo, hi):
        if rho in seen:
            continue
        seen.add(rho)
        tried += 1
        if tried > SAFETY_CANDIDATES:
            break
        if rho * (1 + Fraction(1, a)) >= Fraction(1, 2):
            continue
        if is_regular(S, rho).regular:
            return rho
    raise NoRegularRadius(f"no regular radius in [{lo}, {hi}] among {tried} candidates")


def bohr_report(S: FrequencySet, rho) -> dict:
    rho = Fraction(rho)
    B = bohr_enumerate(S, rho)
    reg = is_regular(S, rho) if (len(S) == 0 or rho * (1 + Fraction(1, 100 * len(S))) < Fraction(1, 2)) else None
    return {
        "group": str(S.group),
        "S": [list(xi) for xi in S.freqs],
        "rho": str(rho),
        "cardinality": B.cardinality,
        "regular": None if reg is None else reg.regular,
        "regular_by_convention": len(S) == 0,
        "witness": None if reg is None or reg.witness is None else str(reg.witness),
    }
