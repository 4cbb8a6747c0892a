"""Random shift systems on a finite abelian group and their Folner-box averages.

The box Phi_n uses the first min(2^n, cap) generators e_j with coefficients in
{0..n}; a point h acts by x -> x + sum_j h_j g_j.  Every average over boxes
only sees h through h.g, so exact evaluations push the uniform measure on
Phi_n forward to a measure on G.
"""
from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import mpmath
import numpy as np

from . import budget
from .abelian import GroupElement, GroupSpec, e
from .gowers import GowersTuple

log = logging.getLogger(__name__)

J_CAP = 32
MP_DIGITS = 50


def _rng(seed: int, stream: int = 0) -> np.random.Generator:
    bits = np.random.Philox(seed)
    return np.random.Generator(bits.jumped(stream) if stream else bits)


@dataclass(frozen=True, eq=False)
class ShiftSystem:
    """Shifts g_1, g_2, ... drawn uniformly from G by a Philox stream keyed by ``seed``."""

    group: GroupSpec
    J: int
    seed: int = 0
    cap: int = J_CAP
    shifts: tuple[GroupElement, ...] = field(default=())

    def __post_init__(self):
        if not 0 <= self.J <= self.cap:
            raise ValueError(f"J: need 0 <= J <= {self.cap}, got {self.J}")
        rng = _rng(self.seed)
        g = self.group
        rows = [tuple(int(rng.integers(0, n)) for n in g.orders) for _ in range(self.cap)]
        object.__setattr__(self, "shifts", tuple(rows))

    @property
    def named(self) -> tuple[GroupElement, ...]:
        """The J shifts passed explicitly to sampled functions."""
        return self.shifts[: self.J]

    def act(self, h: Sequence[int], x: Sequence[int]) -> GroupElement:
        """T^h(x) = x + sum_j h_j g_j."""
        g = self.group
        out = g.check(x)
        for hj, gj in zip(h, self.shifts):
            if hj:
                out = g.add(out, g.scale(int(hj), gj))
        return out

    def to_json(self) -> dict:
        return {"group": list(self.group.orders), "J": self.J, "seed": self.seed, "cap": self.cap,
                "rng": "Philox", "shifts": [list(s) for s in self.shifts]}


@dataclass(frozen=True)
class FolnerBox:
    n: int
    cap: int = J_CAP

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n: box index must be >= 1")

    @property
    def generators(self) -> int:
        return min(2**self.n, self.cap)

    @property
    def size(self) -> int:
        return (self.n + 1) ** self.generators

    def points(self):
        budget.check(self.size, "Folner box enumeration")
        return itertools.product(range(self.n + 1), repeat=self.generators)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.integers(0, self.n + 1, size=(count, self.generators))


def pushforward(sys: ShiftSystem, box: FolnerBox) -> np.ndarray:
    """Distribution of h.g on G for h uniform in the box (indexed by element)."""
    g = sys.group
    if box.generators > len(sys.shifts):
        raise ValueError(f"box: needs {box.generators} shifts, the system has {len(sys.shifts)}")
    mu = np.zeros(g.cardinality)
    mu[0] = 1.0
    for gj in sys.shifts[: box.generators]:
        acc = np.zeros_like(mu)
        for a in range(box.n + 1):
            # (mu * delta_{a g_j})(x) = mu(x - a g_j)
            acc += mu[g.translate_indices(g.scale(a, gj), -1)]
        mu = acc / (box.n + 1)
    return mu


def _combine(sys: ShiftSystem, hs: np.ndarray) -> np.ndarray:
    """Element indices of h.g for each row h."""
    g = sys.group
    shifts = np.array(sys.shifts[: hs.shape[1]], dtype=np.int64).reshape(hs.shape[1], g.rank)
    return g.index_array(hs @ shifts)


@dataclass(frozen=True)
class HKEstimate:
    value: complex
    stderr: float
    mode: str
    samples: int

    def to_json(self) -> dict:
        return {"value": [self.value.real, self.value.imag], "stderr": self.stderr, "mode": self.mode,
                "samples": self.samples}


def _cube_value(funcs: GowersTuple, shifts: Sequence[tuple[int, int]]) -> complex:
    """E_x prod_omega C^|omega| f_omega(x - sum_i a_i^{omega_i}), with (a_i^0, a_i^1) as element indices."""
    g = funcs.group
    d = funcs.d
    prod = np.ones(g.cardinality, dtype=complex)
    coords = g.coords
    for k, om in enumerate(itertools.product((0, 1), repeat=d)):
        off = np.zeros(g.rank, dtype=np.int64)
        for bit, (a0, a1) in zip(om, shifts):
            off = off + coords[a1 if bit else a0]
        vals = funcs.funcs[k].values[g.index_array(coords - off[None, :])]
        prod *= np.conj(vals) if sum(om) % 2 else vals
    return complex(np.mean(prod))


def local_hk_estimate(sys: ShiftSystem, funcs: GowersTuple, boxes: Sequence[int],
                      samples: int | None = None, seed: int = 0, cap: int | None = None) -> HKEstimate:
    g = sys.group
    d = funcs.d
    if funcs.group != g:
        raise ValueError("funcs: functions live on a different group")
    if len(boxes) != d:
        raise ValueError(f"boxes: need {d} box sizes, got {len(boxes)}")
    if d == 0:
        return HKEstimate(complex(np.mean(funcs.funcs[0].values)), 0.0, "exact", 1)
    fboxes = [FolnerBox(int(n), sys.cap) for n in boxes]
    limit = budget.work_cap(2**26) if cap is None else cap
    if samples is None:
        mus = [pushforward(sys, b) for b in fboxes]
        supports = [np.flatnonzero(m > 0) for m in mus]
        work = math.prod(s.size**2 for s in supports) * g.cardinality
        if work <= limit:
            total = 0j
            pairs = [list(itertools.product(s, s)) for s in supports]
            for combo in itertools.product(*pairs):
                w = math.prod(mus[i][a0] * mus[i][a1] for i, (a0, a1) in enumerate(combo))
                total += w * _cube_value(funcs, combo)
            return HKEstimate(complex(total), 0.0, "exact", int(work // g.cardinality))
        samples = 4096
    rng = _rng(seed, 1)
    draws = []
    for b in fboxes:
        h0 = _combine(sys, b.sample(rng, samples))
        h1 = _combine(sys, b.sample(rng, samples))
        draws.append((h0, h1))
    vals = np.array([_cube_value(funcs, [(int(h0[s]), int(h1[s])) for h0, h1 in draws]) for s in range(samples)])
    err = float(np.std(vals, ddof=1) / math.sqrt(samples)) if samples > 1 else float("inf")
    return HKEstimate(complex(np.mean(vals)), err, "sampled", samples)


def local_hk_literal(sys: ShiftSystem, funcs: GowersTuple, n: int) -> complex:
    """d = 1 average over h^0, h^1 in Phi_n by direct enumeration of the box."""
    if funcs.d != 1:
        raise ValueError("literal evaluation is only provided for d = 1")
    g = sys.group
    box = FolnerBox(n, sys.cap)
    budget.check(box.size**2 * g.cardinality, "literal Host-Kra average")
    f0, f1 = funcs.funcs
    pts = list(box.points())
    xs = [g.element(i) for i in range(g.cardinality)]
    total = 0j
    for h0 in pts:
        for h1 in pts:
            s = 0j
            for x in xs:
                # T^h f = f o T^{-h}
                y0 = sys.act([-v for v in h0], x)
                y1 = sys.act([-v for v in h1], x)
                s += f0(y0) * np.conj(f1(y1))
            total += s / len(xs)
    return total / len(pts) ** 2


# -- sampling identity -----------------------------------------------------


@dataclass(frozen=True)
class SamplingGap:
    gap: float
    lhs: complex
    rhs: complex
    mode: str
    stderr: float
    direct_gap: float | None = None
    mean_removed: complex = 0j

    def to_json(self) -> dict:
        out = {"gap": self.gap, "lhs": [self.lhs.real, self.lhs.imag], "rhs": [self.rhs.real, self.rhs.imag],
               "mode": self.mode, "stderr": self.stderr,
               "mean_removed": [self.mean_removed.real, self.mean_removed.imag]}
        if self.direct_gap is not None:
            out["direct_gap"] = self.direct_gap
        return out


def _table(sys: ShiftSystem, H: Callable) -> np.ndarray:
    g = sys.group
    n = g.cardinality
    budget.check(n * n, "sampling_gap table")
    named = sys.named
    elems = [g.element(i) for i in range(n)]
    return np.array([[complex(H(a0, a1, named)) for a1 in elems] for a0 in elems]).reshape(n, n)


def sampling_gap(sys: ShiftSystem, H: Callable, n: int, samples: int | None = None,
                 seed: int = 0, checked: bool = True) -> SamplingGap:
    """|E_{h0,h1 in Phi_n} H(h0.g, h1.g, g_1..g_J) - E_{a0,a1 in G} H(a0, a1, g_1..g_J)|."""
    g = sys.group
    box = FolnerBox(n, sys.cap)
    T = _table(sys, H)
    # averaging around T[0, 0] keeps a constant table exactly constant
    rhs = complex(T[0, 0] + (T - T[0, 0]).mean()) if T.size else 0j
    centered = T - rhs  # vanishing marginal mean; the gap is unchanged
    if samples is None:
        # the Fourier route keeps relative precision even when the gap is far below 1e-16
        lhs_c = _fourier_lhs(sys, centered, box)
        direct = None
        if checked:
            mu = pushforward(sys, box)
            direct = abs(complex(mu @ centered @ mu))
            if abs(direct - abs(lhs_c)) > 1e-9:
                raise AssertionError(f"sampling gap routes disagree: {abs(lhs_c)} vs {direct}")
        log.debug("mean-zero reduction removed %s", rhs)
        return SamplingGap(abs(lhs_c), lhs_c + rhs, rhs, "exact", 0.0, direct, rhs)
    rng = _rng(seed, 2)
    a0 = _combine(sys, box.sample(rng, samples))
    a1 = _combine(sys, box.sample(rng, samples))
    raw = T[a0, a1]
    vals = centered[a0, a1]
    err = float(np.std(vals, ddof=1) / math.sqrt(samples)) if samples > 1 else float("inf")
    log.debug("mean-zero reduction: stderr %.3g -> %.3g",
              float(np.std(np.abs(raw), ddof=1) / math.sqrt(samples)) if samples > 1 else float("inf"), err)
    lhs_c = complex(np.mean(vals))
    return SamplingGap(abs(lhs_c), lhs_c + rhs, rhs, "sampled", err, None, rhs)


def _fourier_lhs(sys: ShiftSystem, centered: np.ndarray, box: FolnerBox) -> complex:
    """sum over (xi0, xi1) != 0 of H^(xi0, xi1) chi(xi0) chi(xi1), chi the box characteristic function."""
    g = sys.group
    n = g.cardinality
    shape = g.orders or (1,)
    # H(a0, a1) = sum_xi Hhat(xi) e(xi0.a0 + xi1.a1)
    Hhat = np.fft.fftn(centered.reshape(shape + shape)).reshape(n, n) / (n * n)
    Hhat[0, 0] = 0.0  # vanishing marginal mean, exactly
    L = g.exponent
    chi = np.ones(n, dtype=complex)
    freqs = g.coords
    for gj in sys.shifts[: box.generators]:
        ph = g.pairing_numerators(freqs, np.array([gj]))[:, 0] / L
        chi *= np.mean(e(np.outer(ph, np.arange(box.n + 1))), axis=1)
    return complex(chi @ Hhat @ chi)


# -- Borel-Cantelli sum ----------------------------------------------------


def _exponent(n: int, J: int) -> int:
    return max(2**n - J, 0) // 2


@dataclass(frozen=True)
class BorelCantelli:
    J: int
    n_max: int
    partial: mpmath.mpf
    terms: tuple
    tail_bound: mpmath.mpf
    clamped: int

    @property
    def value(self) -> float:
        return float(self.partial)

    def to_json(self) -> dict:
        return {"J": self.J, "n_max": self.n_max, "partial": mpmath.nstr(self.partial, 30),
                "tail_bound": mpmath.nstr(self.tail_bound, 10), "clamped_terms": self.clamped}


def _tail(J: int, start: int) -> mpmath.mpf:
    """Upper bound for sum_{n >= start} exp(-x_n), x_n = E_n / (n+1)^8."""
    total = mpmath.mpf(0)
    n = start
    while True:
        x = mpmath.mpf(_exponent(n, J)) / (n + 1) ** 8
        x_next = mpmath.mpf(_exponent(n + 1, J)) / (n + 2) ** 8
        x_next2 = mpmath.mpf(_exponent(n + 2, J)) / (n + 3) ** 8
        # past n = 40 the increments of x_n are increasing, so a unit step now bounds all later ones
        if n >= 40 and x_next - x >= 1 and x_next2 - x_next >= x_next - x:
            return total + mpmath.exp(-x) / (1 - mpmath.exp(-1))
        total += mpmath.exp(-x)
        n += 1


def borel_cantelli_partial(J: int, n_max: int) -> BorelCantelli:
    if J < 0 or n_max < 0:
        raise ValueError("J, n_max: must be non-negative")
    with mpmath.workdps(MP_DIGITS):
        terms = []
        for n in range(1, n_max + 1):
            q = 1 - mpmath.mpf(1) / mpmath.mpf(n + 1) ** 8
            terms.append(q ** _exponent(n, J))
        partial = mpmath.fsum(terms)
        tail = _tail(J, n_max + 1)
        clamped = sum(1 for n in range(1, n_max + 1) if _exponent(n, J) == 0)
    return BorelCantelli(J, n_max, partial, tuple(terms), tail, clamped)


# -- reports ---------------------------------------------------------------


def character_difference(p: int) -> Callable:
    """H(a0, a1) = e((a0 - a1)/p) on Z/p."""
    def H(a0, a1, gs):
        return complex(e((a0[0] - a1[0]) / p))
    return H


def gap_trend(group: GroupSpec, H: Callable, J: int, seeds: Sequence[int], ns: Sequence[int],
              cap: int = J_CAP) -> dict:
    table = {}
    for n in ns:
        gaps = [sampling_gap(ShiftSystem(group, J, s, cap), H, n).gap for s in seeds]
        table[n] = {"gaps": gaps, "median": float(np.median(gaps))}
    return table


def simulation_report(group: GroupSpec, J: int, seeds: Sequence[int], ns: Sequence[int],
                      H: Callable | None = None, cap: int = J_CAP, bc_n_max: int = 30) -> dict:
    if H is None:
        if group.rank != 1:
            raise ValueError("group: the default test function needs a cyclic group")
        H = character_difference(group.orders[0])
    trend = gap_trend(group, H, J, seeds, ns, cap)
    bc = borel_cantelli_partial(J, bc_n_max)
    return {
        "group": list(group.orders),
        "J": J,
        "cap": cap,
        "seeds": list(seeds),
        "rng": "Philox",
        "boxes": [{"n": n, "generators": FolnerBox(n, cap).generators} for n in ns],
        "trend": [{"n": n, **trend[n]} for n in ns],
        "borel_cantelli": bc.to_json(),
    }


def trend_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "median_gap"] + [f"seed_{s}" for s in report["seeds"]])
    for row in report["trend"]:
        w.writerow([row["n"], repr(row["median"])] + [repr(v) for v in row["gaps"]])
    return buf.getvalue()
