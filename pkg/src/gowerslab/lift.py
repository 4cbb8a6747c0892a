"""The lifted group G_S, globalisation of locally bilinear forms and local integration.

G_S = {(x, theta) in G x R^S : theta_xi = xi.x mod 1}.  Writing Gamma for the
projection of G_S to R^S, we pick a reduced basis w_1..w_s of Gamma with
direction weights N_i, elements v_i = (g_i, w_i) of G_S and a cyclic
decomposition of K = {y : (y, 0) in G_S}.  Every element of G_S is then
(y, 0) + sum_i n_i v_i for unique y in K and n in Z^s, which identifies G_S
with K x Z^s (an FGGroup with orders (d_1..d_r, 0..0)).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import budget
from .abelian import GroupElement, GroupSpec, TorusValue, character_kernel
from .bohr import BohrSet, FrequencySet, bohr_enumerate
from .lattice import cyclic_decomposition, decomposition_table, lattice_basis, lll_reduce, rational_inverse
from .quadratic import FGGroup, GlobalBilinearForm, GlobalQuadraticPhase, integrate_global

MAX_FREQUENCIES = 6


class NotLocallyBilinear(ValueError):
    def __init__(self, witness):
        super().__init__(f"form is not locally bilinear; witness (x1, x2, y) = {witness}")
        self.witness = witness


class CertificationError(RuntimeError):
    pass


def _sup(v: Sequence[Fraction]) -> Fraction:
    return max((abs(Fraction(a)) for a in v), default=Fraction(0))


@dataclass(frozen=True)
class LiftedElement:
    x: GroupElement
    theta: tuple[Fraction, ...]

    @property
    def norm(self) -> Fraction:
        return _sup(self.theta)


@dataclass(frozen=True, eq=False)
class LiftStructure:
    S: FrequencySet
    kernel: tuple[GroupElement, ...]
    kernel_generators: tuple[GroupElement, ...]
    kernel_orders: tuple[int, ...]
    lattice: tuple[tuple[Fraction, ...], ...]  # HNF basis of Gamma (rows)
    basis: tuple[tuple[Fraction, ...], ...]  # reduced, sorted w_i (rows)
    weights: tuple[Fraction, ...]  # N_i at unit scale, non-increasing
    generators: tuple[GroupElement, ...]  # g_i with v_i = (g_i, w_i)
    sandwich: Fraction  # c with B(ct) & Gamma inside the box (-tN, tN).w

    @property
    def group(self) -> GroupSpec:
        return self.S.group

    @property
    def dim(self) -> int:
        return len(self.S)

    @cached_property
    def presentation(self) -> FGGroup:
        return FGGroup(self.kernel_orders + (0,) * self.dim)

    @cached_property
    def _kernel_table(self) -> dict:
        return decomposition_table(self.group, list(self.kernel_generators), list(self.kernel_orders))

    @cached_property
    def _to_n(self) -> list[list[Fraction]]:
        """Matrix M with n = M theta."""
        if not self.dim:
            return []
        wt = [list(col) for col in zip(*self.basis)]
        return rational_inverse(wt)

    def cutoff(self, rho) -> int:
        """Number j of directions with rho * N_i > 1 (the N_i are sorted)."""
        rho = Fraction(rho)
        return sum(1 for n in self.weights if rho * n > 1)

    def lift(self, x: Sequence[int]) -> LiftedElement:
        """The centered lift (x, theta) with every theta_xi in (-1/2, 1/2]."""
        x = self.group.check(x)
        return LiftedElement(x, self.S.lifted_pairings(x))

    def is_member(self, el: LiftedElement) -> bool:
        base = self.S.lifted_pairings(el.x)
        return all((Fraction(t) - b).denominator == 1 for t, b in zip(el.theta, base))

    def coordinates(self, el: LiftedElement) -> tuple[int, ...]:
        """(t_1..t_r, n_1..n_s) with el = sum t_k (kappa_k, 0) + sum n_i v_i."""
        if not self.is_member(el):
            raise ValueError(f"{el} is not an element of G_S")
        g = self.group
        n = []
        for row in self._to_n:
            v = sum((a * Fraction(t) for a, t in zip(row, el.theta)), Fraction(0))
            if v.denominator != 1:
                raise ArithmeticError("lattice coordinates are not integral")
            n.append(int(v))
        y = el.x
        for ni, gi in zip(n, self.generators):
            y = g.sub(y, g.scale(ni, gi))
        try:
            t = self._kernel_table[y]
        except KeyError:
            raise ArithmeticError(f"residual {y} is not in K") from None
        return tuple(t) + tuple(n)

    def element(self, u: Sequence[int]) -> LiftedElement:
        """Inverse of ``coordinates``."""
        g = self.group
        r = len(self.kernel_orders)
        x = g.zero()
        for tk, kap in zip(u[:r], self.kernel_generators):
            x = g.add(x, g.scale(int(tk), kap))
        theta = [Fraction(0)] * self.dim
        for ni, gi, wi in zip(u[r:], self.generators, self.basis):
            x = g.add(x, g.scale(int(ni), gi))
            theta = [a + int(ni) * b for a, b in zip(theta, wi)]
        return LiftedElement(x, tuple(theta))

    def identity_coordinates(self, j: int) -> tuple[int, ...]:
        """Coordinates of (0, e_j), the unit vector of Z^S sitting in G_S."""
        theta = tuple(Fraction(1 if i == j else 0) for i in range(self.dim))
        return self.coordinates(LiftedElement(self.group.zero(), theta))

    def lift_coordinates(self, elements: Iterable[Sequence[int]]) -> np.ndarray:
        """Coordinates of the centered lifts of the given elements, as rows."""
        rows = [self.coordinates(self.lift(x)) for x in elements]
        width = len(self.kernel_orders) + self.dim
        return np.array(rows, dtype=np.int64).reshape(len(rows), width)

    def lattice_points(self, t) -> list[tuple[Fraction, ...]]:
        """All theta in Gamma with ||theta|| < t, by exhaustive search."""
        t = Fraction(t)
        bounds = [math.floor(t * sum(abs(a) for a in row)) + 1 for row in self._to_n]
        out = []
        for n in itertools.product(*(range(-b, b + 1) for b in bounds)):
            theta = tuple(sum((ni * w[k] for ni, w in zip(n, self.basis)), Fraction(0)) for k in range(self.dim))
            if _sup(theta) < t:
                out.append(theta)
        return out

    def box_points(self, t) -> list[tuple[Fraction, ...]]:
        """The generalized box (-tN, tN).w of the reduced basis."""
        t = Fraction(t)
        ranges = []
        for nw in self.weights:
            m = t * nw
            top = math.ceil(m) - 1
            ranges.append(range(-top, top + 1))
        out = []
        for n in itertools.product(*ranges):
            out.append(tuple(sum((ni * w[k] for ni, w in zip(n, self.basis)), Fraction(0)) for k in range(self.dim)))
        return out

    def verify_sandwich(self, t) -> bool:
        """Check B(c t) & Gamma  <=  (-tN, tN).w  <=  B(t) & Gamma exactly."""
        t = Fraction(t)
        box = set(self.box_points(t))
        inner = self.lattice_points(self.sandwich * t)
        return all(p in box for p in inner) and all(_sup(p) < t for p in box)

    def report(self) -> dict:
        return {
            "group": str(self.group),
            "S": [list(xi) for xi in self.S.freqs],
            "kernel_size": len(self.kernel),
            "kernel_generators": [list(k) for k in self.kernel_generators],
            "kernel_orders": list(self.kernel_orders),
            "lattice_basis": [[str(v) for v in row] for row in self.lattice],
            "reduced_basis": [[str(v) for v in row] for row in self.basis],
            "weights": [str(n) for n in self.weights],
            "generators": [list(gi) for gi in self.generators],
            "sandwich_constant": str(self.sandwich),
        }


def build_lift(S: FrequencySet) -> LiftStructure:
    g = S.group
    s = len(S)
    if s > MAX_FREQUENCIES:
        raise ValueError(f"S: at most {MAX_FREQUENCIES} frequencies are supported, got {s}")
    kernel = tuple(character_kernel(S.freqs, g))
    kgens, kords = cyclic_decomposition(g, kernel)
    if s == 0:
        return LiftStructure(S, kernel, tuple(kgens), tuple(kords), (), (), (), (), Fraction(1))
    L = g.exponent
    rows = [[L if i == j else 0 for j in range(s)] for i in range(s)]
    for i, n in enumerate(g.orders):
        rows.append([(xi[i] * (L // n)) % L for xi in S.freqs])
    hnf = lattice_basis(rows)
    red = lll_reduce(hnf)
    basis = []
    for r in red:
        lead = next(v for v in r if v)
        sign = 1 if lead > 0 else -1
        basis.append(tuple(Fraction(sign * v, L) for v in r))
    raw = [1 / (s * _sup(w)) for w in basis]
    spread = max(sum(raw[i] * abs(basis[i][k]) for i in range(s)) for k in range(s))
    weights = [n / spread for n in raw]
    order = sorted(range(s), key=lambda i: -weights[i])
    basis = [basis[i] for i in order]
    weights = [weights[i] for i in order]
    to_n = rational_inverse([list(col) for col in zip(*basis)])
    worst = max(sum(abs(a) for a in to_n[i]) / weights[i] for i in range(s))
    sandwich = 1 / worst
    # g_i: any x whose pairing vector is w_i mod Z^s
    num = g.pairing_numerators(np.asarray(S.freqs), g.coords).T  # (|G|, s)
    gens = []
    for w in basis:
        target = np.array([int((v * L) % L) for v in w], dtype=np.int64)
        hit = np.flatnonzero(np.all(num == target, axis=1))
        if hit.size == 0:
            raise ArithmeticError(f"basis vector {w} is not the lift of any element")
        gens.append(g.element(int(hit[0])))
    lattice = tuple(tuple(Fraction(v, L) for v in r) for r in hnf)
    return LiftStructure(S, kernel, tuple(kgens), tuple(kords), lattice, tuple(basis),
                         tuple(weights), tuple(gens), sandwich)


# -- local forms ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LocalBilinearForm:
    """B on Bohr(S, rho) x Bohr(S, rho), stored as numerators over ``den``."""

    domain: BohrSet
    num: np.ndarray
    den: int = 1
    torus: bool = True

    def __post_init__(self):
        num = np.array(self.num, dtype=np.int64)
        n = self.domain.cardinality
        if num.shape != (n, n):
            raise ValueError(f"num: expected a {n}x{n} table over the Bohr set, got {num.shape}")
        if self.den < 1:
            raise ValueError("den: must be positive")
        if self.torus:
            num = np.mod(num, self.den)
        num.setflags(write=False)
        object.__setattr__(self, "num", num)

    @classmethod
    def from_function(cls, domain: BohrSet, fn: Callable, torus: bool = True) -> LocalBilinearForm:
        vals = [[Fraction(fn(x, y)) for y in domain.members] for x in domain.members]
        den = math.lcm(1, *(v.denominator for row in vals for v in row))
        num = [[int(v * den) for v in row] for row in vals]
        return cls(domain, np.array(num, dtype=np.int64).reshape(len(vals), len(vals)), den, torus)

    @cached_property
    def position(self) -> np.ndarray:
        """position[group index] = row of that element in the table, or -1."""
        g = self.domain.group
        pos = np.full(g.cardinality, -1, dtype=np.int64)
        idx = self.domain.indices()
        pos[idx] = np.arange(idx.size)
        return pos

    @cached_property
    def member_indices(self) -> np.ndarray:
        return self.domain.indices()

    def __call__(self, x, y) -> Fraction:
        g = self.domain.group
        a, b = self.position[g.index(x)], self.position[g.index(y)]
        if a < 0 or b < 0:
            raise KeyError(f"({x}, {y}) is outside the domain")
        return Fraction(int(self.num[a, b]), self.den)

    @property
    def symmetric(self) -> bool:
        return bool(np.array_equal(self.num, self.num.T))

    def _eq(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        d = a - b
        return (np.mod(d, self.den) == 0) if self.torus else (d == 0)

    def bilinearity_witness(self):
        """First (x1, x2, y) with B(x1+x2, y) != B(x1, y) + B(x2, y), or None."""
        g = self.domain.group
        idx = self.member_indices
        budget.check(idx.size**3, "bilinearity check")
        sums = g.index_array(g.coords[idx][:, None, :] + g.coords[idx][None, :, :])
        pos = self.position[sums]
        for a in range(idx.size):
            ok = pos[a] >= 0
            bs = np.flatnonzero(ok)
            if bs.size == 0:
                continue
            lhs = self.num[pos[a, bs], :]
            rhs = self.num[a][None, :] + self.num[bs, :]
            bad = ~self._eq(lhs, rhs)
            if bad.any():
                i, c = np.argwhere(bad)[0]
                m = self.domain.members
                return (m[a], m[bs[i]], m[c])
        return None


@dataclass(frozen=True, eq=False)
class GlobalizedForm:
    form: GlobalBilinearForm
    lift: LiftStructure
    rho: Fraction
    cutoff: int
    r0: Fraction
    floor: Fraction  # sandwich constant times rho

    def certified_region(self, members: Sequence[GroupElement]) -> list[GroupElement]:
        """The members with ||x||_S < r0: every pair there agrees with the local form."""
        return [tuple(x) for x in members if self.lift.lift(x).norm < self.r0]

    def report(self) -> dict:
        return {
            "rho": str(self.rho),
            "cutoff_j": self.cutoff,
            "r0": str(self.r0),
            "certified_floor": str(self.floor),
            "beta": [[str(v) for v in row] for row in self.form.matrix],
            "orders": list(self.form.group.orders),
        }


def _form_values(form: GlobalBilinearForm, U: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, int]:
    """Numerators (over a common denominator) of form(U_a, V_b) for all row pairs."""
    mat = form.matrix
    den = math.lcm(1, *(v.denominator for row in mat for v in row))
    beta = np.array([[int(v * den) for v in row] for row in mat], dtype=object).reshape(len(mat), len(mat))
    vals = U.astype(object) @ beta @ V.astype(object).T if len(mat) else np.zeros((U.shape[0], V.shape[0]), dtype=object)
    if form.torus:
        vals = np.mod(vals, den)
    return vals, den


def globalize_bilinear(B: LocalBilinearForm, lift: LiftStructure) -> GlobalizedForm:
    if B.domain.S != lift.S:
        raise ValueError("domain: the Bohr set and the lift use different frequency sets")
    rho = Fraction(B.domain.rho)
    if not 0 < rho < Fraction(1, 2):
        raise ValueError("rho: need 0 < rho < 1/2")
    witness = B.bilinearity_witness()
    if witness is not None:
        raise NotLocallyBilinear(witness)
    g = lift.group
    j = lift.cutoff(rho)
    gens_k = list(lift.kernel_generators)
    gens_v = [gi if i < j else None for i, gi in enumerate(lift.generators)]
    for i in range(j):
        if lift.S.lifted_pairings(lift.generators[i]) != lift.basis[i]:
            raise CertificationError(f"generator v_{i + 1} is not inside the lift region")
    elts = gens_k + gens_v
    n = len(elts)
    mat = [[Fraction(0)] * n for _ in range(n)]
    for a, x in enumerate(elts):
        for b, y in enumerate(elts):
            if x is not None and y is not None:
                mat[a][b] = B(x, y)
    form = GlobalBilinearForm(lift.presentation, tuple(map(tuple, mat)), B.torus)

    members = B.domain.members
    U = lift.lift_coordinates(members)
    vals, den = _form_values(form, U, U)
    M = math.lcm(den, B.den)
    lhs = vals * (M // den)
    rhs = B.num.astype(object) * (M // B.den)
    diff = lhs - rhs
    bad = (np.mod(diff, M) != 0) if B.torus else (diff != 0)
    norms = np.array([lift.lift(x).norm for x in members], dtype=object)
    if bad.any():
        ia, ib = np.nonzero(bad)
        r0 = min(max(norms[a], norms[b]) for a, b in zip(ia, ib))
    else:
        r0 = rho
    floor = lift.sandwich * rho
    if r0 < floor:
        raise CertificationError(f"agreement radius {r0} is below the certified floor {floor}")
    if r0 <= 0:
        raise CertificationError("no agreement radius could be certified")
    return GlobalizedForm(form, lift, rho, j, Fraction(r0), floor)


# -- local quadratic phases ----------------------------------------------


def _as_numerators(phi: Mapping | Callable, region: Sequence[GroupElement], g: GroupSpec):
    vals = [phi[x] if isinstance(phi, Mapping) else phi(x) for x in region]
    vals = [Fraction(v.value) if isinstance(v, TorusValue) else Fraction(v) for v in vals]
    den = math.lcm(1, *(Fraction(v).denominator for v in vals))
    table = np.zeros(g.cardinality, dtype=np.int64)
    mask = np.zeros(g.cardinality, dtype=bool)
    for x, v in zip(region, vals):
        i = g.index(x)
        table[i] = int(Fraction(v) * den) % den
        mask[i] = True
    return table, mask, den


def _region_list(region) -> list[GroupElement]:
    if isinstance(region, BohrSet):
        return list(region.members)
    return [tuple(x) for x in region]


def vanishing_derivatives(phi, region, g: GroupSpec, order: int):
    """Check that every applicable order-th difference of phi vanishes mod 1.

    Returns (True, None) or (False, (x, h_1, ..., h_order)).
    """
    pts = _region_list(region)
    table, mask, den = _as_numerators(phi, pts, g)
    idx = np.array([g.index(x) for x in pts], dtype=np.int64)
    m = idx.size
    if m == 0:
        return True, None
    budget.check(m ** (order + 1), "vanishing derivative check")
    coords = g.coords
    omegas = list(itertools.product((0, 1), repeat=order))
    for xi in idx:
        # choose x - h_i = a_i in the region for every direction
        grids = np.meshgrid(*([idx] * order), indexing="ij")
        a = [gr.reshape(-1) for gr in grids]
        x = coords[xi]
        h = [x[None, :] - coords[ai] for ai in a]
        ok = np.ones(a[0].size, dtype=bool)
        total = np.zeros(a[0].size, dtype=np.int64)
        for om in omegas:
            shift = np.zeros_like(h[0])
            for bit, hv in zip(om, h):
                if bit:
                    shift = shift + hv
            p = g.index_array(x[None, :] - shift)
            ok &= mask[p]
            sign = -1 if sum(om) % 2 else 1
            total = total + sign * table[p]
        bad = ok & (np.mod(total, den) != 0)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            return False, (tuple(int(v) for v in x),) + tuple(
                g.reduce(hv[k].tolist()) for hv in h)
    return True, None


def verify_local_quadratic(phi, region, g: GroupSpec | None = None):
    if g is None:
        if not isinstance(region, BohrSet):
            raise ValueError("g: needed when the region is a plain element list")
        g = region.group
    return vanishing_derivatives(phi, region, g, 3)


def verify_local_linear(phi, region, g: GroupSpec | None = None):
    if g is None:
        g = region.group
    return vanishing_derivatives(phi, region, g, 2)


@dataclass(frozen=True, eq=False)
class LocalIntegration:
    rho_prime: Fraction
    phi: dict  # element -> Fraction on Bohr(S, rho_prime)
    phase: GlobalQuadraticPhase
    globalized: GlobalizedForm
    floor: Fraction

    def report(self) -> dict:
        return {
            "rho_prime": str(self.rho_prime),
            "floor": str(self.floor),
            "phase": self.phase.report(),
            "globalized": self.globalized.report(),
        }


def _cocycle_failures(B: LocalBilinearForm, phi_num, den, lift, members, norms):
    """Pairs (x, y) in Bohr(rho/2) where phi(x+y) != phi(x) + phi(y) + B(x, y)."""
    g = lift.group
    rho = B.domain.rho
    half = [i for i, nv in enumerate(norms) if nv < rho / 2]
    bad_bound = None
    M = math.lcm(den, B.den)
    for a in half:
        for b in half:
            s = g.add(members[a], members[b])
            lhs = phi_num[s] * (M // den)
            rhs = (phi_num[members[a]] + phi_num[members[b]]) * (M // den) + int(B.num[a, b]) * (M // B.den)
            if (lhs - rhs) % M:
                cand = 2 * max(norms[a], norms[b])
                bad_bound = cand if bad_bound is None else min(bad_bound, cand)
    return bad_bound


def integrate_local(B: LocalBilinearForm, lift: LiftStructure) -> LocalIntegration:
    if not B.symmetric:
        raise ValueError("B: integrate_local needs a symmetric form")
    glob = globalize_bilinear(B, lift)
    phase = integrate_global(glob.form)
    members = B.domain.members
    U = lift.lift_coordinates(members)
    full = {x: phase(tuple(int(v) for v in u)) for x, u in zip(members, U)}
    den = math.lcm(1, *(v.denominator for v in full.values()))
    phi_num = {x: int(v * den) for x, v in full.items()}
    norms = [lift.lift(x).norm for x in members]
    rho = Fraction(B.domain.rho)
    bound = _cocycle_failures(B, phi_num, den, lift, members, norms)
    top = rho if bound is None else min(rho, bound)
    L = lift.group.exponent
    candidates = sorted({top} | {Fraction(v, L) for v in lift.S.sorted_numerators if 0 < Fraction(v, L) < top}
                        | {Fraction(2 * v, L) for v in lift.S.sorted_numerators if 0 < Fraction(2 * v, L) < top},
                        reverse=True)
    for rp in candidates:
        region = [x for x, nv in zip(members, norms) if nv < rp]
        ok, _ = verify_local_quadratic(full, region, lift.group)
        if not ok:
            continue
        # the lift agrees with phi on every centered lift of norm < rp
        for x in region:
            el = lift.lift(x)
            if phase(lift.coordinates(el)) != full[x]:
                raise CertificationError(f"lift disagrees with phi at {x}")
        phi = {x: full[x] for x in region}
        return LocalIntegration(rp, phi, phase, glob, min(rho, 2 * glob.floor))
    raise CertificationError("no radius passed the local quadratic check")
