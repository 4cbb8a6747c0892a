"""Desk-scale U^3 inverse pipeline and the encoding as a degree-2 nilsequence.

Stages: derivative spectra -> locally linear frequency map M -> symmetric
midpoint form B -> local integration phi -> per-x frequency choice and the
exact Bohr-window correlation.  ``encode_nilmanifold`` then turns the global
lift of phi into Heisenberg data (theta_h, Phi_h) and a tent bump.
"""
from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.fft

from . import budget
from .abelian import GroupElement, GroupSpec, e
from .bohr import BohrSet, FrequencySet, NoRegularRadius, bohr_enumerate, find_regular_radius, is_regular
from .fourier import DenseFunction, argmax_lowest, dft
from .gowers import gowers_norm, gowers_power
from .heisenberg import HeisenbergPoint, NilsequenceSpec, PiecewiseLinearBump, nilseq_eval, poly_dim, translate
from .hostkra import HeisenbergFiltration, PolyCheck, check_derivatives
from .lift import (CertificationError, LiftedElement, LiftStructure, LocalBilinearForm, LocalIntegration,
                   build_lift, integrate_local, verify_local_quadratic)
from .quadratic import GlobalQuadraticPhase

log = logging.getLogger(__name__)

ROW_BLOCK = 2**20  # complex entries per batched transform


class PreconditionError(ValueError):
    pass


class AsymmetryError(PreconditionError):
    def __init__(self, pair, asymmetry: Fraction):
        super().__init__(
            f"||Mx.z - Mz.x|| = {asymmetry} >= 1/10 at (x, z) = {pair}; shrink rho and retry"
        )
        self.pair = pair
        self.asymmetry = asymmetry


class EncodingError(AssertionError):
    pass


def _check_bounded(f: DenseFunction) -> None:
    if f.values.size and np.max(np.abs(f.values)) > 1 + 1e-12:
        raise PreconditionError("f: needs a 1-bounded function")


# -- stage 1: derivative spectra -----------------------------------------


@dataclass(frozen=True, eq=False)
class FrequencyMap:
    """xi_h = argmax |(Delta_h f)^|, with weight |(Delta_h f)^(xi_h)|^2, for every h."""

    group: GroupSpec
    xi_index: np.ndarray
    weights: np.ndarray

    def freq(self, h) -> GroupElement:
        return self.group.element(int(self.xi_index[self.group.index(h)]))

    def weight(self, h) -> float:
        return float(self.weights[self.group.index(h)])

    def to_json(self) -> list:
        g = self.group
        return [{"h": list(g.element(i)), "xi": list(g.element(int(j))), "weight": float(w)}
                for i, (j, w) in enumerate(zip(self.xi_index, self.weights))]


def derivative_spectrum(f: DenseFunction, checked: bool = True, workers: int = 1) -> FrequencyMap:
    _check_bounded(f)
    g = f.group
    n = g.cardinality
    budget.check(n * n, "derivative_spectrum")
    vals = f.values
    xi = np.zeros(n, dtype=np.int64)
    wts = np.zeros(n)
    shape = g.orders or (1,)
    step = max(1, ROW_BLOCK // max(n, 1))
    for start in range(0, n, step):
        hs = np.arange(start, min(n, start + step))
        # row h: f(x) conj f(x - h)
        if n * n <= 2**26:
            rows = vals[None, :] * np.conj(vals[g.sub_table[hs]])
        else:
            rows = np.stack([vals * np.conj(vals[g.translate_indices(g.element(int(h)), -1)]) for h in hs])
        spec = scipy.fft.fftn(rows.reshape((hs.size,) + shape), axes=tuple(range(1, len(shape) + 1)),
                              workers=workers).reshape(hs.size, n) / n
        mags = np.abs(spec)
        for k, h in enumerate(hs):
            j = argmax_lowest(mags[k])
            xi[h] = j
            wts[h] = mags[k, j] ** 2
    if checked:
        u3_8 = gowers_power(f, 3)
        if wts.sum() < u3_8 * n - 1e-9 * n:
            raise AssertionError(f"sum of weights {wts.sum()} below ||f||_U3^8 |G| = {u3_8 * n}")
    xi.setflags(write=False)
    wts.setflags(write=False)
    return FrequencyMap(g, xi, wts)


# -- stage 2: locally linear fit ------------------------------------------


@dataclass(frozen=True, eq=False)
class LocallyLinearMap:
    """M(h) = sum_k u_k(h) m_k on Bohr(S, 2 rho), u = lift coordinates of h."""

    S: FrequencySet
    rho: Fraction
    lift: LiftStructure
    domain: BohrSet
    images: tuple[GroupElement, ...]
    table: np.ndarray  # frequency index of M(h) for each domain member
    agreement: float  # weighted agreement with the frequency map
    count_agreement: float
    mode: str
    candidates: int
    floor: float

    @property
    def flagged(self) -> bool:
        return self.agreement < self.floor

    def __call__(self, h) -> GroupElement:
        g = self.S.group
        pos = self.domain.members.index(g.check(h))
        return g.element(int(self.table[pos]))

    def report(self) -> dict:
        return {
            "rho": str(self.rho),
            "images": [list(m) for m in self.images],
            "agreement": self.agreement,
            "count_agreement": self.count_agreement,
            "mode": self.mode,
            "candidates": self.candidates,
            "floor": self.floor,
            "flagged": self.flagged,
        }


def _image_options(g: GroupSpec, order: int) -> np.ndarray:
    """Frequencies m with order * m = 0 (all of G-hat for order 0)."""
    coords = g.coords
    if order == 0:
        return coords
    keep = np.all(np.mod(order * coords, np.asarray(g.orders or (1,), dtype=np.int64)) == 0, axis=1)
    return coords[keep]


def fit_locally_linear(fm: FrequencyMap, S: FrequencySet, rho, search_budget: int = 2**22,
                       floor: float = 0.5, greedy_rounds: int = 4,
                       lift: LiftStructure | None = None) -> LocallyLinearMap:
    g = fm.group
    if S.group != g:
        raise ValueError("S: frequency set lives on a different group")
    rho = Fraction(rho)
    if not 0 < rho <= Fraction(1, 8):
        raise ValueError(f"rho: need 0 < rho <= 1/8, got {rho}")
    if len(S) and not is_regular(S, rho).regular:
        raise PreconditionError(f"rho: Bohr(S, {rho}) is not regular")
    lift = build_lift(S) if lift is None else lift
    domain = bohr_enumerate(S, 2 * rho)
    idx = domain.indices()
    U = lift.lift_coordinates(domain.members)  # (n_B, D)
    target = fm.xi_index[idx]
    w = fm.weights[idx]
    total = float(w.sum())
    orders = np.asarray(g.orders or (1,), dtype=np.int64)
    opts = [_image_options(g, d) for d in lift.presentation.orders]
    D = len(opts)
    nb = idx.size

    def scores(fixed: np.ndarray, k: int) -> np.ndarray:
        """Weighted agreement for every option of generator k, others as in ``fixed``."""
        base = U @ fixed - np.outer(U[:, k], fixed[k]) if D else np.zeros((nb, g.rank), dtype=np.int64)
        cand = base[None, :, :] + U[None, :, k, None] * opts[k][:, None, :]
        hit = g.index_array(np.mod(cand, orders)) == target[None, :]
        return hit.astype(float) @ w

    count = math.prod(len(o) for o in opts) if D else 1
    best = np.zeros((D, g.rank), dtype=np.int64)
    if D == 0:
        mode, evaluated = "trivial", 1
    elif count * nb <= search_budget:
        mode, evaluated = "exhaustive", count
        best_score = -1.0
        heads = [range(len(o)) for o in opts[:-1]]
        for choice in itertools.product(*heads):
            fixed = np.zeros((D, g.rank), dtype=np.int64)
            for k, c in enumerate(choice):
                fixed[k] = opts[k][c]
            sc = scores(fixed, D - 1)
            j = int(np.argmax(sc))
            if sc[j] > best_score + 1e-12:
                best_score = float(sc[j])
                fixed[D - 1] = opts[D - 1][j]
                best = fixed
    else:
        mode, evaluated = "greedy", 0
        best_score = -1.0
        for _ in range(greedy_rounds):
            improved = False
            for k in range(D):
                sc = scores(best, k)
                evaluated += len(sc)
                j = int(np.argmax(sc))
                if sc[j] > best_score + 1e-12:
                    best_score = float(sc[j])
                    best = best.copy()
                    best[k] = opts[k][j]
                    improved = True
            if not improved:
                break
    table = g.index_array(np.mod(U @ best, orders)) if D else np.zeros(nb, dtype=np.int64)
    hit = table == target
    agreement = float(w[hit].sum() / total) if total > 0 else 0.0
    m = LocallyLinearMap(S, rho, lift, domain, tuple(tuple(int(v) for v in r) for r in best), table,
                         agreement, float(hit.mean()) if nb else 0.0, mode, evaluated, floor)
    witness = _linearity_witness(m)
    if witness is not None:
        raise AssertionError(f"fitted map is not locally linear at {witness}")
    return m


def _linearity_witness(m: LocallyLinearMap):
    """First (x, y) with x, y, x+y in the domain and M(x+y) != M(x) + M(y)."""
    g = m.S.group
    idx = m.domain.indices()
    budget.check(idx.size**2, "local linearity check")
    pos = np.full(g.cardinality, -1, dtype=np.int64)
    pos[idx] = np.arange(idx.size)
    sums = g.index_array(g.coords[idx][:, None, :] + g.coords[idx][None, :, :])
    ps = pos[sums]
    Mc = g.coords[m.table]
    ok = ps >= 0
    lhs = m.table[np.where(ok, ps, 0)]
    rhs = g.index_array(Mc[:, None, :] + Mc[None, :, :])
    bad = ok & (lhs != rhs)
    if bad.any():
        a, b = np.argwhere(bad)[0]
        return (m.domain.members[a], m.domain.members[b])
    return None


# -- stage 3: symmetrization ------------------------------------------------


@dataclass(frozen=True, eq=False)
class Symmetrization:
    form: LocalBilinearForm
    max_delta: Fraction

    def report(self) -> dict:
        return {"rho": str(self.form.domain.rho), "max_delta": str(self.max_delta),
                "domain_size": self.form.domain.cardinality}


def symmetrize(M: LocallyLinearMap, S: FrequencySet | None = None, rho=None) -> Symmetrization:
    """Midpoint B with Mx.z = B + Delta, Mz.x = B - Delta on Bohr(S, rho)."""
    S = M.S if S is None else S
    rho = M.rho if rho is None else Fraction(rho)
    if S != M.S or rho > 2 * M.rho:
        raise ValueError("rho: the working Bohr set must sit inside the domain of M")
    g = S.group
    L = g.exponent
    work = bohr_enumerate(S, rho)
    pos = {x: i for i, x in enumerate(M.domain.members)}
    freqs = np.array([g.coords[M.table[pos[x]]] for x in work.members], dtype=np.int64).reshape(-1, g.rank)
    zs = np.array(work.members, dtype=np.int64).reshape(-1, g.rank)
    P = g.pairing_numerators(freqs, zs)  # P[x, z] = Mx.z * L
    d = np.mod(P - P.T, L)
    d = np.where(2 * d > L, d - L, d)
    worst = np.abs(d)
    if worst.size and 10 * int(worst.max()) >= L:
        a, b = np.unravel_index(int(np.argmax(worst)), worst.shape)
        raise AsymmetryError((work.members[a], work.members[b]), Fraction(int(worst[a, b]), L))
    num = 2 * P - d  # over 2L
    form = LocalBilinearForm(work, num, 2 * L)
    if not form.symmetric:
        raise AssertionError("midpoint form is not symmetric")
    max_delta = Fraction(int(worst.max()) if worst.size else 0, 2 * L)
    return Symmetrization(form, max_delta)


# -- stage 4/5: integration and correlation ----------------------------------


@dataclass(frozen=True)
class InverseConfig:
    agreement_floor: float = 0.5
    correlation_floor: float | None = None  # default eta^3
    shrink: Fraction = Fraction(1, 8)
    rho_range: tuple[Fraction, Fraction] = (Fraction(1, 16), Fraction(1, 8))
    max_candidates: int = 4
    search_budget: int = 2**22
    greedy_rounds: int = 4
    min_window: int = 2
    frequency_sets: tuple[tuple[GroupElement, ...], ...] | None = None
    checked: bool = True
    workers: int = 1

    def floor_for(self, eta: float) -> float:
        return eta**3 if self.correlation_floor is None else self.correlation_floor

    def to_json(self) -> dict:
        return {
            "agreement_floor": self.agreement_floor,
            "correlation_floor": self.correlation_floor,
            "shrink": str(self.shrink),
            "rho_range": [str(v) for v in self.rho_range],
            "max_candidates": self.max_candidates,
            "search_budget": self.search_budget,
            "greedy_rounds": self.greedy_rounds,
            "min_window": self.min_window,
        }


def window_correlations(f: DenseFunction, window: Sequence[GroupElement], phi: dict, workers: int = 1):
    """For every x, the best xi and |E_{h in W} f(x+h) e(-phi(h) - xi.h)|.

    One DFT of h -> f(x+h) e(-phi(h)) 1_W(h) per x gives all xi at once.
    """
    g = f.group
    n = g.cardinality
    W = [tuple(h) for h in window]
    widx = np.array([g.index(h) for h in W], dtype=np.int64)
    twist = np.array([e(-float(phi[h])) for h in W]) if W else np.zeros(0, dtype=complex)
    shape = g.orders or (1,)
    xi = np.full(n, -1, dtype=np.int64)
    mags = np.zeros(n)
    step = max(1, ROW_BLOCK // max(n, 1))
    for start in range(0, n, step):
        xs = np.arange(start, min(n, start + step))
        rows = np.zeros((xs.size, n), dtype=complex)
        shifted = g.index_array(g.coords[xs][:, None, :] + g.coords[widx][None, :, :])
        rows[:, widx] = f.values[shifted] * twist[None, :]
        spec = scipy.fft.fftn(rows.reshape((xs.size,) + shape), axes=tuple(range(1, len(shape) + 1)),
                              workers=workers).reshape(xs.size, n) / len(W)
        a = np.abs(spec)
        for k, x in enumerate(xs):
            j = argmax_lowest(a[k])
            mags[x] = a[k, j]
            xi[x] = j if a[k, j] > 1e-12 else -1
    return xi, mags


def recompute_correlation(f: DenseFunction, window: Sequence[GroupElement], phi: dict,
                          xi: Sequence[GroupElement | None]) -> float:
    """E_x |E_{h in W} f(x+h) e(-phi(h) - xi(x).h)| by direct summation with exact phases."""
    g = f.group
    L = g.exponent
    W = [tuple(h) for h in window]
    hs = np.array(W, dtype=np.int64).reshape(-1, g.rank)
    den = math.lcm(L, *(Fraction(phi[h]).denominator for h in W))
    phin = np.array([int(Fraction(phi[h]) * den) % den for h in W], dtype=object)
    total = 0.0
    for i, x in enumerate(g.coords):
        fx = f.values[g.index_array(x[None, :] + hs)]
        z = xi[i]
        lin = g.pairing_numerators(np.array([z if z is not None else g.zero()]), hs)[0].astype(object)
        ph = [float(Fraction(int((-(p + q * (den // L))) % den), den)) for p, q in zip(phin, lin)]
        total += abs(math.fsum((fx * e(np.array(ph))).real) + 1j * math.fsum((fx * e(np.array(ph))).imag)) / len(W)
    return total / g.cardinality


@dataclass(frozen=True, eq=False)
class InverseReport:
    f: DenseFunction
    eta: float
    S: FrequencySet
    rho: Fraction
    rho_prime: Fraction
    regular: bool
    window: tuple[GroupElement, ...]
    phi: dict
    xi: tuple[GroupElement | None, ...]
    inner: np.ndarray
    correlation: float
    below_threshold: bool
    lift: LiftStructure | None
    integration: LocalIntegration | None
    fit: LocallyLinearMap | None
    symmetrization: Symmetrization | None
    stage: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def phase(self) -> GlobalQuadraticPhase | None:
        return None if self.integration is None else self.integration.phase

    def to_json(self, timings: bool = False) -> dict:
        g = self.f.group
        diag = {k: v for k, v in self.diagnostics.items() if timings or k != "timings"}
        return {
            "group": list(g.orders),
            "eta": self.eta,
            "stage": self.stage,
            "bohr": {"S": [list(s) for s in self.S.freqs], "rho": str(self.rho),
                     "rho_prime": str(self.rho_prime), "regular": self.regular,
                     "window_size": len(self.window)},
            "phi": [[list(h), str(self.phi[h])] for h in self.window],
            "xi": [None if z is None else list(z) for z in self.xi],
            "correlation": self.correlation,
            "below_threshold": self.below_threshold,
            "fit": None if self.fit is None else self.fit.report(),
            "symmetrization": None if self.symmetrization is None else self.symmetrization.report(),
            "integration": None if self.integration is None else self.integration.report(),
            "lift": None if self.lift is None else self.lift.report(),
            "diagnostics": diag,
        }


def _candidate_sets(f: DenseFunction, fm: FrequencyMap, config: InverseConfig):
    g = f.group
    if config.frequency_sets is not None:
        yield from (tuple(tuple(x) for x in s) for s in config.frequency_sets)
        return
    yield ()
    seen = set()
    count = 0
    units = [tuple(1 if i == j else 0 for j in range(g.rank)) for i in range(g.rank)]
    mags = np.abs(dft(f).values)
    top = [g.element(int(i)) for i in np.argsort(-mags, kind="stable") if int(i) != 0]
    for xi in units + top:
        if count >= config.max_candidates:
            break
        if xi in seen or not any(xi):
            continue
        seen.add(xi)
        count += 1
        yield (xi,)


def _stage(f, fm, S, config, diag):
    """One pass at a fixed S: fit, symmetrize (shrinking on failure), integrate, correlate."""
    lo, hi = config.rho_range
    lift = build_lift(S)
    rho = hi if not len(S) else find_regular_radius(S, lo, hi)
    fit = fit_locally_linear(fm, S, rho, config.search_budget, config.agreement_floor,
                             config.greedy_rounds, lift)
    sym_rho = rho
    while True:
        try:
            sym = symmetrize(fit, S, sym_rho)
            break
        except AsymmetryError as exc:
            if not len(S):
                raise
            diag.setdefault("asymmetry_retries", []).append(
                {"rho": str(sym_rho), "asymmetry": str(exc.asymmetry), "pair": [list(p) for p in exc.pair]})
            new_hi = sym_rho * config.shrink
            sym_rho = find_regular_radius(S, new_hi / 2, new_hi)
            if bohr_enumerate(S, sym_rho).cardinality < config.min_window:
                raise
    integ = integrate_local(sym.form, lift)
    window = tuple(x for x in sym.form.domain.members if x in integ.phi)
    if len(window) < config.min_window and len(window) < f.group.cardinality:
        raise CertificationError(f"window of size {len(window)} is below min_window")
    ok, wit = verify_local_quadratic(integ.phi, window, f.group)
    if not ok:
        raise AssertionError(f"integrated phase is not locally quadratic at {wit}")
    return rho, lift, fit, sym, integ, window


def extract_phase(f: DenseFunction, eta: float, config: InverseConfig | None = None) -> InverseReport:
    config = InverseConfig() if config is None else config
    if not 0 < eta <= 1:
        raise ValueError(f"eta: must lie in (0, 1], got {eta}")
    _check_bounded(f)
    g = f.group
    timings = {}
    t0 = time.perf_counter()
    u3 = gowers_norm(f, 3)
    if u3 < eta:
        raise PreconditionError(f"f: ||f||_U3 = {u3:.6g} is below eta = {eta}")
    fm = derivative_spectrum(f, checked=config.checked, workers=config.workers)
    timings["spectrum"] = time.perf_counter() - t0
    floor = config.floor_for(eta)
    diag = {"u3": u3, "thresholds": {"correlation_floor": floor, **config.to_json()}, "attempts": []}
    best = None
    for S_freqs in _candidate_sets(f, fm, config):
        S = FrequencySet(g, S_freqs)
        attempt = {"S": [list(s) for s in S_freqs]}
        t1 = time.perf_counter()
        try:
            rho, lift, fit, sym, integ, window = _stage(f, fm, S, config, attempt)
        except (AsymmetryError, CertificationError, NoRegularRadius, budget.BudgetExceeded) as exc:
            attempt["error"] = f"{type(exc).__name__}: {exc}"
            diag["attempts"].append(attempt)
            continue
        xi_idx, mags = window_correlations(f, window, integ.phi, config.workers)
        corr = float(np.mean(mags))
        attempt.update({"correlation": corr, "agreement": fit.agreement})
        timings.setdefault("attempts", []).append(time.perf_counter() - t1)
        diag["attempts"].append(attempt)
        cand = (corr, S, rho, integ, window, xi_idx, mags, lift, fit, sym)
        if best is None or corr > best[0] + 1e-12:
            best = cand
        if corr >= floor:
            break
    timings["search"] = time.perf_counter() - t0 - timings["spectrum"]
    if best is None:
        # every stage failed: fall back to the zero phase on all of G (a pure U^2 step)
        S = FrequencySet(g, ())
        window = tuple(g.element(i) for i in range(g.cardinality))
        phi = {x: Fraction(0) for x in window}
        xi_idx, mags = window_correlations(f, window, phi, config.workers)
        corr = float(np.mean(mags))
        xi = tuple(None if j < 0 else g.element(int(j)) for j in xi_idx)
        diag["timings"] = timings
        return InverseReport(f, eta, S, config.rho_range[1], config.rho_range[1], True, window, phi, xi, mags,
                             corr, corr < floor, None, None, None, None, "linear-fallback", diag)
    corr, S, rho, integ, window, xi_idx, mags, lift, fit, sym = best
    xi = tuple(None if j < 0 else g.element(int(j)) for j in xi_idx)
    rp = integ.rho_prime
    regular = True if not len(S) else (rp * (1 + Fraction(1, 100 * len(S))) < Fraction(1, 2)
                                       and is_regular(S, rp).regular)
    if config.checked:
        again = recompute_correlation(f, window, integ.phi, xi)
        if abs(again - corr) > 1e-10:
            raise AssertionError(f"correlation {corr} does not recompute ({again})")
    diag["timings"] = timings
    return InverseReport(f, eta, S, rho, rp, regular, window, dict(integ.phi), xi, mags, corr, corr < floor,
                         lift, integ, fit, sym, "quadratic", diag)


# -- nilmanifold encoding -----------------------------------------------------


def _taylor(P, base: Sequence[int], steps: Sequence[Sequence[int]]) -> list[Fraction]:
    """Binomial-basis coefficients of n -> P(base + sum_j n_j steps_j), a quadratic in n."""
    s = len(steps)

    def at(n):
        u = [int(b) for b in base]
        for nj, st in zip(n, steps):
            if nj:
                u = [a + nj * int(v) for a, v in zip(u, st)]
        return P(u)

    zero = at([0] * s)
    unit = [at([1 if k == j else 0 for k in range(s)]) for j in range(s)]
    two = [at([2 if k == j else 0 for k in range(s)]) for j in range(s)]
    lin = [unit[j] - zero for j in range(s)]
    diag = [two[j] - 2 * unit[j] + zero for j in range(s)]
    mixed = []
    for i, j in itertools.combinations(range(s), 2):
        n = [0] * s
        n[i] = n[j] = 1
        mixed.append(at(n) - unit[i] - unit[j] + zero)
    return [zero] + lin + diag + mixed


def _mod1(v: Fraction) -> Fraction:
    return v - math.floor(v)


@dataclass(frozen=True, eq=False)
class Encoding:
    spec: NilsequenceSpec
    phase: GlobalQuadraticPhase
    lift: LiftStructure
    correlation: float
    normalized: float
    window_correlation: float
    smoothing_loss: float
    identity_error: float
    polynomial: PolyCheck


def _heis_steps(lift: LiftStructure):
    return [lift.identity_coordinates(j) for j in range(lift.dim)]


def encode_nilmanifold(report: InverseReport, samples: int = 200, seed: int = 0) -> Encoding:
    if report.lift is None or report.phase is None:
        raise PreconditionError("report: no global lift of phi (the pipeline fell back to a linear phase)")
    f, lift = report.f, report.lift
    g = f.group
    n = g.cardinality
    N = lift.dim
    # pigeonhole: the x0 with the best window average, and its frequency absorbed linearly
    x0i = int(np.argmax(report.inner))
    x0 = g.element(x0i)
    xi0 = report.xi[x0i] or g.zero()
    r = len(lift.kernel_orders)
    gens = list(lift.kernel_generators) + list(lift.generators)
    L = g.exponent
    extra = [Fraction(int(g.pairing_numerators(np.array([xi0]), np.array([gen]))[0, 0]), L) for gen in gens]
    phase = report.phase.with_linear(extra)
    rho = report.rho_prime
    bump = PiecewiseLinearBump.tent(rho)
    steps = _heis_steps(lift)

    thetas, coeffs, coords = [], [], []
    for i in range(n):
        h = g.element(i)
        el = lift.lift(h)
        u = lift.coordinates(el)
        c = [_mod1(v) for v in _taylor(phase, u, steps)]
        thetas.append(tuple(el.theta))
        coeffs.append(tuple(c))
        coords.append(u)

    rng = np.random.Generator(np.random.Philox(seed))
    # well-definedness: (theta + m, Phi(h, theta + m)) equals (theta, Phi(h, theta)) mod H(Z^N)
    for _ in range(min(samples, 8 * n) if N else 0):
        i = int(rng.integers(0, n))
        m = [int(v) for v in rng.integers(-3, 4, size=N)]
        base = list(coords[i])
        for mj, st in zip(m, steps):
            base = [a + mj * int(v) for a, v in zip(base, st)]
        c2 = np.array(_taylor(phase, base, steps), dtype=object)
        back = translate(c2, np.array([-v for v in m], dtype=object))
        diff = back - np.array(coeffs[i], dtype=object)
        if any(Fraction(v).denominator != 1 for v in diff):
            raise EncodingError(f"g is not well defined at h = {g.element(i)}, shift {m}")

    poly = _polynomial_check(phase, lift, steps, samples, seed)
    if not poly.ok:
        raise EncodingError(f"lifted g fails the polynomial criterion at {poly.witness}")

    meta = {"S": [list(s) for s in lift.S.freqs], "rho": str(rho), "x0": list(x0), "xi0": list(xi0)}
    spec = NilsequenceSpec(N, g.orders, bump, tuple(thetas), tuple(coeffs), tuple(x0), meta)

    # the evaluation identity F(g(h)) = sum_{theta} bump(theta) e(phi~(h, theta))
    worst = 0.0
    Fg = np.zeros(n, dtype=complex)
    for i in range(n):
        Fg[i] = nilseq_eval(spec, g.element(i))
        side = _lifted_sum(phase, lift, bump, g.element(i), thetas[i])
        worst = max(worst, abs(Fg[i] - side))
    if worst > 1e-9:
        raise EncodingError(f"evaluation identity fails by {worst}")

    shifted = f.values[g.translate_indices(x0, 1)]
    corr = abs(complex(np.mean(shifted * np.conj(Fg))))
    W = report.window
    window_corr = float(report.inner[x0i])
    loss = sum(1 - bump.profile_exact(lift.lift(h).norm) for h in W) / Fraction(len(W))
    normalized = corr * n / len(W)
    if normalized < window_corr - float(loss) - 1e-9:
        raise EncodingError(f"smoothed correlation {normalized} below {window_corr} - loss {float(loss)}")
    spec.meta.update({"correlation": corr, "normalized_correlation": normalized,
                      "window_correlation": window_corr, "smoothing_loss": float(loss),
                      "identity_error": worst})
    return Encoding(spec, phase, lift, corr, normalized, window_corr, float(loss), worst, poly)


def _lifted_sum(phase, lift, bump, h, theta0) -> complex:
    """sum over theta in theta0 + Z^N with bump(theta) != 0 of bump(theta) e(phase(h, theta))."""
    R = bump.support
    ranges = [range(math.floor(-R - t), math.ceil(R - t) + 1) for t in theta0]
    total = 0j
    for m in itertools.product(*ranges):
        theta = tuple(t + k for t, k in zip(theta0, m))
        b = bump.profile_exact(max((abs(v) for v in theta), default=Fraction(0)))
        if b:
            u = lift.coordinates(LiftedElement(tuple(h), theta))
            total += float(b) * e(float(phase(u)))
    return total


def _polynomial_check(phase, lift, steps, samples: int, seed: int) -> PolyCheck:
    """Sampled depth-3 check of n -> (theta(n), Psi(n)) on the free cover Z^D of G_S."""
    r = len(lift.kernel_orders)
    D = r + lift.dim
    N = lift.dim

    def lifted(u):
        return phase.lifted(u)

    def ghat(m):
        theta = [Fraction(0)] * N
        for mi, w in zip(m[r:], lift.basis):
            theta = [a + mi * b for a, b in zip(theta, w)]
        c = _taylor(lifted, m, steps)
        return HeisenbergPoint(np.array(theta, dtype=object), np.array(c, dtype=object))

    rng = np.random.Generator(np.random.Philox(seed + 1))
    draws = rng.integers(-4, 5, size=(samples, 4, D))
    stream = ((tuple(int(v) for v in d[0]), tuple(tuple(int(v) for v in row) for row in d[1:])) for d in draws)
    target = HeisenbergFiltration(N)
    witness, count = check_derivatives(ghat, target, stream, lambda a, b: tuple(x - y for x, y in zip(a, b)), 3)
    return PolyCheck(witness is None, witness, "sampled", count)


def correlate(f: DenseFunction, spec: NilsequenceSpec, x0=None, checked: bool = True,
              delta: float = 1e-3) -> complex:
    """E_h f(x0 + h) conj(F(g(h)))."""
    g = f.group
    if tuple(spec.group_orders) != g.orders:
        raise ValueError("spec: nilsequence lives on a different group")
    x0 = tuple(spec.x0) if x0 is None else g.check(x0)
    if not x0:
        x0 = g.zero()
    Fg = np.array([nilseq_eval(spec, g.element(i)) for i in range(g.cardinality)])
    shifted = f.values[g.translate_indices(x0, 1)]
    corr = complex(np.mean(shifted * np.conj(Fg)))
    if checked and abs(corr) >= delta:
        u3 = gowers_norm(f, 3)
        log.info("correlation %.6g with a Lipschitz %.6g nilsequence; ||f||_U3 = %.6g",
                 abs(corr), spec.bump.lipschitz, u3)
        if not u3 > 0:
            raise AssertionError("nonzero nilsequence correlation with ||f||_U3 = 0")
    return corr
