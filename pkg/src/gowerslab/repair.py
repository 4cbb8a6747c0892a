"""Repairing almost homomorphisms and trivialising near-coboundaries."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import budget
from .abelian import GroupElement, GroupSpec

COCYCLE_TOL = 1e-10


# -- almost homomorphisms -----------------------------------------------


@dataclass(frozen=True, eq=False)
class AlmostHomTable:
    """phi : G -> H as a table in the enumeration order of G; H is a finite group model."""

    source: GroupSpec
    target: object
    values: tuple

    def __post_init__(self):
        vals = tuple(self.values)
        if len(vals) != self.source.cardinality:
            raise ValueError(f"values: need {self.source.cardinality} entries, got {len(vals)}")
        object.__setattr__(self, "values", vals)

    def __call__(self, x):
        return self.values[self.source.index(x)]


@dataclass(frozen=True, eq=False)
class RepairResult:
    table: AlmostHomTable
    input_defect: float
    defect: float
    disagreements: tuple[GroupElement, ...]

    def to_json(self) -> dict:
        return {
            "input_defect": self.input_defect,
            "defect": self.defect,
            "disagreements": [list(x) for x in self.disagreements],
            "values": [_jsonable(v) for v in self.table.values],
        }


def _jsonable(v):
    return list(v) if isinstance(v, tuple) else v


def _target_tables(model, values):
    elems = list(model.elements())
    pos = {x: i for i, x in enumerate(elems)}
    n = len(elems)
    budget.check(n * n, "target multiplication table")
    mul = np.array([[pos[model.mul(a, b)] for b in elems] for a in elems], dtype=np.int64).reshape(n, n)
    inv = np.array([pos[model.inv(a)] for a in elems], dtype=np.int64)
    try:
        idx = np.array([pos[v] for v in values], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"values: {exc.args[0]!r} is not an element of the target") from None
    return elems, mul, inv, idx


def _defect(src: GroupSpec, mul: np.ndarray, idx: np.ndarray) -> float:
    """Fraction of (g, h) with phi(g + h) != phi(g) phi(h)."""
    n = src.cardinality
    add = src.index_array(src.coords[:, None, :] + src.coords[None, :, :])
    return float(np.mean(idx[add] != mul[idx[:, None], idx[None, :]])) if n else 0.0


def repair_homomorphism(t: AlmostHomTable) -> RepairResult:
    """phi~(g) = mode over a of phi(a)^{-1} phi(a + g), ties to the first target element."""
    src = t.source
    n = src.cardinality
    budget.check(n * n, "repair_homomorphism")
    elems, mul, inv, idx = _target_tables(t.target, t.values)
    add = src.index_array(src.coords[:, None, :] + src.coords[None, :, :])  # add[a, g] = a + g
    quot = mul[inv[idx][:, None], idx[add]]  # quot[a, g] = phi(a)^{-1} phi(a + g)
    counts = np.zeros((n, len(elems)), dtype=np.int64)
    np.add.at(counts, (np.broadcast_to(np.arange(n), (n, n)), quot), 1)
    fixed = np.argmax(counts, axis=1)  # first maximum = lowest enumeration index
    out = AlmostHomTable(src, t.target, tuple(elems[i] for i in fixed))
    dis = tuple(src.element(int(i)) for i in np.flatnonzero(fixed != idx))
    return RepairResult(out, _defect(src, mul, idx), _defect(src, mul, fixed), dis)


# -- cocycles --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CocycleTable:
    """c(h, k) in R^dim for h, k, h + k in E (dense over positions in E)."""

    group: GroupSpec
    E: tuple[GroupElement, ...]
    values: np.ndarray  # (|E|, |E|, dim); entries off the applicable mask are ignored
    dim: int = 1

    def __post_init__(self):
        E = tuple(self.group.check(x) for x in self.E)
        if len(set(E)) != len(E):
            raise ValueError("E: duplicate element")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 2:
            vals = vals[:, :, None]
        if vals.shape != (len(E), len(E), self.dim):
            raise ValueError(f"values: expected shape {(len(E), len(E), self.dim)}, got {vals.shape}")
        vals = np.where(self.mask[:, :, None], vals, 0.0)
        vals.setflags(write=False)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "values", vals)

    @property
    def position(self) -> np.ndarray:
        """position[group index] = position in E, or -1."""
        pos = np.full(self.group.cardinality, -1, dtype=np.int64)
        pos[[self.group.index(x) for x in self.E]] = np.arange(len(self.E))
        return pos

    @property
    def sum_position(self) -> np.ndarray:
        """Position of h + k in E (or -1) for positions h, k."""
        g = self.group
        pts = np.array(self.E, dtype=np.int64).reshape(len(self.E), g.rank)
        return self.position[g.index_array(pts[:, None, :] + pts[None, :, :])]

    @property
    def mask(self) -> np.ndarray:
        return self.sum_position >= 0

    @property
    def density(self) -> float:
        return len(self.E) / self.group.cardinality

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    @classmethod
    def coboundary(cls, group: GroupSpec, E: Sequence, f: np.ndarray, dim: int = 1) -> CocycleTable:
        """c(h, k) = f(h + k) - f(h) - f(k) with f given on E (shape (|E|, dim))."""
        f = np.asarray(f, dtype=float).reshape(len(E), dim)
        tmp = cls(group, tuple(E), np.zeros((len(E), len(E), dim)), dim)
        sp = tmp.sum_position
        vals = np.where((sp >= 0)[:, :, None], f[np.maximum(sp, 0)] - f[:, None, :] - f[None, :, :], 0.0)
        return cls(group, tmp.E, vals, dim)


def verify_cocycle(c: CocycleTable, tol: float = COCYCLE_TOL):
    """c(h,k) + c(h+k,l) = c(h,k+l) + c(k,l) on every applicable triple; (ok, witness)."""
    m = len(c.E)
    budget.check(m**3, "verify_cocycle")
    sp = c.sum_position
    v = c.values
    for h in range(m):
        ks = np.flatnonzero(sp[h] >= 0)
        if ks.size == 0:
            continue
        s = sp[h, ks]  # h + k
        kl = sp[ks]  # k + l, shape (|ks|, m)
        hkl = sp[s]  # (h + k) + l
        ok = (kl >= 0) & (hkl >= 0)
        lhs = v[h, ks][:, None, :] + v[s]
        rhs = v[h][np.maximum(kl, 0)] + v[ks]
        err = np.where(ok, np.max(np.abs(lhs - rhs), axis=2), 0.0)
        bad = np.argwhere(err > tol)
        if bad.size:
            a, l = bad[0]
            return False, (c.E[h], c.E[int(ks[a])], c.E[int(l)])
    return True, None


class ContractionError(RuntimeError):
    def __init__(self, message: str, trace: list):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True, eq=False)
class Trivialization:
    f: np.ndarray  # (|E|, dim), with c ~ f(h+k) - f(h) - f(k)
    residual: float
    iterations: int
    trace: list = field(default_factory=list)
    norm_bound_ok: bool = True
    max_factor: float = 0.0

    def to_json(self) -> dict:
        return {
            "residual": self.residual,
            "iterations": self.iterations,
            "trace": self.trace,
            "norm_bound_ok": self.norm_bound_ok,
            "max_factor": self.max_factor,
            "f": self.f.tolist(),
        }


def _averaged(v: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """f(h) = mean of c(h, k) over the k with (h, k) applicable (0 if there are none)."""
    cnt = mask.sum(axis=1)
    tot = (v * mask[:, :, None]).sum(axis=1)
    return np.where(cnt[:, None] > 0, tot / np.maximum(cnt, 1)[:, None], 0.0)


def _delta(f: np.ndarray, sp: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask[:, :, None], f[np.maximum(sp, 0)] - f[:, None, :] - f[None, :, :], 0.0)


def trivialize_cocycle(c: CocycleTable, tol: float = 1e-8, eps0: float = 0.01, margin: int = 2,
                       slack: float = 0.1, checked: bool = True) -> Trivialization:
    if c.density < 1 - eps0:
        raise ValueError(f"E: density {c.density:.4f} is below 1 - eps0 = {1 - eps0}")
    if checked:
        ok, wit = verify_cocycle(c)
        if not ok:
            raise ValueError(f"c: cocycle equation fails at {wit}")
    sp = c.sum_position
    mask = sp >= 0
    norm0 = c.sup_norm
    F = np.zeros((len(c.E), c.dim))
    cur = c.values.copy()
    trace = []
    it = 0
    limit = (math.ceil(math.log2(norm0 / tol)) if norm0 > tol else 0) + margin
    prev = norm0
    worst = 0.0
    while prev > tol:
        if it >= limit:
            raise ContractionError(f"residual {prev} above tol after {it} iterations", trace)
        f = _averaged(cur, mask)
        cur = cur + _delta(f, sp, mask)
        F = F - f
        it += 1
        now = float(np.max(np.abs(cur))) if cur.size else 0.0
        factor = now / prev
        worst = max(worst, factor)
        trace.append({"iteration": it, "residual": now, "factor": factor})
        if factor > 0.5 + slack:
            raise ContractionError(f"iteration {it} contracted only by {factor:.4f}", trace)
        prev = now
    residual = float(np.max(np.abs(c.values - _delta(F, sp, mask)))) if c.values.size else 0.0
    fnorm = float(np.max(np.abs(F))) if F.size else 0.0
    return Trivialization(F, residual, it, trace, fnorm <= 2 * norm0 + 1e-12, worst)
