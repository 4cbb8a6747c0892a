"""Gowers inner products and uniformity norms."""
from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.fft

from . import budget
from .abelian import GroupSpec
from .fourier import DenseFunction

ROW_BLOCK = 2**18  # complex entries per batch; fixed so results never depend on threading


@dataclass(frozen=True)
class GowersTuple:
    """Functions f_omega listed in lexicographic order of omega in {0,1}^d."""

    d: int
    funcs: tuple[DenseFunction, ...]

    def __post_init__(self):
        funcs = tuple(self.funcs)
        if self.d < 0:
            raise ValueError("d: degree must be >= 0")
        if len(funcs) != 2**self.d:
            raise ValueError(f"funcs: need 2^{self.d} = {2**self.d} functions, got {len(funcs)}")
        g = funcs[0].group
        if any(f.group != g for f in funcs):
            raise ValueError("funcs: all functions must live on the same group")
        object.__setattr__(self, "funcs", funcs)

    @property
    def group(self) -> GroupSpec:
        return self.funcs[0].group

    @classmethod
    def diagonal(cls, f: DenseFunction, d: int) -> GowersTuple:
        return cls(d, (f,) * 2**d)


def mult_derivative(f: DenseFunction, h: Sequence[int]) -> DenseFunction:
    g = f.group
    h = g.check(h, "h")
    shifted = f.values[g.translate_indices(h, sign=-1)]
    return DenseFunction(g, f.values * np.conj(shifted))


def _csum(arr: np.ndarray) -> complex:
    arr = np.asarray(arr).reshape(-1)
    return complex(math.fsum(arr.real.tolist()), math.fsum(arr.imag.tolist()))


def _tuples(g: GroupSpec, d: int, block: int):
    """Yield (m, d, rank) coordinate blocks covering G^d in lexicographic order."""
    n = g.cardinality
    total = n**d
    for start in range(0, total, block):
        idx = np.arange(start, min(start + block, total), dtype=np.int64)
        parts = []
        for _ in range(d):
            idx, r = np.divmod(idx, n)
            parts.append(r)
        parts.reverse()
        yield np.stack([g.coords[p] for p in parts], axis=1) if d else np.zeros((len(idx), 0, g.rank), np.int64)


def gowers_inner(t: GowersTuple) -> complex:
    """Literal average over x, h_1..h_d of the cube product (reference route)."""
    g, d = t.group, t.d
    n = g.cardinality
    budget.check(n ** (d + 1) * 2**d, "gowers_inner")
    if d == 0:
        return _csum(t.funcs[0].values) / n
    omegas = list(itertools.product((0, 1), repeat=d))
    block = max(1, ROW_BLOCK // n)
    partial = []
    for hs in _tuples(g, d, block):
        prod = np.ones((hs.shape[0], n), dtype=complex)
        for f, om in zip(t.funcs, omegas):
            shift = np.tensordot(np.asarray(om, dtype=np.int64), hs, axes=([0], [1]))
            idx = g.index_array(g.coords[None, :, :] + shift[:, None, :])
            vals = f.values[idx]
            prod *= np.conj(vals) if sum(om) % 2 else vals
        partial.append(prod.sum(axis=1))
    return _csum(np.concatenate(partial)) / n ** (d + 1)


def _naive_power(f: DenseFunction, d: int) -> float:
    """||f||_{U^d}^{2^d}: direct sum over x, h_1..h_{d-1}; the last direction
    collapses exactly to |E_x a(x)|^2 where a is the (d-1)-cube product."""
    g = f.group
    n = g.cardinality
    budget.check(n**d * 2 ** (d - 1), "gowers_norm naive")
    omegas = list(itertools.product((0, 1), repeat=d - 1))
    block = max(1, ROW_BLOCK // n)
    partial = []
    if d > 1 and n * n <= 2**24:
        add = g.add_table
        total = n ** (d - 1)
        for start in range(0, total, block):
            rest = np.arange(start, min(start + block, total), dtype=np.int64)
            cols = []
            for _ in range(d - 1):
                rest, r = np.divmod(rest, n)
                cols.append(r)
            cols.reverse()
            prod = np.ones((cols[0].size, n), dtype=complex)
            for om in omegas:
                s = np.zeros(cols[0].size, dtype=np.int64)
                for bit, h in zip(om, cols):
                    if bit:
                        s = add[h, s]
                vals = f.values[add[s]]  # f(x + omega.h)
                prod *= np.conj(vals) if sum(om) % 2 else vals
            partial.append(np.abs(prod.sum(axis=1) / n) ** 2)
        return math.fsum(np.concatenate(partial).tolist()) / n ** (d - 1)
    for hs in _tuples(g, d - 1, block):
        prod = np.ones((hs.shape[0], n), dtype=complex)
        for om in omegas:
            if d > 1:
                shift = np.tensordot(np.asarray(om, dtype=np.int64), hs, axes=([0], [1]))
                idx = g.index_array(g.coords[None, :, :] + shift[:, None, :])
                vals = f.values[idx]
            else:
                vals = f.values[None, :]
            prod *= np.conj(vals) if sum(om) % 2 else vals
        partial.append(np.abs(prod.sum(axis=1) / n) ** 2)
    return math.fsum(np.concatenate(partial).tolist()) / n ** (d - 1)


def _power_rows(rows: np.ndarray, g: GroupSpec, d: int) -> np.ndarray:
    """||row||_{U^d}^{2^d} for each row of a (m, |G|) batch."""
    n = g.cardinality
    if d == 1:
        return np.abs(rows.sum(axis=1) / n) ** 2
    if d == 2:
        spec = scipy.fft.fftn(rows.reshape((rows.shape[0],) + (g.orders or (1,))),
                              axes=tuple(range(1, g.rank + 1)) or (1,), workers=1)
        mags = np.abs(spec.reshape(rows.shape[0], -1) / n) ** 2
        return np.sum(mags * mags, axis=1)
    return np.array([_fast_power(r, g, d, threads=1) for r in rows])


def _derivative_block(values: np.ndarray, g: GroupSpec, hcoords: np.ndarray) -> np.ndarray:
    idx = g.index_array(g.coords[None, :, :] - hcoords[:, None, :])
    return values[None, :] * np.conj(values[idx])


def _fast_power(values: np.ndarray, g: GroupSpec, d: int, threads: int = 1) -> float:
    n = g.cardinality
    if d <= 2:
        return float(_power_rows(values[None, :], g, d)[0])
    block = max(1, ROW_BLOCK // n)
    starts = list(range(0, n, block))

    def work(start):
        hc = g.coords[start:start + block]
        return _power_rows(_derivative_block(values, g, hc), g, d - 1)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    return math.fsum(np.concatenate(parts).tolist()) / n


def gowers_power(f: DenseFunction, d: int, mode: str = "fast", threads: int | None = None) -> float:
    """||f||_{U^d}^{2^d}."""
    if d < 1:
        raise ValueError("d: the uniformity norm needs d >= 1")
    if d > 4:
        raise ValueError("d: only d <= 4 is supported")
    if mode == "naive":
        return _naive_power(f, d)
    if mode != "fast":
        raise ValueError(f"mode: expected 'naive' or 'fast', got {mode!r}")
    if threads is None:
        threads = os.cpu_count() or 1
    return _fast_power(f.values, f.group, d, threads=max(1, int(threads)))


def gowers_norm(f: DenseFunction, d: int, mode: str = "fast", threads: int | None = None) -> float:
    p = gowers_power(f, d, mode=mode, threads=threads)
    return max(p, 0.0) ** (1.0 / 2**d)
