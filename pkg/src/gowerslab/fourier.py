"""Fourier analysis on finite abelian groups and the U^2 inverse extractor."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .abelian import Frequency, GroupSpec, e


class InverseViolation(AssertionError):
    """A guarantee that holds unconditionally was observed to fail."""


@dataclass(frozen=True)
class DenseFunction:
    group: GroupSpec
    values: np.ndarray
    bounded: bool = False

    def __post_init__(self):
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=complex).reshape(-1))
        if vals.shape[0] != self.group.cardinality:
            raise ValueError(
                f"values: expected {self.group.cardinality} entries for {self.group}, got {vals.shape[0]}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("values: non-finite entry")
        if self.bounded and vals.size and np.max(np.abs(vals)) > 1 + 1e-12:
            raise ValueError(f"values: not 1-bounded (max modulus {np.max(np.abs(vals))})")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def grid(self) -> np.ndarray:
        return self.values.reshape(self.group.orders or (1,))

    def __call__(self, x) -> complex:
        return complex(self.values[self.group.index(x)])


@dataclass(frozen=True)
class Spectrum:
    group: GroupSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=complex).reshape(-1))
        if vals.shape[0] != self.group.cardinality:
            raise ValueError(f"values: expected {self.group.cardinality} coefficients, got {vals.shape[0]}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __getitem__(self, xi) -> complex:
        return complex(self.values[self.group.index(xi)])


def _naive_axes(grid: np.ndarray, sign: int) -> np.ndarray:
    out = grid.astype(complex)
    for axis, n in enumerate(grid.shape):
        a = np.arange(n)
        w = e(sign * (np.outer(a, a) % n) / n)
        out = np.moveaxis(np.tensordot(w, out, axes=([1], [axis])), 0, axis)
    return out


def transform_grid(grid: np.ndarray, method: str = "fast", workers: int = 1, axes=None) -> np.ndarray:
    """Unnormalized forward transform sum_x f(x) e(-xi.x) over the given axes."""
    if method == "fast":
        return scipy.fft.fftn(grid, axes=axes, workers=workers)
    if method == "naive":
        if axes is not None:
            raise ValueError("naive transform works on whole grids only")
        return _naive_axes(grid, -1)
    raise ValueError(f"method: unknown DFT method {method!r}")


def dft(f: DenseFunction, method: str = "fast", workers: int = 1) -> Spectrum:
    g = f.group
    if method == "fast":
        coeffs = scipy.fft.fftn(f.grid(), workers=workers)
    elif method == "naive":
        coeffs = _naive_axes(f.grid(), -1)
    else:
        raise ValueError(f"method: unknown DFT method {method!r}")
    return Spectrum(g, coeffs.reshape(-1) / g.cardinality)


def idft(s: Spectrum, method: str = "fast", workers: int = 1) -> DenseFunction:
    g = s.group
    grid = s.values.reshape(g.orders or (1,))
    if method == "fast":
        vals = scipy.fft.ifftn(grid, workers=workers) * g.cardinality
    elif method == "naive":
        vals = _naive_axes(grid, 1)
    else:
        raise ValueError(f"method: unknown DFT method {method!r}")
    return DenseFunction(g, vals.reshape(-1))


def argmax_lowest(mags: np.ndarray, rel_tol: float = 1e-12) -> int:
    """Index of the maximum, preferring the lowest index among near-ties."""
    top = float(np.max(mags))
    return int(np.flatnonzero(mags >= top - rel_tol * max(top, 1.0))[0])


def u2_extract(f: DenseFunction, eta: float, checked: bool = True) -> tuple[Frequency, float]:
    if not 0 < eta <= 1:
        raise ValueError(f"eta: must lie in (0, 1], got {eta}")
    if np.max(np.abs(f.values)) > 1 + 1e-12:
        raise ValueError("f: u2_extract needs a 1-bounded function")
    spec = dft(f)
    mags = np.abs(spec.values)
    i = argmax_lowest(mags)
    magnitude = float(mags[i])
    if checked:
        u2 = float(np.sum(mags**4)) ** 0.25
        if u2 >= eta and magnitude < eta**2 - 1e-12:
            raise InverseViolation(
                f"max |f^| = {magnitude} below eta^2 = {eta**2} although ||f||_U2 = {u2} >= eta"
            )
    return f.group.element(i), magnitude
