"""The nilmanifold H(R^N)/H(Z^N), H(R^N) = R^N semidirect Poly_{<=2}(R^N -> R).

Polynomials are stored in the binomial basis
    [1, n_1..n_N, binom(n_1,2)..binom(n_N,2), n_i n_j (i<j, lexicographic)],
so integer-valued polynomials on Z^N are exactly the integer coefficient
vectors.  Arrays may be float (the default) or object arrays of Fractions.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np


def poly_dim(N: int) -> int:
    return 1 + N + N * (N + 1) // 2


@lru_cache(maxsize=None)
def _pairs(N: int) -> tuple[tuple[int, int], ...]:
    return tuple(itertools.combinations(range(N), 2))


def _floor(a: np.ndarray) -> np.ndarray:
    if a.dtype == object:
        return np.array([math.floor(v) for v in a], dtype=object)
    return np.floor(a)


def _binom2(y):
    if isinstance(y, (int, np.integer, Fraction)):
        return Fraction(y) * (y - 1) / 2  # stays exact
    return y * (y - 1) / 2


def quadratic_matrix(c: np.ndarray, N: int) -> np.ndarray:
    """Symmetric Q with Q_ii = binomial coefficient, Q_ij = mixed coefficient."""
    Q = np.zeros((N, N), dtype=c.dtype)
    for i in range(N):
        Q[i, i] = c[1 + N + i]
    for k, (i, j) in enumerate(_pairs(N)):
        Q[i, j] = Q[j, i] = c[1 + 2 * N + k]
    return Q


def translate(c: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Binomial coefficients of n -> phi(n + y)."""
    N = y.shape[0]
    Q = quadratic_matrix(c, N)
    lin = c[1:1 + N]
    out = c.copy()
    out[0] = c[0] + np.dot(lin, y) + sum((Q[i, i] * _binom2(y[i]) for i in range(N)), 0 * c[0])
    for i, j in _pairs(N):
        out[0] = out[0] + Q[i, j] * y[i] * y[j]
    for i in range(N):
        cross = sum((Q[i, j] * y[j] for j in range(N) if j != i), 0 * c[0])
        out[1 + i] = lin[i] + Q[i, i] * y[i] + cross
    return out


def poly_eval(c: np.ndarray, n: Sequence) -> complex | float:
    N = len(n)
    n = np.asarray(n, dtype=c.dtype)
    val = c[0] + np.dot(c[1:1 + N], n)
    for i in range(N):
        val = val + c[1 + N + i] * _binom2(n[i])
    for k, (i, j) in enumerate(_pairs(N)):
        val = val + c[1 + 2 * N + k] * n[i] * n[j]
    return val


@dataclass(frozen=True, eq=False)
class HeisenbergPoint:
    x: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x)
        c = np.asarray(self.c)
        if x.dtype != object:
            x = x.astype(float)
        if c.dtype != object:
            c = c.astype(float)
        x = x.reshape(-1)
        c = c.reshape(-1)
        if c.shape[0] != poly_dim(x.shape[0]):
            raise ValueError(f"c: expected {poly_dim(x.shape[0])} binomial coefficients for N = {x.shape[0]}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "c", c)

    @property
    def N(self) -> int:
        return self.x.shape[0]

    @classmethod
    def identity(cls, N: int) -> HeisenbergPoint:
        return cls(np.zeros(N), np.zeros(poly_dim(N)))

    def coords(self) -> np.ndarray:
        return np.concatenate([self.x, self.c])

    def __mul__(self, other: HeisenbergPoint) -> HeisenbergPoint:
        return heis_mul(self, other)

    def __repr__(self) -> str:
        return f"HeisenbergPoint(x={self.x.tolist()}, c={self.c.tolist()})"


def heis_mul(p: HeisenbergPoint, q: HeisenbergPoint) -> HeisenbergPoint:
    if p.N != q.N:
        raise ValueError(f"dimension mismatch: N = {p.N} vs {q.N}")
    return HeisenbergPoint(p.x + q.x, translate(p.c, q.x) + q.c)


def heis_inv(p: HeisenbergPoint) -> HeisenbergPoint:
    return HeisenbergPoint(-p.x, -translate(p.c, -p.x))


def heis_commutator(p: HeisenbergPoint, q: HeisenbergPoint) -> HeisenbergPoint:
    return heis_mul(heis_mul(heis_mul(p, q), heis_inv(p)), heis_inv(q))


def heis_reduce(p: HeisenbergPoint) -> HeisenbergPoint:
    """Representative p * lambda with x in [0,1)^N and coefficients in [0,1)."""
    m = -_floor(p.x)
    shifted = translate(p.c, m)
    return HeisenbergPoint(p.x + m, shifted - _floor(shifted))


def reducing_element(p: HeisenbergPoint) -> HeisenbergPoint:
    """The lattice element lambda with heis_reduce(p) = p * lambda."""
    m = -_floor(p.x)
    shifted = translate(p.c, m)
    return HeisenbergPoint(m, -_floor(shifted))


def in_level(p: HeisenbergPoint, i: int, tol: float = 1e-9) -> bool:
    """Membership in H_i of the degree-2 prefiltration."""
    N = p.N
    if i <= 0:
        return True
    quad = p.c[1 + N:]
    if i == 1:
        return bool(np.all(np.abs(quad.astype(float)) <= tol))
    if i == 2:
        return bool(np.all(np.abs(p.x.astype(float)) <= tol) and np.all(np.abs(p.c[1:].astype(float)) <= tol))
    return bool(np.all(np.abs(p.coords().astype(float)) <= tol))


def lattice_sup_distance(p: HeisenbergPoint, q: HeisenbergPoint) -> float:
    """Sup distance between reduced coordinates, measured on the torus."""
    a = heis_reduce(p).coords().astype(float)
    b = heis_reduce(q).coords().astype(float)
    d = np.abs(a - b) % 1.0
    return float(np.max(np.minimum(d, 1 - d))) if d.size else 0.0


# -- the nilsequence pair (g, F) -------------------------------------------


@dataclass(frozen=True)
class PiecewiseLinearBump:
    """theta -> profile(||theta||_inf), linear between knots (r_k, v_k), 0 beyond the last."""

    knots: tuple[tuple[Fraction, Fraction], ...]

    def __post_init__(self):
        knots = tuple((Fraction(r), Fraction(v)) for r, v in self.knots)
        if not knots or knots[0][0] != 0:
            raise ValueError("knots: the first knot must sit at radius 0")
        if any(b[0] <= a[0] for a, b in zip(knots, knots[1:])):
            raise ValueError("knots: radii must be strictly increasing")
        if knots[-1][1] != 0:
            raise ValueError("knots: the profile must vanish at the last knot")
        object.__setattr__(self, "knots", knots)

    @classmethod
    def tent(cls, rho, scale=None) -> PiecewiseLinearBump:
        rho = Fraction(rho)
        scale = rho / 8 if scale is None else Fraction(scale)
        return cls(((Fraction(0), Fraction(1)), (rho - scale, Fraction(1)), (rho, Fraction(0))))

    @property
    def support(self) -> Fraction:
        return self.knots[-1][0]

    @property
    def lipschitz(self) -> float:
        return max(abs(float((b[1] - a[1]) / (b[0] - a[0]))) for a, b in zip(self.knots, self.knots[1:]))

    def profile(self, r: float) -> float:
        rs = [float(k[0]) for k in self.knots]
        vs = [float(k[1]) for k in self.knots]
        if r >= rs[-1]:
            return 0.0
        return float(np.interp(r, rs, vs))

    def profile_exact(self, r: Fraction) -> Fraction:
        r = Fraction(r)
        if r >= self.support:
            return Fraction(0)
        for (r0, v0), (r1, v1) in zip(self.knots, self.knots[1:]):
            if r0 <= r <= r1:
                return v0 + (v1 - v0) * (r - r0) / (r1 - r0)
        return Fraction(0)

    def __call__(self, theta) -> float:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        r = float(np.max(np.abs(theta))) if theta.size else 0.0
        return self.profile(r)

    def to_json(self) -> list:
        return [[str(r), str(v)] for r, v in self.knots]


def F_eval(bump: PiecewiseLinearBump, p: HeisenbergPoint) -> complex:
    """F(theta, psi) = sum_n bump(theta + n) e(psi(n)); any representative works."""
    x = p.x.astype(float)
    R = float(bump.support)
    ranges = [range(math.floor(-R - xi), math.ceil(R - xi) + 1) for xi in x]
    total = 0j
    c = p.c.astype(float)
    for n in itertools.product(*ranges):
        w = bump(x + np.asarray(n, dtype=float))
        if w:
            total += w * np.exp(2j * np.pi * float(poly_eval(c, np.asarray(n, dtype=float))))
    return complex(total)


@dataclass(frozen=True, eq=False)
class NilsequenceSpec:
    """Per-element data (theta_h, Phi_h) with g(h) = (theta_h, Phi_h) mod H(Z^N)."""

    N: int
    group_orders: tuple[int, ...]
    bump: PiecewiseLinearBump
    thetas: tuple[tuple[Fraction, ...], ...]
    coeffs: tuple[tuple[Fraction, ...], ...]
    x0: tuple[int, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = math.prod(self.group_orders)
        if len(self.thetas) != n or len(self.coeffs) != n:
            raise ValueError(f"thetas/coeffs: need one entry per group element ({n})")
        for t, c in zip(self.thetas, self.coeffs):
            if len(t) != self.N or len(c) != poly_dim(self.N):
                raise ValueError("thetas/coeffs: entry has the wrong dimension")

    def point(self, i: int, exact: bool = False) -> HeisenbergPoint:
        if exact:
            return HeisenbergPoint(np.array(self.thetas[i], dtype=object), np.array(self.coeffs[i], dtype=object))
        return HeisenbergPoint(np.array([float(v) for v in self.thetas[i]]),
                               np.array([float(v) for v in self.coeffs[i]]))

    def to_json(self) -> dict:
        return {
            "N": self.N,
            "group": list(self.group_orders),
            "bump": self.bump.to_json(),
            "x0": list(self.x0),
            "theta": [[str(v) for v in t] for t in self.thetas],
            "coeffs": [[str(v) for v in c] for c in self.coeffs],
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, data: dict) -> NilsequenceSpec:
        try:
            return cls(
                N=int(data["N"]),
                group_orders=tuple(int(v) for v in data["group"]),
                bump=PiecewiseLinearBump(tuple((Fraction(r), Fraction(v)) for r, v in data["bump"])),
                thetas=tuple(tuple(Fraction(v) for v in t) for t in data["theta"]),
                coeffs=tuple(tuple(Fraction(v) for v in c) for c in data["coeffs"]),
                x0=tuple(int(v) for v in data.get("x0", [])),
                meta=dict(data.get("meta", {})),
            )
        except KeyError as exc:
            raise ValueError(f"nilsequence spec: missing field {exc.args[0]!r}") from None

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> NilsequenceSpec:
        return cls.from_json(json.loads(Path(path).read_text()))


def nilseq_eval(spec: NilsequenceSpec, x: Sequence[int]) -> complex:
    orders = spec.group_orders
    if len(x) != len(orders):
        raise ValueError(f"x: expected {len(orders)} coordinates")
    idx = 0
    for v, n in zip(x, orders):
        if not 0 <= int(v) < n:
            raise ValueError(f"x: coordinate {v} out of range for Z/{n}")
        idx = idx * n + int(v)
    p = heis_reduce(spec.point(idx, exact=True))
    return F_eval(spec.bump, HeisenbergPoint(p.x.astype(float), p.c.astype(float)))
