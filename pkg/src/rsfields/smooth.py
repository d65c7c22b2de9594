"""Smooth test functions with exact mixed partial derivatives.

A :class:`SmoothFunction` is a finite sum of separable terms
``c * prod_i prod_k phi_ik(x_i)`` built from exponentials, sines and
monomials. Such sums are closed under products and mixed partials, which
makes them convenient integrands for checking calculus identities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .indexkit import as_index_set

# A primitive univariate factor: (kind, a, b)
#   "exp":  exp(a*x + b)
#   "sin":  sin(a*x + b)
#   "pow":  x**a  (a a non-negative integer, b unused)
Prim = tuple[str, float, float]


def _eval_prim(p: Prim, x: np.ndarray) -> np.ndarray:
    kind, a, b = p
    if kind == "exp":
        return np.exp(a * x + b)
    if kind == "sin":
        return np.sin(a * x + b)
    if kind == "pow":
        return x ** int(a) if a else np.ones_like(x)
    raise ValueError(f"unknown factor kind {kind!r}")


def _diff_prim(p: Prim) -> tuple[float, Prim]:
    """Derivative of a primitive as ``coef * prim``."""
    kind, a, b = p
    if kind == "exp":
        return a, p
    if kind == "sin":
        return a, ("sin", a, b + np.pi / 2)
    if kind == "pow":
        k = int(a)
        return (float(k), ("pow", k - 1, 0.0)) if k else (0.0, ("pow", 0, 0.0))
    raise ValueError(f"unknown factor kind {kind!r}")


@dataclass(frozen=True)
class Term:
    coef: float
    factors: tuple[tuple[Prim, ...], ...]  # one tuple of primitives per axis

    def __call__(self, x: np.ndarray) -> np.ndarray:
        out = np.full(x.shape[:-1], self.coef, dtype=float)
        for i, prims in enumerate(self.factors):
            for p in prims:
                out = out * _eval_prim(p, x[..., i])
        return out

    def diff(self, axis: int) -> list["Term"]:
        out = []
        prims = self.factors[axis]
        for k, p in enumerate(prims):
            c, dp = _diff_prim(p)
            if c == 0.0:
                continue
            new_axis = prims[:k] + (dp,) + prims[k + 1:]
            out.append(Term(self.coef * c, self.factors[:axis] + (new_axis,) + self.factors[axis + 1:]))
        return out


class SmoothFunction:
    """Sum of separable terms in ``N`` variables; callable on ``(..., N)`` arrays."""

    def __init__(self, N: int, terms: Iterable[Term] = (), name: str = ""):
        self.N = int(N)
        self.terms = tuple(t for t in terms if t.coef != 0.0)
        for t in self.terms:
            if len(t.factors) != self.N:
                raise ValueError("term dimension mismatch")
        self.name = name

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.N:
            raise ValueError(f"expected points with {self.N} coordinates")
        out = np.zeros(x.shape[:-1])
        for t in self.terms:
            out = out + t(x)
        return out

    def partial(self, v) -> "SmoothFunction":
        """Mixed partial derivative, once in each coordinate of ``v`` (1-based)."""
        v = as_index_set(v, self.N)
        terms = list(self.terms)
        for axis in v.axes:
            terms = [d for t in terms for d in t.diff(axis)]
        return SmoothFunction(self.N, terms, f"d{''.join(map(str, v.members))}[{self.name}]")

    def __add__(self, other: "SmoothFunction") -> "SmoothFunction":
        return SmoothFunction(self.N, self.terms + other.terms, f"({self.name}+{other.name})")

    def __mul__(self, other) -> "SmoothFunction":
        if np.isscalar(other):
            return SmoothFunction(self.N, [Term(t.coef * other, t.factors) for t in self.terms], self.name)
        terms = [
            Term(a.coef * b.coef, tuple(fa + fb for fa, fb in zip(a.factors, b.factors)))
            for a in self.terms
            for b in other.terms
        ]
        return SmoothFunction(self.N, terms, f"({self.name}*{other.name})")

    __rmul__ = __mul__

    def __neg__(self) -> "SmoothFunction":
        return self * -1.0

    def __repr__(self) -> str:
        return f"SmoothFunction(N={self.N}, {len(self.terms)} terms, {self.name!r})"


def _unit(N: int) -> tuple[tuple[Prim, ...], ...]:
    return tuple(() for _ in range(N))


def constant(N: int, c: float = 1.0) -> SmoothFunction:
    return SmoothFunction(N, [Term(float(c), _unit(N))], f"{c:g}")


def coordinate(N: int, i: int, power: int = 1) -> SmoothFunction:
    """``x_i ** power`` for a 1-based coordinate ``i``."""
    f = list(_unit(N))
    f[i - 1] = (("pow", power, 0.0),)
    return SmoothFunction(N, [Term(1.0, tuple(f))], f"x{i}^{power}")


def coordinate_product(N: int) -> SmoothFunction:
    return SmoothFunction(N, [Term(1.0, tuple((("pow", 1, 0.0),) for _ in range(N)))], "prod(x)")


def coordinate_sum(N: int) -> SmoothFunction:
    out = coordinate(N, 1)
    for i in range(2, N + 1):
        out = out + coordinate(N, i)
    out.name = "sum(x)"
    return out


def exp_linear(theta, scale: float = 1.0) -> SmoothFunction:
    """``scale * exp(theta . x)``."""
    theta = np.asarray(theta, dtype=float)
    factors = tuple((("exp", float(a), 0.0),) for a in theta)
    return SmoothFunction(theta.size, [Term(float(scale), factors)], f"exp({theta.tolist()}.x)")


def separable(N: int, per_axis: list[list[Prim]], coef: float = 1.0, name: str = "") -> SmoothFunction:
    return SmoothFunction(N, [Term(coef, tuple(tuple(p) for p in per_axis))], name)


def random_smooth(N: int, rng: np.random.Generator, n_terms: int = 2) -> SmoothFunction:
    """A random sum of separable exp/sin/monomial products with O(1) derivatives."""
    terms = []
    for _ in range(n_terms):
        factors = []
        for _ in range(N):
            kind = rng.choice(["exp", "sin", "pow"])
            if kind == "exp":
                p = ("exp", float(rng.uniform(-1.5, 1.5)), float(rng.uniform(-0.5, 0.5)))
            elif kind == "sin":
                p = ("sin", float(rng.uniform(0.5, 2.5)), float(rng.uniform(0, np.pi)))
            else:
                p = ("pow", int(rng.integers(1, 3)), 0.0)
            factors.append((p,))
        terms.append(Term(float(rng.uniform(0.5, 2.0) * rng.choice([-1, 1])), tuple(factors)))
    return SmoothFunction(N, terms, "random")


def finite_difference_partial(f, v, N: int, step) -> "callable":
    """Central finite-difference mixed partial of a plain callable.

    ``step`` is a scalar or per-axis array of step sizes.
    """
    v = as_index_set(v, N)
    axes = v.axes
    steps = np.broadcast_to(np.asarray(step, dtype=float), (N,))
    if not axes:
        return f

    def fd(x):
        x = np.asarray(x, dtype=float)
        out = 0.0
        for bits in range(1 << len(axes)):
            shift = np.zeros(N)
            sign = 1.0
            for k, a in enumerate(axes):
                if bits >> k & 1:
                    shift[a] = steps[a]
                else:
                    shift[a] = -steps[a]
                    sign = -sign
            out = out + sign * np.asarray(f(x + shift))
        return out / np.prod(2.0 * steps[list(axes)])

    return fd


def mixed_partial(f, v, N: int, step=None):
    """Mixed partial of ``f`` over ``v``: exact when ``f`` provides ``partial``.

    Otherwise falls back to central differences with step ``step``
    (default 1e-4).
    """
    if hasattr(f, "partial"):
        return f.partial(v)
    return finite_difference_partial(f, v, N, 1e-4 if step is None else step)
