"""Integrals over the hypertriangle ``T(t)`` and its complement in ``R``.

For an apex ``t`` the reflected corner is ``t~_l = -sum_{j != l} t_j`` and
``R`` is the box spanned by ``t`` and ``t~``. When ``sum(t) >= 0``,
``T = {x <= t, sum(x) >= 0}``; otherwise ``T = {x >= t, sum(x) <= 0}``.
The integral over ``T`` is defined through corner values of ``f g`` and
facet integrals of ``f_{t_v} g`` over the lower-dimensional sections
``T_v``; it vanishes identically when ``sum(t) == 0`` and, together with
the integral over ``R \\ T``, adds up to the Riemann-Stieltjes integral
over ``R``.

Facets are integrated by iterated composite midpoint rules over their
nested linear bounds, on the same dyadic ladder as :mod:`rsfields.rsint`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .indexkit import MultiIndexSet, as_index_set, as_point, compose, nonempty_subsets, subsets_of
from .rsint import DEFAULT_CELLS, DEFAULT_REFINEMENTS, IntegralResult, rs_integral
from .smooth import mixed_partial

FD_REL_STEP = 1e-4


@dataclass(frozen=True)
class TriangleDomain:
    apex: np.ndarray
    reflected: np.ndarray
    orientation: int  # +1 when sum(apex) >= 0, else -1

    @property
    def N(self) -> int:
        return self.apex.size

    @property
    def total(self) -> float:
        return float(np.sum(self.apex))

    @property
    def degenerate(self) -> bool:
        return self.total == 0.0

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper corners of ``R``."""
        return np.minimum(self.apex, self.reflected), np.maximum(self.apex, self.reflected)

    def corner(self, v) -> np.ndarray:
        """The corner ``t_{-v}:t~_v``."""
        v = as_index_set(v, self.N)
        return compose(self.reflected, self.apex, v)

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = as_point(x, self.N)
        scale = tol * max(1.0, float(np.max(np.abs(self.apex))))
        if self.orientation > 0:
            return bool(np.all(x <= self.apex + scale) and np.sum(x) >= -scale * self.N)
        return bool(np.all(x >= self.apex - scale) and np.sum(x) <= scale * self.N)

    def facet_bounds(self, v, x_prev: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Bounds of the next free coordinate of ``T_v`` given the previous ones.

        ``x_prev`` has shape ``(..., k)`` holding the first ``k`` coordinates
        (ascending order of ``v``); returns ``(lo, hi)`` for coordinate ``k``.
        """
        v = as_index_set(v, self.N)
        va = v.axes
        k = x_prev.shape[-1]
        tv = self.apex[list(va)]
        moving = -np.sum(x_prev, axis=-1) - self.total + np.sum(tv[: k + 1])
        fixed = np.broadcast_to(tv[k], moving.shape)
        if self.orientation > 0:
            return moving, fixed
        return fixed, moving


def build_domain(t) -> TriangleDomain:
    t = as_point(t)
    reflected = t - np.sum(t)
    orientation = 1 if np.sum(t) >= 0 else -1
    return TriangleDomain(t, reflected, orientation)


def contains(dom: TriangleDomain, x) -> bool:
    return dom.contains(x)


def facet_points(dom: TriangleDomain, v, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint nodes and weights of the iterated rule on ``T_v``.

    Returns ``(points, weights)`` with points of shape ``(n**|v|, |v|)``.
    """
    v = as_index_set(v, dom.N)
    d = len(v)
    y = (np.arange(n) + 0.5) / n
    grid = np.stack(np.meshgrid(*([y] * d), indexing="ij"), axis=-1).reshape(-1, d)
    x = np.empty_like(grid)
    jac = np.full(grid.shape[0], 1.0 / n**d)
    for k in range(d):
        lo, hi = dom.facet_bounds(v, x[:, :k])
        x[:, k] = lo + (hi - lo) * grid[:, k]
        jac = jac * (hi - lo)
    return x, jac


def facet_integral(dom: TriangleDomain, v, phi, n: int) -> float:
    """``int_{T_v} phi(t_{-v}:u_v) du_v`` with ``phi`` a function on ``R^N``."""
    v = as_index_set(v, dom.N)
    pts, wts = facet_points(dom, v, n)
    full = np.broadcast_to(dom.apex, (pts.shape[0], dom.N)).copy()
    full[:, list(v.axes)] = pts
    return float(np.sum(np.asarray(phi(full)) * wts))


def box_face_integral(lower, upper, v: MultiIndexSet, base: np.ndarray, phi, n: int) -> float:
    """``int_{[lower_v, upper_v]} phi(base_{-v}:u_v) du_v`` by composite midpoint."""
    va = list(v.axes)
    axes = []
    vol = 1.0
    for a in va:
        h = (upper[a] - lower[a]) / n
        axes.append(lower[a] + h * (np.arange(n) + 0.5))
        vol *= h
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(va))
    full = np.broadcast_to(base, (pts.shape[0], base.size)).copy()
    full[:, va] = pts
    return float(np.sum(np.asarray(phi(full))) * vol)


def _partials(f, dom: TriangleDomain, partials):
    """Map from MultiIndexSet to ``f_{t_v}``; analytic when available."""
    step = FD_REL_STEP * max(abs(dom.total), 1.0)
    out = {}
    for v in nonempty_subsets(dom.N):
        given = (partials or {}).get(v.members)
        out[v] = given if given is not None else mixed_partial(f, v, dom.N, step)
    return out


def _levels(refinements: int, cells: int) -> list[int]:
    if refinements < 1:
        raise ValueError("refinements must be >= 1")
    return [cells * 2**k for k in range(refinements)]


def _corner_values(f, g, dom: TriangleDomain) -> dict:
    out = {}
    for v in subsets_of(MultiIndexSet.full(dom.N)):
        c = dom.corner(v)
        out[v] = float(np.asarray(f(c)) * np.asarray(g(c)))
    return out


def triangle_integral(f, g, t, refinements: int = DEFAULT_REFINEMENTS, cells: int = DEFAULT_CELLS,
                      partials=None) -> IntegralResult:
    """``int_T f dg`` for ``f`` with continuous mixed partials and continuous ``g``.

    ``partials`` optionally maps 1-based index tuples to ``f_{t_v}``.
    """
    dom = build_domain(t)
    ns = _levels(refinements, cells)
    if dom.degenerate:
        return IntegralResult.exact(0.0, n_levels=len(ns))
    N = dom.N
    h = _corner_values(f, g, dom)
    corner = h[MultiIndexSet.empty(N)] - sum(h[v] for v in h if len(v) == 1) / N
    fp = _partials(f, dom, partials)
    levels = []
    for n in ns:
        acc = corner
        for v in nonempty_subsets(N):
            phi = lambda x, fv=fp[v]: np.asarray(fv(x)) * np.asarray(g(x))
            sign = v.sign if dom.orientation > 0 else 1
            acc += sign * facet_integral(dom, v, phi, n)
        levels.append((1.0 / n, dom.orientation ** N * acc))
    return IntegralResult.from_levels(levels)


def complement_integral(f, g, t, refinements: int = DEFAULT_REFINEMENTS, cells: int = DEFAULT_CELLS,
                        partials=None) -> IntegralResult:
    """``int_{R \\ T} f dg``; together with :func:`triangle_integral` it gives ``int_R f dg``."""
    dom = build_domain(t)
    ns = _levels(refinements, cells)
    if dom.degenerate:
        return IntegralResult.exact(0.0, n_levels=len(ns))
    N = dom.N
    h = _corner_values(f, g, dom)
    corner = -(N - 1) / N * sum(h[v] for v in h if len(v) == 1)
    corner += sum(v.sign * h[v] for v in h if len(v) >= 2)
    fp = _partials(f, dom, partials)
    lower, upper = dom.box()
    levels = []
    for n in ns:
        acc = corner
        for v in nonempty_subsets(N):
            phi = lambda x, fv=fp[v]: np.asarray(fv(x)) * np.asarray(g(x))
            # R_v integrals with -v pinned to corners t_{-v-w}:t~_w, minus T_v
            part = -facet_integral(dom, v, phi, n)
            for w in subsets_of(v.complement()):
                base = compose(dom.reflected, dom.apex, w)
                part += w.sign * box_face_integral(lower, upper, v, base, phi, n)
            sign = v.sign if dom.orientation > 0 else 1
            acc += sign * part
        levels.append((1.0 / n, dom.orientation ** N * acc))
    return IntegralResult.from_levels(levels)


def box_integral(f, g, t, refinements: int = DEFAULT_REFINEMENTS, cells: int = DEFAULT_CELLS) -> IntegralResult:
    """``int_R f dg`` by Riemann-Stieltjes sums over ``R`` (no derivatives of ``f``)."""
    dom = build_domain(t)
    if dom.degenerate:
        return IntegralResult.exact(0.0, n_levels=refinements)
    lower, upper = dom.box()
    return rs_integral(f, g, lower, upper, refinements=refinements, cells=cells)
