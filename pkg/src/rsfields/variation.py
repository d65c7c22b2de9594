"""Vitali and Hardy-Krause variation on refinement ladders."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .grid import GridField, GridPartition, increments
from .indexkit import as_point, nonempty_subsets
from .rsint import DEFAULT_CELLS, DEFAULT_REFINEMENTS, ladder
from .smooth import mixed_partial


@dataclass
class VariationEstimate:
    """Partition variation on the finest tested partition.

    The true variation is a supremum over all partitions, so ``value`` is a
    lower bound; ``levels`` holds the (norm, value) trace of the ladder.
    """

    value: float
    partition_norm: float
    is_lower_bound: bool = True
    levels: list[tuple[float, float]] = field(default_factory=list)


def _node_values(F, P: GridPartition) -> np.ndarray:
    vals = np.asarray(F(P.nodes()), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("function returned non-finite values")
    return np.broadcast_to(vals, P.shape)


def _vitali_on(vals: np.ndarray, axes) -> float:
    return math.fsum(np.abs(increments(vals, axes)).ravel())


def _hk_on(vals: np.ndarray, N: int) -> float:
    total = 0.0
    for v in nonempty_subsets(N):
        # anchor the remaining coordinates at the upper corner
        idx = tuple(slice(None) if a in v.axes else -1 for a in range(N))
        total += _vitali_on(vals[idx], range(len(v)))
    return total


def _estimate(F, lower, upper, refinements, cells, reducer) -> VariationEstimate:
    s = as_point(lower)
    t = as_point(upper, s.size)
    native = F.partition if isinstance(F, GridField) else None
    parts = ladder(s, t, refinements, cells, native=native)
    levels = [(P.norm, reducer(_node_values(F, P), P.dim)) for P in parts]
    return VariationEstimate(levels[-1][1], levels[-1][0], True, levels)


def vitali_variation(F, lower, upper, refinements: int = DEFAULT_REFINEMENTS,
                     cells: int = DEFAULT_CELLS) -> VariationEstimate:
    """Sum of absolute cell increments on the finest partition of the ladder."""
    return _estimate(F, lower, upper, refinements, cells, lambda vals, N: _vitali_on(vals, range(N)))


def hk_variation(F, lower, upper, refinements: int = DEFAULT_REFINEMENTS,
                 cells: int = DEFAULT_CELLS) -> VariationEstimate:
    """Sum over nonempty ``v`` of the Vitali variation of ``F(r_v:t_{-v})`` on ``[s_v, t_v]``."""
    return _estimate(F, lower, upper, refinements, cells, _hk_on)


def _gauss_box(fn, lower, upper, panels: int, order: int = 8) -> float:
    """Composite tensor Gauss-Legendre rule on a box."""
    x, w = leggauss(order)
    nodes, weights = [], []
    for a, b in zip(lower, upper):
        edges = np.linspace(a, b, panels + 1)
        half = 0.5 * np.diff(edges)
        centre = 0.5 * (edges[1:] + edges[:-1])
        nodes.append((centre[:, None] + half[:, None] * x[None, :]).ravel())
        weights.append((half[:, None] * w[None, :]).ravel())
    pts = np.stack(np.meshgrid(*nodes, indexing="ij"), axis=-1)
    wts = weights[0]
    for extra in weights[1:]:
        wts = np.multiply.outer(wts, extra)
    return float(np.sum(np.asarray(fn(pts)) * wts))


def hk_variation_smooth(f, lower, upper, partials=None, panels: int = 16, rtol: float = 1e-5) -> float:
    """Hardy-Krause variation of a smooth function from its mixed partials.

    Computes ``sum_{v != {}} int_{s_v}^{t_v} |f_{t_v}(r_v:t_{-v})| dr_v``.
    ``partials`` maps a 1-based index tuple to ``f_{t_v}``; missing entries
    come from ``f.partial`` or finite differences. Each face integral is
    evaluated with doubling panel counts until two successive values agree
    to ``rtol``.
    """
    s = as_point(lower)
    t = as_point(upper, s.size)
    N = s.size
    partials = partials or {}
    total = 0.0
    for v in nonempty_subsets(N):
        fv = partials.get(v.members) or mixed_partial(f, v, N)
        va = list(v.axes)

        def face(y, fv=fv, va=va):
            x = np.broadcast_to(t, y.shape[:-1] + (N,)).copy()
            x[..., va] = y
            return np.abs(fv(x))

        n = panels
        prev = _gauss_box(face, s[va], t[va], n)
        while True:
            n *= 2
            if (8 * n) ** len(va) > 20_000_000:
                raise ArithmeticError(f"face quadrature for v={v.members} did not converge")
            fine = _gauss_box(face, s[va], t[va], n)
            if abs(fine - prev) <= rtol * max(1.0, abs(fine)):
                break
            prev = fine
        total += fine
    return total
