"""Unrestricted multiple Riemann-Stieltjes integration over boxes.

All integrals are computed as tagged sums over tensor partitions on a
dyadic refinement ladder. The finest level is the reported value and the
difference to the previous level is the error estimate.

Integrands and integrators are callables taking an array of points of
shape ``(..., N)``; a :class:`~rsfields.grid.GridField` qualifies. When the
integrator is a GridField the ladder is built from the field's own
breakpoints, never finer than the data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import GridField, GridPartition, increments, rect_increment
from .indexkit import (
    MultiIndexSet,
    as_index_set,
    as_point,
    compose,
    nonempty_subsets,
    subsets,
    subsets_of,
)
from .smooth import SmoothFunction, exp_linear, mixed_partial

DEFAULT_CELLS = 8
DEFAULT_REFINEMENTS = 4

TAG_KINDS = ("lower", "upper", "midpoint", "randomized")


@dataclass(frozen=True)
class TagPolicy:
    """Where the integrand is evaluated inside each cell."""

    kind: str = "midpoint"
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in TAG_KINDS:
            raise ValueError(f"tag kind must be one of {TAG_KINDS}, got {self.kind!r}")
        if self.kind == "randomized" and self.seed is None:
            raise ValueError("randomized tags need a seed")

    def points(self, P: GridPartition) -> np.ndarray:
        """Tags for every cell, shape ``P.cells + (N,)``."""
        lo = [a[:-1] for a in P.axes]
        w = P.widths()
        if self.kind == "randomized":
            rng = np.random.Generator(np.random.Philox(self.seed))
            base = np.stack(np.meshgrid(*lo, indexing="ij"), axis=-1)
            width = np.stack(np.meshgrid(*w, indexing="ij"), axis=-1)
            return base + rng.random(base.shape) * width
        frac = {"lower": 0.0, "upper": 1.0, "midpoint": 0.5}[self.kind]
        per_axis = [a + frac * d for a, d in zip(lo, w)]
        return np.stack(np.meshgrid(*per_axis, indexing="ij"), axis=-1)


MIDPOINT = TagPolicy("midpoint")


@dataclass
class IntegralResult:
    """Value of a ladder of tagged sums with its refinement trace."""

    value: float
    error_estimate: float
    levels: list[tuple[float, float]] = field(default_factory=list)

    @classmethod
    def from_levels(cls, levels: Sequence[tuple[float, float]]) -> "IntegralResult":
        levels = [(float(n), float(v)) for n, v in levels]
        if not levels:
            raise ValueError("an integral result needs at least one level")
        value = levels[-1][1]
        if not math.isfinite(value):
            raise FloatingPointError("non-finite Riemann-Stieltjes sum")
        err = abs(value - levels[-2][1]) if len(levels) > 1 else 0.0
        return cls(value, err, levels)

    @classmethod
    def exact(cls, value: float, norm: float = 0.0, n_levels: int = 1) -> "IntegralResult":
        return cls.from_levels([(norm, value)] * n_levels)

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.levels])

    def scaled(self, c: float) -> "IntegralResult":
        return IntegralResult.from_levels([(n, c * v) for n, v in self.levels])

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "error_estimate": self.error_estimate,
            "levels": [list(level) for level in self.levels],
        }

    @classmethod
    def from_json(cls, data: dict) -> "IntegralResult":
        return cls(float(data["value"]), float(data["error_estimate"]), [tuple(l) for l in data["levels"]])


def combine(results: Sequence[IntegralResult], weights: Sequence[float] | None = None,
            constant: float = 0.0) -> IntegralResult:
    """Level-wise weighted sum; ladders are aligned at their finest level."""
    if weights is None:
        weights = [1.0] * len(results)
    if not results:
        return IntegralResult.exact(constant)
    depth = min(len(r.levels) for r in results)
    levels = []
    for k in range(depth):
        norm = max(r.levels[len(r.levels) - depth + k][0] for r in results)
        val = constant + sum(w * r.levels[len(r.levels) - depth + k][1] for r, w in zip(results, weights))
        levels.append((norm, val))
    return IntegralResult.from_levels(levels)


# ---------------------------------------------------------------------------
# partitions


def _as_callable(fn, N: int) -> Callable:
    if callable(fn):
        return fn
    c = float(fn)
    return lambda x: np.full(np.shape(x)[:-1], c)


class _Restricted:
    """``fn`` viewed as a function of the coordinates ``axes`` only."""

    def __init__(self, fn, axes: Sequence[int], base: np.ndarray):
        self.fn, self.axes, self.base = fn, list(axes), np.asarray(base, dtype=float)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        x = np.broadcast_to(self.base, y.shape[:-1] + self.base.shape).copy()
        x[..., self.axes] = y
        return self.fn(x)


def _oriented(lower, upper, N: int) -> tuple[np.ndarray, np.ndarray, int]:
    s = as_point(lower, N)
    t = as_point(upper, N)
    if np.any(s == t):
        raise ValueError("empty integration box (a coordinate has equal bounds)")
    flips = int(np.sum(t < s))
    return np.minimum(s, t), np.maximum(s, t), (-1) ** flips


def ladder(lower, upper, refinements: int = DEFAULT_REFINEMENTS, cells: int = DEFAULT_CELLS,
           native: GridPartition | None = None, axes: Sequence[int] | None = None) -> list[GridPartition]:
    """Dyadic partitions of ``[lower, upper]``, coarsest first.

    With ``native`` the finest level uses the native breakpoints (restricted
    to ``axes`` if given) and coarser levels drop every other breakpoint.
    """
    if refinements < 1:
        raise ValueError("refinements must be >= 1")
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if native is None:
        return [GridPartition.uniform(lower, upper, cells * 2**k) for k in range(refinements)]
    if axes is not None:
        native = GridPartition(tuple(native.axes[a] for a in axes))
    finest = native.restrict(lower, upper)
    out = [finest]
    for k in range(1, refinements):
        step = 2**k
        if min(finest.cells) < step:
            break
        out.append(finest.coarsen(step))
    return out[::-1]


def _native_of(f) -> GridPartition | None:
    return f.partition if isinstance(f, GridField) else None


# ---------------------------------------------------------------------------
# sums


def hybrid_sum(g, f, stieltjes: Sequence[int], P: GridPartition, tags: TagPolicy = MIDPOINT,
               batched: bool = False):
    """Tagged sum of ``g d_stieltjes f dr_rest`` over the cells of ``P``.

    Along ``stieltjes`` axes (0-based) the integrator contributes its
    increments; along the remaining axes it is evaluated at cell midpoints
    and multiplied by the cell width. ``stieltjes == all axes`` gives the
    Riemann-Stieltjes sum; ``stieltjes == ()`` a plain Riemann sum of ``g*f``.
    """
    N = P.dim
    stj = set(stieltjes)
    mids = P.midpoints()
    pts_axes = [P.axes[m] if m in stj else mids[m] for m in range(N)]
    pts = np.stack(np.meshgrid(*pts_axes, indexing="ij"), axis=-1)
    fv = np.asarray(f(pts), dtype=float)
    df = increments(fv, [a - N for a in sorted(stj)])
    for m in range(N):
        if m not in stj:
            shape = [1] * N
            shape[m] = -1
            df = df * P.widths()[m].reshape(shape)
    gv = np.asarray(_as_callable(g, N)(tags.points(P)), dtype=float)
    prod = gv * df
    if batched:
        return prod.reshape(prod.shape[: prod.ndim - N] + (-1,)).sum(axis=-1)
    return math.fsum(np.broadcast_to(prod, P.cells).ravel())


def rs_sum(g, f, P: GridPartition, tags: TagPolicy = MIDPOINT) -> float:
    """One Riemann-Stieltjes sum ``sum_i g(xi_i) [f]_{cell i}``."""
    return hybrid_sum(g, f, range(P.dim), P, tags)


def _ladder_result(fn, parts: list[GridPartition], sign: float = 1.0) -> IntegralResult:
    return IntegralResult.from_levels([(P.norm, sign * fn(P)) for P in parts])


def rs_integral(g, f, lower, upper, tags: TagPolicy = MIDPOINT, refinements: int = DEFAULT_REFINEMENTS,
                cells: int = DEFAULT_CELLS) -> IntegralResult:
    """``int_s^t g df`` as a ladder of unrestricted Riemann-Stieltjes sums.

    Reversed bounds follow the increment sign convention: each swapped
    coordinate flips the sign.
    """
    N = np.asarray(lower, dtype=float).size
    s, t, sign = _oriented(lower, upper, N)
    parts = ladder(s, t, refinements, cells, native=_native_of(f))
    return _ladder_result(lambda P: rs_sum(g, f, P, tags), parts, sign)


def mixed_integral(g, f, v, lower, upper, tags: TagPolicy = MIDPOINT,
                   refinements: int = DEFAULT_REFINEMENTS, cells: int = DEFAULT_CELLS) -> IntegralResult:
    """``int_{s_v}^{t_v} [g(r) d_v f(r)]_{s_{-v}}^{t_{-v}}``.

    The bracket over the complementary coordinates expands into
    ``2**|-v|`` signed ``|v|``-variate Riemann-Stieltjes integrals with those
    coordinates pinned to the box corners.
    """
    s = as_point(lower)
    t = as_point(upper, s.size)
    N = s.size
    v = as_index_set(v, N)
    if not v:
        raise ValueError("mixed_integral needs a nonempty coordinate set")
    rest = v.complement()
    if any(s[a] == t[a] for a in rest.axes):
        return IntegralResult.exact(0.0, n_levels=refinements)
    va = list(v.axes)
    sv, tv, sign = _oriented(s[va], t[va], len(va))
    parts = ladder(sv, tv, refinements, cells, native=_native_of(f), axes=va)
    pieces = []
    weights = []
    for w in subsets_of(rest):
        base = compose(s, t, w)
        gw = _Restricted(_as_callable(g, N), va, base)
        fw = _Restricted(f, va, base)
        pieces.append(_ladder_result(lambda P, gw=gw, fw=fw: rs_sum(gw, fw, P, tags), parts))
        weights.append(sign * w.sign)
    return combine(pieces, weights)


def _product(a, b):
    if isinstance(a, SmoothFunction) and isinstance(b, SmoothFunction):
        return a * b
    return lambda x: np.asarray(a(x)) * np.asarray(b(x))


def ibp_rhs(f, g, lower, upper, tags: TagPolicy = MIDPOINT, refinements: int = DEFAULT_REFINEMENTS,
            cells: int = DEFAULT_CELLS) -> IntegralResult:
    """Right-hand side of integration by parts for ``int_s^t f dg``:

    ``[fg]_s^t + sum_{v != {}} (-1)**|v| int_{s_v}^{t_v} [g d_v f]_{s_{-v}}^{t_{-v}}``.
    """
    s = as_point(lower)
    N = s.size
    bracket = rect_increment(_product(f, g), s, upper)
    pieces, weights = [], []
    for v in nonempty_subsets(N):
        pieces.append(mixed_integral(g, f, v, s, upper, tags, refinements, cells))
        weights.append(v.sign)
    return combine(pieces, weights, constant=bracket)


def substitute_derivative(g, f_partial, lower, upper, v=None, refinements: int = DEFAULT_REFINEMENTS,
                          cells: int = DEFAULT_CELLS) -> IntegralResult:
    """Integral with ``df`` replaced by a derivative.

    With ``v`` omitted (or full), ``f_partial`` is the full mixed partial
    ``f_t`` and the result is the Riemann integral ``int g f_t dr``.
    Otherwise ``f_partial = f_{t_v}`` and the result is
    ``int g d_{-v} f_{t_v} dr_v`` (Stieltjes in ``-v``, Riemann in ``v``).
    """
    s = as_point(lower)
    N = s.size
    v = as_index_set(v, N)
    s, t, sign = _oriented(s, upper, N)
    stj = v.complement().axes
    parts = ladder(s, t, refinements, cells)
    return _ladder_result(lambda P: hybrid_sum(g, f_partial, stj, P), parts, sign)


def product_rule_check(h, f, g, lower, upper, refinements: int = DEFAULT_REFINEMENTS,
                       cells: int = DEFAULT_CELLS) -> tuple[IntegralResult, IntegralResult]:
    """Both sides of ``d(fg) = sum_u f_{t_u} d_{-u} g dr_u`` tested against ``h``.

    Returns ``(lhs, rhs)`` with ``lhs = int h d(fg)``.
    """
    s = as_point(lower)
    N = s.size
    s, t, sign = _oriented(s, upper, N)
    parts = ladder(s, t, refinements, cells)
    lhs = _ladder_result(lambda P: rs_sum(h, _product(f, g), P), parts, sign)
    pieces = []
    for u in subsets(N):
        integrand = _product(h, mixed_partial(f, u, N))
        stj = u.complement().axes
        pieces.append(_ladder_result(lambda P, a=integrand, b=stj: hybrid_sum(a, g, b, P), parts, sign))
    return lhs, combine(pieces)


def _cumulative_trapezoid(values: np.ndarray, x: np.ndarray, axis: int) -> np.ndarray:
    """Cumulative trapezoid integral along ``axis`` starting at 0."""
    values = np.moveaxis(values, axis, -1)
    mid = 0.5 * (values[..., 1:] + values[..., :-1]) * np.diff(x)
    out = np.concatenate([np.zeros(values.shape[:-1] + (1,)), np.cumsum(mid, axis=-1)], axis=-1)
    return np.moveaxis(out, -1, axis)


def fundamental_lemma_check(f, v, lower, upper, g=None, refinements: int = DEFAULT_REFINEMENTS,
                            cells: int = DEFAULT_CELLS) -> tuple[IntegralResult, IntegralResult]:
    """Both sides of ``dF_v(t) = d_{-v} f(t) dt_v`` tested against ``g``.

    ``F_v(t) = int_{s_v}^{t_v} [f(r)]_{s_{-v}}^{t_{-v}} dr_v`` is tabulated on
    each grid by cumulative trapezoid sums, then integrated against ``g``
    as a Riemann-Stieltjes integrator. The right-hand side is the hybrid
    sum with Stieltjes increments in ``-v`` and Riemann weights in ``v``.
    The default test integrand is ``exp(0.5 * sum(x))``.
    """
    s = as_point(lower)
    N = s.size
    v = as_index_set(v, N)
    t = as_point(upper, N)
    if np.any(t <= s):
        raise ValueError("fundamental_lemma_check needs lower < upper in every coordinate")
    if g is None:
        g = exp_linear(np.full(N, 0.5))
    parts = ladder(s, t, refinements, cells)
    rest = v.complement()

    def lhs_sum(P: GridPartition) -> float:
        vals = np.asarray(f(P.nodes()), dtype=float)
        A = vals
        for a in v.axes:
            A = _cumulative_trapezoid(A, P.axes[a], a)
        F = np.zeros(P.shape)
        for w in subsets_of(rest):
            idx = tuple(slice(0, 1) if a in w.axes else slice(None) for a in range(N))
            F = F + w.sign * A[idx]
        return rs_sum(g, GridField(P, F), P)

    lhs = _ladder_result(lhs_sum, parts)
    rhs = _ladder_result(lambda P: hybrid_sum(g, f, rest.axes, P), parts)
    return lhs, rhs
