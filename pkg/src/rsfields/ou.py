"""Lamperti and M-transforms, generalized OU fields and Langevin residuals.

Fields are always stored over the ``t``-grid. A self-similar field ``Y`` is
represented by ``t -> Y(e^t)``, so the Lamperti pair is plain nodewise
multiplication by ``exp(+-theta.t)``.

Transforms accept a :class:`~rsfields.grid.GridField` or a
:class:`~rsfields.fields.FieldEnsemble`; ensembles are processed with the
replication axis leading and return ensembles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .fields import FieldEnsemble, theta_vector
from .grid import GridField, GridPartition, interpolate
from .indexkit import MultiIndexSet, as_point, compose, nonempty_subsets, subsets, subsets_of, theta_product
from .triangle import build_domain, facet_points

KINDS = ("lamperti", "inv-lamperti", "m-theta", "inv-m-theta", "ou-solution")
CORNER_DECAY = 1e-6
ZERO_SUM_RTOL = 1e-12


@dataclass(frozen=True)
class TransformedField:
    """A field with its parameter, kind and provenance.

    Lamperti-type transforms are kept as a ``source`` field times
    ``exp(exponent . t)``; composing them only adds exponents, so a
    transform followed by its inverse returns the source values exactly.
    """

    source: GridField | FieldEnsemble
    theta: np.ndarray
    kind: str
    provenance: dict = field(default_factory=dict)
    exponent: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.exponent is None:
            object.__setattr__(self, "exponent", np.zeros(self.source.partition.dim))

    @cached_property
    def base(self) -> GridField | FieldEnsemble:
        if not np.any(self.exponent):
            return self.source
        vals = self.source.values * np.exp(self.source.partition.nodes() @ self.exponent)
        return self.source.with_values(vals, kind=self.kind)

    @property
    def partition(self) -> GridPartition:
        return self.source.partition

    @property
    def values(self) -> np.ndarray:
        return self.base.values

    def __call__(self, x):
        return self.base(x)

    def header(self) -> dict:
        return {"theta": self.theta.tolist(), "kind": self.kind, **self.provenance}


def _unwrap(X):
    if isinstance(X, TransformedField):
        return X.base
    return X


def _exp_weight(P: GridPartition, theta: np.ndarray, sign: float) -> np.ndarray:
    return np.exp(sign * P.nodes() @ theta)


def _rescale(X, theta, sign: float, kind: str) -> TransformedField:
    if isinstance(X, TransformedField):
        source, start = X.source, X.exponent
    else:
        source, start = X, np.zeros(X.partition.dim)
    theta = theta_vector(theta, source.partition.dim)
    return TransformedField(source, theta, kind, {}, start + sign * theta)


def lamperti(X, theta) -> TransformedField:
    """``Y(e^t) = e^{theta.t} X(t)`` nodewise."""
    return _rescale(X, theta, 1.0, "lamperti")


def inv_lamperti(Y, theta) -> TransformedField:
    """``X(t) = e^{-theta.t} Y(e^t)`` nodewise."""
    return _rescale(Y, theta, -1.0, "inv-lamperti")


def default_truncation(theta, decay: float = CORNER_DECAY) -> float:
    """Smallest ``s`` with ``max_i exp(-theta_i s) <= decay``."""
    theta = theta_vector(theta)
    return float(math.log(1.0 / decay) / np.min(theta))


def m_theta_inv(G, theta, truncation: float | None = None) -> TransformedField:
    """``Y(e^t) = int_{-s}^{t} e^{theta.u} dG(u)`` on every node ``t >= -s``.

    The integral is the midpoint-tagged Riemann-Stieltjes sum on the grid of
    ``G``, accumulated by cumulative sums so all nodes cost one pass. The
    output grid keeps the breakpoints at or above ``-s``, which must itself be
    a breakpoint on every axis.
    """
    G = _unwrap(G)
    P = G.partition
    theta = theta_vector(theta, P.dim)
    s_bar = default_truncation(theta) if truncation is None else float(truncation)
    if s_bar <= 0:
        raise ValueError("truncation must be positive")
    starts = [P.axis_index(m, -s_bar) for m in range(P.dim)]
    if any(k is None for k in starts):
        raise ValueError(f"grid must contain -{s_bar} as a breakpoint on every axis (insufficient coverage)")
    Q = GridPartition(tuple(a[k:] for a, k in zip(P.axes, starts)))
    lead = G.values.ndim - P.dim
    vals = G.values[(slice(None),) * lead + tuple(slice(k, None) for k in starts)]
    dG = vals
    weight = np.ones(())
    for m, mid in enumerate(Q.midpoints()):
        dG = np.diff(dG, axis=lead + m)
        weight = np.multiply.outer(weight, np.exp(theta[m] * mid))
    Y = dG * weight
    for m in range(P.dim):
        ax = lead + m
        Y = np.cumsum(Y, axis=ax)
        pad = [(0, 0)] * Y.ndim
        pad[ax] = (1, 0)
        Y = np.pad(Y, pad)
    decay = float(np.max(np.exp(-theta * s_bar)))
    meta = {**G.meta, "kind": "inv-m-theta"}
    out = FieldEnsemble(Q, Y, G.seed, meta) if lead else GridField(Q, Y, meta)
    return TransformedField(out, theta, "inv-m-theta", {"truncation": s_bar, "corner_decay": decay})


def ou_solve(G, theta, truncation: float | None = None) -> TransformedField:
    """Stationary solution ``X(t) = e^{-theta.t} int_{-s}^t e^{theta.u} dG(u)``."""
    Y = m_theta_inv(G, theta, truncation)
    X = inv_lamperti(Y, Y.theta)
    return TransformedField(X.source, Y.theta, "ou-solution", dict(Y.provenance), X.exponent)


def _m_theta_node(evaluate, covers, theta, t, n, lead) -> np.ndarray:
    """One node of the M-transform, batched over the leading axes ``lead``."""
    N = theta.size
    total = float(np.sum(t))
    if abs(total) <= ZERO_SUM_RTOL * max(1.0, float(np.max(np.abs(t)))):
        return np.zeros(lead)
    dom = build_domain(t)
    if not covers(*dom.box()):
        raise ValueError(f"the triangle of apex {t.tolist()} exceeds the grid coverage")

    def yw(x):
        return np.asarray(evaluate(x), dtype=float) * np.exp(-(x @ theta))

    acc = yw(dom.apex[None, :])[..., 0]
    corners = np.stack([dom.corner(MultiIndexSet.of([i + 1], N)) for i in range(N)])
    acc = acc - yw(corners).sum(axis=-1) / N
    for v in nonempty_subsets(N):
        pts, wts = facet_points(dom, v, n)
        full = np.broadcast_to(dom.apex, (pts.shape[0], N)).copy()
        full[:, list(v.axes)] = pts
        sign = 1 if dom.orientation > 0 else v.sign
        acc = acc + sign * theta_product(theta, v) * (yw(full) @ wts)
    return np.broadcast_to(acc, lead)


def m_theta(Y, theta, nodes: GridPartition | None = None, cells: int = 64) -> TransformedField:
    """``G(t) = int_{T(t)} e^{-theta.u} dY(e^u)``, signed by ``(-1)^N`` when ``sum(t) < 0``.

    Evaluated in expanded form: corner values of ``Y e^{-theta.u}`` plus
    ``prod theta_v``-weighted integrals of ``Y e^{-theta.u}`` over the facets
    of the hypertriangle, each by an iterated midpoint rule with ``cells``
    points per free coordinate. Grid-valued ``Y`` is interpolated
    multilinearly; a plain callable needs ``nodes``.

    Without ``nodes`` the output lives on the grid of ``Y``; nodes whose box
    ``R(t)`` leaves the grid are set to 0 and marked False in
    ``provenance["covered"]``. With ``nodes`` any uncovered node raises.
    """
    Y = _unwrap(Y)
    if isinstance(Y, (GridField, FieldEnsemble)):
        P = Y.partition
        N = P.dim
        lead = Y.values.shape[: Y.values.ndim - N]
        evaluate = lambda x: interpolate(P, Y.values, x)
        covers = lambda lo, hi: P.contains(lo) and P.contains(hi)
    elif nodes is None:
        raise ValueError("a callable Y needs an explicit output grid")
    else:
        N = nodes.dim
        lead = ()
        evaluate = Y
        covers = lambda lo, hi: True
    theta = theta_vector(theta, N)
    strict = nodes is not None
    Q = P if nodes is None else nodes
    flat = Q.nodes().reshape(-1, N)
    out = np.zeros(lead + (flat.shape[0],))
    covered = np.ones(flat.shape[0], dtype=bool)
    for k, t in enumerate(flat):
        try:
            out[..., k] = _m_theta_node(evaluate, covers, theta, t, cells, lead)
        except ValueError:
            if strict:
                raise
            covered[k] = False
    out = out.reshape(lead + Q.shape)
    meta = {**getattr(Y, "meta", {}), "kind": "m-theta"}
    if isinstance(Y, FieldEnsemble):
        base = FieldEnsemble(Q, out, Y.seed, meta)
    else:
        base = GridField(Q, out, meta)
    return TransformedField(base, theta, "m-theta",
                            {"cells": cells, "covered": covered.reshape(Q.shape).tolist()})


def _bracket_from_zero(Q: GridPartition, vals: np.ndarray, zero_idx, t_idx, axes) -> np.ndarray:
    """``[X]_{0}^{t}`` in the coordinates ``axes``, as a function of the others."""
    N = Q.dim
    lead = vals.ndim - N
    out = 0.0
    axes = list(axes)
    for bits in range(1 << len(axes)):
        idx = [slice(None)] * N
        sign = 1.0
        for k, a in enumerate(axes):
            if bits >> k & 1:
                idx[a] = zero_idx[a]
                sign = -sign
            else:
                idx[a] = t_idx[a]
        out = out + sign * vals[(slice(None),) * lead + tuple(idx)]
    return np.asarray(out)


def langevin_terms(X, G, theta, t) -> dict:
    """Terms of the integrated Langevin equation at ``t``.

    Returns a map from the 1-based tuple ``u`` to
    ``prod_{i in u} theta_i int_0^t d_{-u} X(s) ds_u`` together with the key
    ``"G"`` for ``[G]_0^t``. Each term brackets ``X`` over ``-u`` at the
    native nodes and integrates the result over ``u`` by the trapezoid rule,
    which is exact for the multilinear interpolant.
    """
    X = _unwrap(X)
    G = _unwrap(G)
    P = X.partition
    N = P.dim
    theta = theta_vector(theta, N)
    t = as_point(t, N)
    if not P.is_node(t):
        raise ValueError(f"{t.tolist()} is not a node of the solution grid")
    zero = np.zeros(N)
    if not P.contains(zero):
        raise ValueError("the grid must contain the origin")
    lead = X.values.shape[: X.values.ndim - N]
    if np.any(t == 0):
        return {**{u.members: np.zeros(lead) for u in subsets(N)}, "G": np.zeros(lead)}
    Q = P.restrict(np.minimum(zero, t), np.maximum(zero, t))
    vals = interpolate(P, X.values, Q.nodes())
    zero_idx = [0 if t[m] > 0 else Q.shape[m] - 1 for m in range(N)]
    t_idx = [Q.shape[m] - 1 if t[m] > 0 else 0 for m in range(N)]
    terms = {}
    for u in subsets(N):
        rest = u.complement().axes
        B = _bracket_from_zero(Q, vals, zero_idx, t_idx, rest)
        # the free axes left in B are u.axes in increasing order
        for rank in reversed(range(len(u))):
            a = u.axes[rank]
            B = np.trapezoid(B, Q.axes[a], axis=len(lead) + rank) * np.sign(t[a])
        terms[u.members] = theta_product(theta, u) * B
    terms["G"] = _increment_from_zero(G, t, lead)
    return terms


def _increment_from_zero(G, t, lead) -> np.ndarray:
    N = t.size
    if isinstance(G, (GridField, FieldEnsemble)):
        P = G.partition
        out = 0.0
        for w in subsets(N):
            x = compose(np.zeros(N), t, w)
            out = out + w.sign * interpolate(P, G.values, x[None, :])[..., 0]
        return np.broadcast_to(out, lead).copy()
    out = 0.0
    for w in subsets(N):
        out = out + w.sign * np.asarray(G(compose(np.zeros(N), t, w)), dtype=float)
    return np.broadcast_to(out, lead).copy()


def langevin_residual(X, G, theta, t) -> float | np.ndarray:
    """``|sum_u prod theta_u int_0^t d_{-u}X ds_u - [G]_0^t|`` (per replication for ensembles)."""
    terms = langevin_terms(X, G, theta, t)
    g = terms.pop("G")
    res = np.abs(sum(terms.values()) - g)
    return float(res) if np.ndim(res) == 0 else res


def equivalence_check(X, Y, theta, probes, tol: float) -> bool:
    """``|[Z]_s^t| <= tol`` on every probe box, where ``Z = e^{theta.t}(X - Y)``."""
    X = _unwrap(X)
    Y = _unwrap(Y)
    theta = theta_vector(theta, X.partition.dim)
    return max_equivalence_gap(X, Y, theta, probes) <= tol


def max_equivalence_gap(X, Y, theta, probes) -> float:
    X = _unwrap(X)
    Y = _unwrap(Y)
    if X.partition != Y.partition:
        raise ValueError("fields live on different grids")
    theta = theta_vector(theta, X.partition.dim)
    Z = (X.values - Y.values) * _exp_weight(X.partition, theta, 1.0)
    P = X.partition
    worst = 0.0
    for s, t in probes:
        s = as_point(s, P.dim)
        t = as_point(t, P.dim)
        if np.any(s == t):
            continue
        inc = 0.0
        for w in subsets(P.dim):
            inc = inc + w.sign * interpolate(P, Z, compose(s, t, w)[None, :])[..., 0]
        worst = max(worst, float(np.max(np.abs(inc))))
    return worst


def homogeneous_field(h_parts: dict, theta):
    """``f(t) = e^{-theta.t} sum_u h_u(t_u)`` over proper subsets ``u``.

    ``h_parts`` maps 1-based index tuples to callables of ``(..., |u|)``
    arrays; the empty tuple is a constant term.
    """
    theta = theta_vector(theta)
    N = theta.size
    parts = []
    for key, h in h_parts.items():
        idx = tuple(int(i) for i in key)
        if len(idx) >= N:
            raise ValueError("homogeneous parts must depend on fewer than N coordinates")
        parts.append(([i - 1 for i in idx], h))

    def f(x):
        x = np.asarray(x, dtype=float)
        acc = np.zeros(x.shape[:-1])
        for axes, h in parts:
            acc = acc + np.asarray(h(x[..., axes]), dtype=float)
        return np.exp(-(x @ theta)) * acc

    return f


def homogeneous_solution_check(h_parts: dict, theta, lower, upper, refinements: int = 3,
                               cells: int = 4, step: float | None = None) -> float:
    """Sup over a grid of ``|sum_u prod theta_u f_{t_{-u}}(t)|`` by central differences.

    Without ``step`` each mixed difference of order ``k`` uses ``eps**(1/(k+2))``,
    which balances truncation against rounding.
    """
    theta = theta_vector(theta)
    N = theta.size
    f = homogeneous_field(h_parts, theta)
    P = GridPartition.uniform(lower, upper, cells * 2 ** max(refinements - 1, 0))
    pts = P.nodes().reshape(-1, N)
    total = np.zeros(pts.shape[0])
    for u in subsets(N):
        rest = u.complement().axes
        h = step if step is not None else float(np.finfo(float).eps ** (1.0 / (len(rest) + 2)))
        d = np.zeros(pts.shape[0])
        for bits in range(1 << len(rest)):
            shift = np.zeros(N)
            sign = 1.0
            for k, a in enumerate(rest):
                if bits >> k & 1:
                    shift[a] = h
                else:
                    shift[a] = -h
                    sign = -sign
            d = d + sign * f(pts + shift)
        total = total + theta_product(theta, u) * d / (2.0 * h) ** len(rest)
    return float(np.max(np.abs(total)))
