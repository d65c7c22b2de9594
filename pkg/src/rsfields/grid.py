"""Tensor-grid partitions, sampled fields and rectangular increments."""

from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .indexkit import as_point, corner_points

# Relative tolerance used when matching a coordinate to a breakpoint.
NODE_RTOL = 1e-9


@dataclass(frozen=True)
class GridPartition:
    """Per-axis strictly increasing breakpoints of a hyperrectangle."""

    axes: tuple[np.ndarray, ...]

    def __post_init__(self):
        clean = []
        for m, ax in enumerate(self.axes):
            a = np.asarray(ax, dtype=float).reshape(-1)
            if a.size < 2:
                raise ValueError(f"axis {m + 1} needs at least 2 breakpoints")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"axis {m + 1} has non-finite breakpoints")
            if np.any(np.diff(a) <= 0):
                raise ValueError(f"axis {m + 1} breakpoints must be strictly increasing")
            a.setflags(write=False)
            clean.append(a)
        if not clean:
            raise ValueError("a partition needs at least one axis")
        object.__setattr__(self, "axes", tuple(clean))

    @classmethod
    def uniform(cls, lower, upper, cells) -> "GridPartition":
        lower = as_point(lower)
        upper = as_point(upper, lower.size)
        cells = np.broadcast_to(np.asarray(cells, dtype=int), lower.shape)
        return cls(tuple(np.linspace(a, b, int(n) + 1) for a, b, n in zip(lower, upper, cells)))

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        """Node counts per axis."""
        return tuple(a.size for a in self.axes)

    @property
    def cells(self) -> tuple[int, ...]:
        return tuple(a.size - 1 for a in self.axes)

    @property
    def lower(self) -> np.ndarray:
        return np.array([a[0] for a in self.axes])

    @property
    def upper(self) -> np.ndarray:
        return np.array([a[-1] for a in self.axes])

    @property
    def norm(self) -> float:
        return max(float(np.max(np.diff(a))) for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def nodes(self) -> np.ndarray:
        """All nodes as an array of shape ``shape + (N,)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def midpoints(self) -> tuple[np.ndarray, ...]:
        return tuple(0.5 * (a[1:] + a[:-1]) for a in self.axes)

    def widths(self) -> tuple[np.ndarray, ...]:
        return tuple(np.diff(a) for a in self.axes)

    def contains(self, x, tol: float = NODE_RTOL) -> bool:
        x = np.asarray(x, dtype=float)
        slack = tol * np.maximum(1.0, np.abs(self.upper - self.lower))
        return bool(np.all(x >= self.lower - slack) and np.all(x <= self.upper + slack))

    def axis_index(self, m: int, value: float) -> int | None:
        """Index of ``value`` among the breakpoints of axis ``m`` (0-based), or None."""
        a = self.axes[m]
        tol = NODE_RTOL * max(1.0, float(a[-1] - a[0]))
        k = int(np.searchsorted(a, value))
        for j in (k - 1, k):
            if 0 <= j < a.size and abs(a[j] - value) <= tol:
                return j
        return None

    def node_index(self, x) -> tuple[int, ...]:
        """Multi-index of the node at ``x``; raises if ``x`` is not a node."""
        x = as_point(x, self.dim)
        out = []
        for m, value in enumerate(x):
            j = self.axis_index(m, value)
            if j is None:
                raise ValueError(f"coordinate {value} is not a breakpoint of axis {m + 1}")
            out.append(j)
        return tuple(out)

    def is_node(self, x) -> bool:
        try:
            self.node_index(x)
        except ValueError:
            return False
        return True

    def restrict(self, lower, upper) -> "GridPartition":
        """Sub-partition of ``[lower, upper]`` using the breakpoints inside it.

        The box endpoints are always breakpoints of the result, so a box that
        does not align with the grid is still covered exactly.
        """
        lower = as_point(lower, self.dim)
        upper = as_point(upper, self.dim)
        axes = []
        for m, (a, lo, hi) in enumerate(zip(self.axes, lower, upper)):
            if hi <= lo:
                raise ValueError(f"empty box along axis {m + 1}")
            tol = NODE_RTOL * max(1.0, float(a[-1] - a[0]))
            if lo < a[0] - tol or hi > a[-1] + tol:
                raise ValueError(f"box [{lo}, {hi}] exceeds axis {m + 1} range [{a[0]}, {a[-1]}]")
            inner = a[(a > lo + tol) & (a < hi - tol)]
            axes.append(np.concatenate([[lo], inner, [hi]]))
        return GridPartition(tuple(axes))

    def coarsen(self, step: int) -> "GridPartition":
        """Keep every ``step``-th breakpoint (endpoints always kept)."""
        axes = []
        for a in self.axes:
            keep = a[::step]
            if keep[-1] != a[-1]:
                keep = np.append(keep, a[-1])
            axes.append(keep)
        return GridPartition(tuple(axes))

    def to_json(self) -> dict:
        return {"axes": [a.tolist() for a in self.axes]}

    @classmethod
    def from_json(cls, data: dict) -> "GridPartition":
        return cls(tuple(np.asarray(a, dtype=float) for a in data["axes"]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, GridPartition) or other.dim != self.dim:
            return False
        return all(a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.axes, other.axes))

    def __hash__(self) -> int:
        return hash(tuple(a.tobytes() for a in self.axes))


def refine(P: GridPartition, factor: int) -> GridPartition:
    """Split every cell uniformly into ``factor`` pieces per axis."""
    factor = int(factor)
    if factor < 2:
        raise ValueError("refinement factor must be >= 2")
    axes = []
    for a in P.axes:
        frac = np.arange(factor) / factor
        inner = (a[:-1, None] + np.diff(a)[:, None] * frac[None, :]).reshape(-1)
        axes.append(np.append(inner, a[-1]))
    return GridPartition(tuple(axes))


def interpolate(P: GridPartition, values: np.ndarray, x) -> np.ndarray:
    """Multilinear interpolation of node values (leading batch axes allowed).

    Exact at nodes. Returns shape ``values.shape[:-N] + x.shape[:-1]``.
    """
    x = np.asarray(x, dtype=float)
    N = P.dim
    if x.shape[-1] != N:
        raise ValueError(f"points have {x.shape[-1]} coordinates, grid has {N}")
    lo, hi = P.lower, P.upper
    slack = NODE_RTOL * np.maximum(1.0, hi - lo)
    if np.any(x < lo - slack) or np.any(x > hi + slack):
        raise ValueError("evaluation point outside the grid domain")
    idx, wts = [], []
    for m, a in enumerate(P.axes):
        xm = np.clip(x[..., m], a[0], a[-1])
        k = np.clip(np.searchsorted(a, xm, side="right") - 1, 0, a.size - 2)
        idx.append(k)
        wts.append((xm - a[k]) / (a[k + 1] - a[k]))
    out = 0.0
    for bits in range(1 << N):
        index = []
        weight = 1.0
        for m in range(N):
            if bits >> m & 1:
                index.append(idx[m] + 1)
                weight = weight * wts[m]
            else:
                index.append(idx[m])
                weight = weight * (1.0 - wts[m])
        out = out + values[(Ellipsis, *index)] * weight
    return np.asarray(out)


@dataclass(frozen=True)
class GridField:
    """Scalar values on every node of a :class:`GridPartition`.

    Calling a field evaluates it by multilinear interpolation, so it can be
    passed anywhere a callable ``f(x)`` with ``x.shape == (..., N)`` is expected.
    """

    partition: GridPartition
    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.partition.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.partition.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.partition.dim

    def __call__(self, x) -> np.ndarray:
        return interpolate(self.partition, self.values, x)

    def at(self, x) -> float:
        """Value at a grid node (no interpolation)."""
        return float(self.values[self.partition.node_index(x)])

    def with_values(self, values, **meta) -> "GridField":
        return GridField(self.partition, values, {**self.meta, **meta})


def sample(fn: Callable, P: GridPartition) -> GridField:
    """Evaluate ``fn`` at every node of ``P``."""
    vals = np.asarray(fn(P.nodes()), dtype=float)
    vals = np.broadcast_to(vals, P.shape)
    if not np.all(np.isfinite(vals)):
        raise ValueError("sampled function returned non-finite values")
    return GridField(P, vals)


def rect_increment(F, s, t) -> float:
    """The rectangular increment ``[F]_s^t``: sum of ``(-1)**|v| F(s_v:t_{-v})``.

    No ordering of ``s`` and ``t`` is required; swapped coordinates contribute
    the sign flip automatically. Degenerate boxes return exactly 0.
    """
    s = as_point(s)
    t = as_point(t, s.size)
    if np.any(s == t):
        return 0.0
    if isinstance(F, GridField):
        if F.dim != s.size:
            raise ValueError("point dimension does not match the field")
        P = F.partition
        if not (P.contains(s) and P.contains(t)):
            raise ValueError("increment box lies outside the field's domain")
    pts, signs = corner_points(s, t)
    vals = np.asarray(F(pts), dtype=float)
    return float(signs @ vals)


def increments(values: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Apply the difference operator along each of ``axes`` (negative indices ok)."""
    out = values
    for a in axes:
        out = np.diff(out, axis=a)
    return out


def cell_increments(F: GridField) -> np.ndarray:
    """All cell increments ``Delta_1 ... Delta_N F`` (shape = cell counts)."""
    return increments(F.values, range(F.dim))


def cell_increment(F: GridField, i: Sequence[int]) -> float:
    i = tuple(int(k) for k in i)
    cells = F.partition.cells
    if len(i) != F.dim or any(not 0 <= k < n for k, n in zip(i, cells)):
        raise IndexError(f"cell index {i} out of range for cells {cells}")
    block = F.values[tuple(slice(k, k + 2) for k in i)]
    return float(increments(block, range(F.dim)).reshape(()))


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save_field(F: GridField, path, header: dict | None = None) -> Path:
    """Write ``<path>.csv`` (coords then value, row-major) and ``<path>.json``."""
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".csv", ".json") else path
    nodes = F.partition.nodes().reshape(-1, F.dim)
    vals = F.values.reshape(-1)
    lines = [",".join([f"t{m + 1}" for m in range(F.dim)] + ["value"])]
    for p, v in zip(nodes, vals):
        lines.append(",".join(repr(float(c)) for c in p) + "," + repr(float(v)))
    _atomic_write(stem.with_suffix(".csv"), "\n".join(lines) + "\n")
    meta = {**F.partition.to_json(), "meta": F.meta}
    if header:
        meta.update(header)
    _atomic_write(stem.with_suffix(".json"), json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return stem.with_suffix(".csv")


def load_field(path) -> GridField:
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".csv", ".json") else path
    meta = json.loads(stem.with_suffix(".json").read_text())
    P = GridPartition.from_json(meta)
    with open(stem.with_suffix(".csv"), newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    vals = np.array([float(r[-1]) for r in rows])
    if vals.size != P.size:
        raise ValueError(f"{path}: {vals.size} values for a grid of {P.size} nodes")
    return GridField(P, vals.reshape(P.shape), meta.get("meta", {}))
