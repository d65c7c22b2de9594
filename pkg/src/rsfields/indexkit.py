"""Index algebra for coordinate subsets.

Coordinates are numbered 1..N as in the usual multi-parameter notation.
A :class:`MultiIndexSet` is stored as a bitmask so that enumerating all
2**N subsets stays cheap.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Iterable, Sequence

import numpy as np

MAX_DIM = 16


@dataclass(frozen=True, order=False)
class MultiIndexSet:
    """An ordered subset ``u`` of ``{1, ..., N}``."""

    mask: int
    ambient_dim: int

    def __post_init__(self):
        if not 1 <= self.ambient_dim <= MAX_DIM:
            raise ValueError(f"ambient_dim must be in [1, {MAX_DIM}], got {self.ambient_dim}")
        if self.mask < 0 or self.mask >> self.ambient_dim:
            raise ValueError(f"mask {self.mask:#b} has bits outside 1..{self.ambient_dim}")

    @classmethod
    def of(cls, members: Iterable[int], ambient_dim: int) -> "MultiIndexSet":
        mask = 0
        for m in members:
            m = int(m)
            if not 1 <= m <= ambient_dim:
                raise ValueError(f"index {m} outside 1..{ambient_dim}")
            mask |= 1 << (m - 1)
        return cls(mask, ambient_dim)

    @classmethod
    def full(cls, ambient_dim: int) -> "MultiIndexSet":
        return cls((1 << ambient_dim) - 1, ambient_dim)

    @classmethod
    def empty(cls, ambient_dim: int) -> "MultiIndexSet":
        return cls(0, ambient_dim)

    @property
    def members(self) -> tuple[int, ...]:
        return tuple(i + 1 for i in range(self.ambient_dim) if self.mask >> i & 1)

    @property
    def axes(self) -> tuple[int, ...]:
        """Zero-based positions, for array indexing."""
        return tuple(i for i in range(self.ambient_dim) if self.mask >> i & 1)

    def complement(self) -> "MultiIndexSet":
        return MultiIndexSet(~self.mask & ((1 << self.ambient_dim) - 1), self.ambient_dim)

    def __neg__(self) -> "MultiIndexSet":
        return self.complement()

    def _check(self, other: "MultiIndexSet") -> None:
        if other.ambient_dim != self.ambient_dim:
            raise ValueError("index sets live in different dimensions")

    def __or__(self, other: "MultiIndexSet") -> "MultiIndexSet":
        self._check(other)
        return MultiIndexSet(self.mask | other.mask, self.ambient_dim)

    def __and__(self, other: "MultiIndexSet") -> "MultiIndexSet":
        self._check(other)
        return MultiIndexSet(self.mask & other.mask, self.ambient_dim)

    def __sub__(self, other: "MultiIndexSet") -> "MultiIndexSet":
        self._check(other)
        return MultiIndexSet(self.mask & ~other.mask, self.ambient_dim)

    def __le__(self, other: "MultiIndexSet") -> bool:
        self._check(other)
        return self.mask & ~other.mask == 0

    def __len__(self) -> int:
        return bin(self.mask).count("1")

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, i: int) -> bool:
        return 1 <= i <= self.ambient_dim and bool(self.mask >> (i - 1) & 1)

    def __bool__(self) -> bool:
        return self.mask != 0

    @property
    def sign(self) -> int:
        """(-1)**|u|."""
        return -1 if len(self) % 2 else 1

    def pick(self, t) -> np.ndarray:
        """Return ``t_u``, the coordinates of ``t`` selected by this set."""
        t = as_point(t, self.ambient_dim)
        return t[list(self.axes)]

    def __repr__(self) -> str:
        return f"MultiIndexSet({set(self.members) or '{}'}, N={self.ambient_dim})"


def as_index_set(u, ambient_dim: int) -> MultiIndexSet:
    """Coerce a MultiIndexSet or an iterable of 1-based indices."""
    if isinstance(u, MultiIndexSet):
        if u.ambient_dim != ambient_dim:
            raise ValueError(f"index set has N={u.ambient_dim}, expected {ambient_dim}")
        return u
    if u is None:
        return MultiIndexSet.full(ambient_dim)
    return MultiIndexSet.of(u, ambient_dim)


def as_point(x, ambient_dim: int | None = None) -> np.ndarray:
    p = np.asarray(x, dtype=float).reshape(-1)
    if ambient_dim is not None and p.size != ambient_dim:
        raise ValueError(f"expected a point with {ambient_dim} coordinates, got {p.size}")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"point has non-finite coordinates: {p}")
    return p


def subsets(N: int) -> list[MultiIndexSet]:
    """All 2**N subsets of {1..N}, ordered by size then lexicographically."""
    if not 1 <= N <= MAX_DIM:
        raise ValueError(f"N must be in [1, {MAX_DIM}], got {N}")
    out = [MultiIndexSet(m, N) for m in range(1 << N)]
    out.sort(key=lambda u: (len(u), u.members))
    return out


def nonempty_subsets(N: int) -> list[MultiIndexSet]:
    return subsets(N)[1:]


def subsets_of(u: MultiIndexSet) -> list[MultiIndexSet]:
    """All subsets of ``u`` (same ambient dimension), size-lex ordered."""
    out = []
    sub = u.mask
    while True:
        out.append(MultiIndexSet(sub, u.ambient_dim))
        if sub == 0:
            break
        sub = (sub - 1) & u.mask
    out.sort(key=lambda w: (len(w), w.members))
    return out


def compose(s, t, u) -> np.ndarray:
    """The vector ``s_u:t_{-u}``: ``s`` on ``u``, ``t`` elsewhere."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if s.shape != t.shape:
        raise ValueError(f"dimension mismatch: {s.shape} vs {t.shape}")
    u = as_index_set(u, t.shape[-1])
    y = t.copy()
    idx = list(u.axes)
    y[..., idx] = s[..., idx]
    return y


def compose3(r, s, t, u, w) -> np.ndarray:
    """The vector ``t_u:s_w:r_{-u-w}`` for disjoint ``u`` and ``w``."""
    r = np.asarray(r, dtype=float)
    N = r.shape[-1]
    u = as_index_set(u, N)
    w = as_index_set(w, N)
    if u & w:
        raise ValueError(f"overlapping subsets {u.members} and {w.members}")
    return compose(t, compose(s, r, w), u)


def corner_points(s, t) -> tuple[np.ndarray, np.ndarray]:
    """All 2**N corners ``s_v:t_{-v}`` with their signs ``(-1)**|v|``.

    Returns ``(points, signs)`` with ``points`` of shape ``(2**N, N)``.
    """
    s = as_point(s)
    t = as_point(t, s.size)
    subs = subsets(s.size)
    pts = np.stack([compose(s, t, v) for v in subs])
    signs = np.array([v.sign for v in subs], dtype=float)
    return pts, signs


def alternating_sum_check(M: int) -> float:
    """Sum of (-1)**m * C(M, m) for m = 0..M; zero for every M >= 1."""
    if M < 1:
        raise ValueError("M must be positive")
    return float(sum((-1) ** m * comb(M, m) for m in range(M + 1)))


def theta_product(theta: Sequence[float], u: MultiIndexSet) -> float:
    """prod_{i in u} theta_i (1 for the empty set)."""
    out = 1.0
    for a in u.axes:
        out *= float(theta[a])
    return out
