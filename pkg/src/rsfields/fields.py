"""Driver random fields and checks on the driver class.

Every ensemble stores its values as one array of shape ``(M,) + grid shape``
together with the seed it was drawn from. Random numbers come from
counter-based Philox streams keyed by ``(seed, stream name, chunk)``, so a
rerun with the same seed is bit-identical regardless of the number of
worker threads.
"""

from __future__ import annotations

import json
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import GridField, GridPartition, _atomic_write
from .indexkit import as_point, corner_points
from .rsint import rs_integral
from .smooth import exp_linear
from .stats import ProbeStat, TestReport, paired_test, z_score

MAX_DENSE_NODES = 4096
JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8, 1e-6)
CHUNK = 256


class CovarianceError(ValueError):
    """The covariance matrix could not be factorized even with jitter."""


def _vector(x, N: int | None) -> np.ndarray:
    if N is not None and np.ndim(x) == 0:
        return np.full(N, float(x))
    return as_point(x, N)


def theta_vector(theta, N: int | None = None) -> np.ndarray:
    th = _vector(theta, N)
    if np.any(th <= 0):
        raise ValueError(f"theta components must be positive, got {th.tolist()}")
    return th


def hurst_vector(hurst, N: int | None = None) -> np.ndarray:
    H = _vector(hurst, N)
    if np.any(H <= 0) or np.any(H >= 1):
        raise ValueError(f"Hurst indices must lie in (0, 1), got {H.tolist()}")
    return H


def substream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Philox generator for the named sub-stream ``index`` of ``seed``."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode()), int(index)])
    return np.random.Generator(np.random.Philox(ss))


def _chunked(M: int, seed: int, name: str, draw, jobs: int = 1) -> np.ndarray:
    """Run ``draw(rng, m)`` over fixed chunks of replications and stack the results."""
    sizes = [min(CHUNK, M - k) for k in range(0, M, CHUNK)]
    tasks = [(substream(seed, name, i), m) for i, m in enumerate(sizes)]
    if jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(lambda a: draw(*a), tasks))
    else:
        parts = [draw(rng, m) for rng, m in tasks]
    return np.concatenate(parts, axis=0)


@dataclass
class FieldEnsemble:
    """``M`` replications of a field on one shared partition."""

    partition: GridPartition
    values: np.ndarray
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != self.partition.dim + 1 or v.shape[1:] != self.partition.shape:
            raise ValueError(f"values shape {v.shape} does not match (M,) + {self.partition.shape}")
        if v.shape[0] < 1:
            raise ValueError("an ensemble needs at least one replication")
        if not np.all(np.isfinite(v)):
            raise ValueError("ensemble values must be finite")
        v.setflags(write=False)
        self.values = v

    @classmethod
    def from_field(cls, F: GridField, M: int = 1) -> "FieldEnsemble":
        return cls(F.partition, np.broadcast_to(F.values, (M,) + F.values.shape), None, dict(F.meta))

    @property
    def M(self) -> int:
        return self.values.shape[0]

    def __len__(self) -> int:
        return self.M

    def __getitem__(self, k: int) -> GridField:
        return GridField(self.partition, self.values[k], {**self.meta, "replication": int(k)})

    def __iter__(self):
        return (self[k] for k in range(self.M))

    def with_values(self, values, **meta) -> "FieldEnsemble":
        return FieldEnsemble(self.partition, values, self.seed, {**self.meta, **meta})

    def node_values(self, x) -> np.ndarray:
        """Values of every replication at the node ``x``."""
        return self.values[(slice(None),) + self.partition.node_index(x)]

    def increments(self, s, t) -> np.ndarray:
        """``[X_k]_s^t`` for every replication; corners must be grid nodes."""
        s = as_point(s, self.partition.dim)
        t = as_point(t, self.partition.dim)
        if np.any(s == t):
            return np.zeros(self.M)
        pts, signs = corner_points(s, t)
        return sum(sg * self.node_values(p) for p, sg in zip(pts, signs))

    def save(self, directory) -> Path:
        """Write one CSV per replication plus ``manifest.json``."""
        d = Path(directory)
        nodes = self.partition.nodes().reshape(-1, self.partition.dim)
        coords = [",".join(repr(float(c)) for c in p) for p in nodes]
        head = ",".join([f"t{m + 1}" for m in range(self.partition.dim)] + ["value"])
        width = max(5, len(str(self.M - 1)))
        files = []
        for k in range(self.M):
            name = f"field_{k:0{width}d}.csv"
            body = [head] + [c + "," + repr(float(v)) for c, v in zip(coords, self.values[k].reshape(-1))]
            _atomic_write(d / name, "\n".join(body) + "\n")
            files.append(name)
        manifest = {**self.partition.to_json(), "seed": self.seed, "M": self.M, "meta": self.meta, "files": files}
        _atomic_write(d / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable) + "\n")
        return d

    @classmethod
    def load(cls, directory) -> "FieldEnsemble":
        d = Path(directory)
        man = json.loads((d / "manifest.json").read_text())
        P = GridPartition.from_json(man)
        vals = []
        for name in man["files"]:
            data = np.loadtxt(d / name, delimiter=",", skiprows=1, ndmin=2)
            if data.shape[0] != P.size:
                raise ValueError(f"{name}: {data.shape[0]} rows for a grid of {P.size} nodes")
            vals.append(data[:, -1].reshape(P.shape))
        return cls(P, np.stack(vals), man.get("seed"), man.get("meta", {}))


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _cholesky(C: np.ndarray) -> np.ndarray:
    scale = float(np.mean(np.diag(C))) if C.size else 0.0
    for jitter in JITTER_LADDER:
        try:
            return np.linalg.cholesky(C + jitter * scale * np.eye(C.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise CovarianceError("covariance is not positive semidefinite on the grid nodes")


def gaussian_field(cov, P: GridPartition, M: int, seed: int, name: str = "gaussian",
                   meta: dict | None = None, jobs: int = 1) -> FieldEnsemble:
    """Exact mean-zero Gaussian fields on the nodes of ``P``.

    ``cov(s, t)`` takes broadcastable point arrays of shape ``(..., N)``.
    Nodes with zero variance are set to exactly 0; the rest are sampled
    through a dense Cholesky factor with diagonal jitter if needed.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    if P.size > MAX_DENSE_NODES:
        raise ValueError(f"dense sampling is capped at {MAX_DENSE_NODES} nodes, grid has {P.size}")
    X = P.nodes().reshape(-1, P.dim)
    C = np.asarray(cov(X[:, None, :], X[None, :, :]), dtype=float)
    C = np.broadcast_to(C, (X.shape[0],) * 2)
    if not np.all(np.isfinite(C)):
        raise CovarianceError("covariance returned non-finite values")
    if np.max(np.abs(C - C.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(C))):
        raise CovarianceError("covariance is not symmetric")
    d = np.diag(C)
    if np.any(d < -1e-12 * max(1.0, float(np.max(np.abs(d))))):
        raise CovarianceError("covariance has negative variances")
    live = np.flatnonzero(d > 1e-14 * max(float(np.max(d, initial=0.0)), 1e-300))
    out_meta = {"driver": name, **(meta or {})}
    if live.size == 0:
        return FieldEnsemble(P, np.zeros((M,) + P.shape), seed, out_meta)
    L = _cholesky(C[np.ix_(live, live)])

    def draw(rng, m):
        z = rng.standard_normal((m, live.size))
        out = np.zeros((m, X.shape[0]))
        out[:, live] = z @ L.T
        return out

    vals = _chunked(M, seed, name, draw, jobs)
    return FieldEnsemble(P, vals.reshape((M,) + P.shape), seed, out_meta)


def brownian_cov(s, t) -> np.ndarray:
    """Signed-quadrant Brownian sheet covariance ``prod_i min(|s_i|, |t_i|)`` on
    matching signs, 0 otherwise."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    same = np.sign(s) == np.sign(t)
    return np.prod(np.where(same, np.minimum(np.abs(s), np.abs(t)), 0.0), axis=-1)


def fbm_cov(H):
    H = np.asarray(H, dtype=float)

    def cov(s, t):
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        return np.prod(0.5 * (np.abs(s) ** (2 * H) + np.abs(t) ** (2 * H) - np.abs(t - s) ** (2 * H)), axis=-1)

    return cov


def _with_origin(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Axis augmented with 0, positions of the original breakpoints, index of 0."""
    aug = np.union1d(a, [0.0])
    pos = np.searchsorted(aug, a)
    return aug, pos, int(np.searchsorted(aug, 0.0))


def brownian_sheet(P: GridPartition, M: int, seed: int, method: str = "increments",
                   jobs: int = 1) -> FieldEnsemble:
    """Two-sided Brownian sheet, zero on the coordinate hyperplanes.

    ``method="increments"`` sums independent ``N(0, cell volume)`` cell
    masses outward from the origin (exact at the nodes, any grid size).
    ``method="dense"`` factorizes the covariance instead.
    """
    meta = {"driver": "bsheet"}
    if method == "dense":
        return gaussian_field(brownian_cov, P, M, seed, "bsheet", jobs=jobs)
    if method != "increments":
        raise ValueError(f"unknown method {method!r}")
    aug = [_with_origin(a) for a in P.axes]
    vol = np.ones(())
    for a, _, _ in aug:
        vol = np.multiply.outer(vol, np.diff(a))
    sd = np.sqrt(vol)

    def draw(rng, m):
        W = rng.standard_normal((m,) + sd.shape) * sd
        for ax, (_, pos, zero) in enumerate(aug):
            axis = ax + 1
            W = np.cumsum(W, axis=axis)
            pad = [(0, 0)] * W.ndim
            pad[axis] = (1, 0)
            W = np.pad(W, pad)
            W = W - np.take(W, [zero], axis=axis)
            W = np.take(W, pos, axis=axis)
        return W

    vals = _chunked(M, seed, "bsheet", draw, jobs)
    return FieldEnsemble(P, vals, seed, meta)


def fbm_sheet(H, P: GridPartition, M: int, seed: int, jobs: int = 1) -> FieldEnsemble:
    """Anisotropic fractional Brownian sheet with tensor-product fBm covariance."""
    H = hurst_vector(H, P.dim)
    return gaussian_field(fbm_cov(H), P, M, seed, "fbm", {"hurst": H.tolist()}, jobs)


def check_stationary_increments(E: FieldEnsemble, shifts, probes, alpha: float = 0.01) -> TestReport:
    """Compare mean and variance of ``[X]_{s+h}^{t+h}`` with those of ``[X]_s^t``.

    Uses paired differences over replications, so the deterministic part of
    a field is compared exactly.
    """
    report = TestReport("stationary-increments", alpha)
    N = E.partition.dim
    for s, t in probes:
        s = as_point(s, N)
        t = as_point(t, N)
        base = E.increments(s, t)
        for h in shifts:
            h = as_point(h, N)
            moved = E.increments(s + h, t + h)
            tag = f"[{s.tolist()},{t.tolist()}]+{h.tolist()}"
            diff, se = paired_test(moved, base)
            report.statistics.append(ProbeStat(tag + " mean", float(moved.mean()), float(base.mean()), se,
                                               z_score(diff, se)))
            sq_diff, sq_se = paired_test((moved - moved.mean()) ** 2, (base - base.mean()) ** 2)
            report.statistics.append(ProbeStat(tag + " var", float(moved.var()), float(base.var()), sq_se,
                                               z_score(sq_diff, sq_se)))
    return report


@dataclass
class TruncationReport:
    levels: list[float]
    values: list[float]

    @property
    def differences(self) -> list[float]:
        return [b - a for a, b in zip(self.values, self.values[1:])]


def truncated_integral(G, theta, t, s_bar: float) -> float:
    """``int_{-s_bar}^{t} e^{theta.u} dG(u)`` as one midpoint sum on the field's grid."""
    theta = theta_vector(theta)
    t = as_point(t, theta.size)
    lower = np.full(theta.size, -float(s_bar))
    if np.any(t <= lower):
        return 0.0
    if isinstance(G, GridField) and not (G.partition.contains(lower) and G.partition.contains(t)):
        raise ValueError(f"grid does not cover [{-s_bar}, {t.tolist()}]")
    return rs_integral(exp_linear(theta), G, lower, t, refinements=1).value


def g_theta_truncation_probe(G, theta, t, s_levels) -> TruncationReport:
    """Truncated integrals at increasing truncation levels."""
    levels = [float(s) for s in s_levels]
    return TruncationReport(levels, [truncated_integral(G, theta, t, s) for s in levels])


def zero_plane_correction(G: GridField) -> np.ndarray:
    """Node values of ``F(t) = (1/N) sum_l G(t_{-l} : -sum_{j != l} t_j)``.

    Each term ignores one coordinate, so ``F`` has zero rectangular
    increments, and on ``sum(t) = 0`` every term equals ``G(t)``.
    """
    P = G.partition
    nodes = P.nodes()
    total = nodes.sum(axis=-1)
    acc = np.zeros(P.shape)
    for l in range(P.dim):
        pts = nodes.copy()
        pts[..., l] = nodes[..., l] - total
        try:
            acc = acc + G(pts)
        except ValueError:
            raise ValueError("the grid does not contain the reflections needed to represent sum(t) = 0") from None
    return acc / P.dim


def g_theta_zero_normalize(G: GridField) -> GridField:
    """Subtract a zero-increment field so the result vanishes on ``sum(t) = 0``."""
    return G.with_values(G.values - zero_plane_correction(G), normalized=True)


def smooth_driver(fn, P: GridPartition) -> GridField:
    """Deterministic driver sampled from a callable."""
    vals = np.broadcast_to(np.asarray(fn(P.nodes()), dtype=float), P.shape)
    return GridField(P, vals, {"driver": getattr(fn, "name", "smooth")})
