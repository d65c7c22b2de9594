"""Command-line front end: ``rsfields {integrate,simulate,verify,report}``.

Settings come from a flat ``key = value`` config file (``--config``) and
command-line flags; flags win. Exit codes: 0 success, 1 verification
failure or non-finite result, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fields, ou, rsint, smooth, stats, triangle
from .grid import GridPartition, _atomic_write, load_field, rect_increment, sample

OUTPUT_ENV = "RSFIELDS_OUTPUT"
DEFAULT_OUTPUT = "rsfields-out"

DEFAULTS = {
    "kind": "box",
    "f": "product",
    "g": "one",
    "N": 2,
    "lower": "0,0",
    "upper": "1,1",
    "apex": "1,1",
    "v": "1",
    "field": None,
    "refinements": 4,
    "cells": 8,
    "tolerance": 1e-6,
    "driver": "bsheet",
    "theta": "1,1",
    "hurst": None,
    "M": 200,
    "seed": 0,
    "truncation": 7.0,
    "history_step": 0.25,
    "grid_cells": 16,
    "pipeline": "ou",
    "suite": "identities",
    "alpha": 0.01,
    "input": None,
    "jobs": 1,
}

INTS = {"N", "refinements", "cells", "M", "seed", "grid_cells", "jobs"}
FLOATS = {"tolerance", "truncation", "history_step", "alpha"}


class ConfigError(ValueError):
    pass


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _coerce(key: str, value):
    if value is None:
        return None
    try:
        if key in INTS:
            return int(value)
        if key in FLOATS:
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}") from None
    return value


def merge(config_file, flags: dict) -> dict:
    cfg = dict(DEFAULTS)
    if config_file:
        try:
            cfg.update(read_config(config_file))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    cfg.update({k: v for k, v in flags.items() if v is not None})
    return {k: _coerce(k, v) for k, v in cfg.items()}


def parse_vector(text, name: str, N: int | None = None) -> np.ndarray:
    try:
        vec = np.array([float(x) for x in str(text).replace(";", ",").split(",") if x.strip()])
    except ValueError:
        raise ConfigError(f"{name}: expected comma-separated numbers, got {text!r}") from None
    if N is not None and vec.size == 1:
        vec = np.full(N, vec[0])
    if vec.size == 0 or (N is not None and vec.size != N) or not np.all(np.isfinite(vec)):
        raise ConfigError(f"{name}: expected {N or 'some'} finite numbers, got {text!r}")
    return vec


def builtin(name: str, N: int):
    """Named smooth test integrands."""
    table = {
        "one": lambda: smooth.constant(N, 1.0),
        "product": lambda: smooth.coordinate_product(N),
        "sum": lambda: smooth.coordinate_sum(N),
        "exp": lambda: smooth.exp_linear(np.ones(N)),
        "sin": lambda: smooth.separable(N, [[("sin", 1.0, 0.0)]] * N, name="prod(sin)"),
    }
    if name not in table:
        raise ConfigError(f"unknown integrand {name!r}; choose from {sorted(table)}")
    return table[name]()


def output_dir(cfg: dict) -> Path:
    return Path(cfg.get("output") or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


def write_json(path: Path, data) -> None:
    _atomic_write(path, json.dumps(data, indent=2, sort_keys=True, default=_plain) + "\n")


def _plain(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(type(x).__name__)


# ---------------------------------------------------------------------------
# integrate


def cmd_integrate(cfg: dict) -> int:
    N = cfg["N"]
    kind = cfg["kind"]
    ref, cells = cfg["refinements"], cfg["cells"]
    f = builtin(cfg["f"], N)
    g = builtin(cfg["g"], N)
    if cfg.get("field"):
        f = load_field(cfg["field"])
        N = f.dim
    report = {"kind": kind, "f": cfg["f"] if not cfg.get("field") else str(cfg["field"]), "g": cfg["g"]}
    status = 0
    if kind in ("box", "mixed"):
        lo = parse_vector(cfg["lower"], "lower", N)
        hi = parse_vector(cfg["upper"], "upper", N)
        if kind == "box":
            res = rsint.rs_integral(g, f, lo, hi, refinements=ref, cells=cells)
            report["bracket"] = rect_increment(f, lo, hi)
        else:
            v = [int(x) for x in parse_vector(cfg["v"], "v")]
            res = rsint.mixed_integral(g, f, v, lo, hi, refinements=ref, cells=cells)
        report["result"] = res.to_json()
    elif kind in ("triangle", "complement", "additivity"):
        apex = parse_vector(cfg["apex"], "apex", N)
        T = triangle.triangle_integral(g, f, apex, ref, cells)
        C = triangle.complement_integral(g, f, apex, ref, cells)
        R = triangle.box_integral(g, f, apex, ref, cells)
        chosen = {"triangle": T, "complement": C, "additivity": None}[kind]
        if chosen is not None:
            report["result"] = chosen.to_json()
        else:
            gap = abs(R.value - T.value - C.value)
            bound = max(cfg["tolerance"], 10.0 * (R.error_estimate + T.error_estimate + C.error_estimate))
            report.update(box=R.to_json(), triangle=T.to_json(), complement=C.to_json(),
                          gap=gap, bound=bound, passed=gap <= bound)
            status = 0 if gap <= bound else 1
    else:
        raise ConfigError(f"unknown integral kind {kind!r}")
    value = report.get("result", {}).get("value", 0.0)
    if not math.isfinite(value):
        status = 1
    out = output_dir(cfg)
    write_json(out / f"integral-{kind}.json", report)
    print(json.dumps({k: v for k, v in report.items() if k in ("kind", "gap", "bound", "passed", "bracket")}
                     | ({"value": value} if "result" in report else {}), default=_plain))
    return status


# ---------------------------------------------------------------------------
# simulate


def simulation_partition(cfg: dict, N: int) -> tuple[GridPartition, float, float]:
    """Grid with a coarse history on ``[-truncation, lower]`` and a fine region above."""
    lo = parse_vector(cfg["lower"], "lower", N)
    hi = parse_vector(cfg["upper"], "upper", N)
    cells = cfg["grid_cells"]
    s_bar = cfg["truncation"]
    step = cfg["history_step"]
    if cells < 2:
        raise ConfigError("grid_cells must be at least 2")
    if np.any(hi <= lo) or s_bar <= 0 or step <= 0:
        raise ConfigError("need lower < upper, truncation > 0 and history_step > 0")
    axes = []
    for a, b in zip(lo, hi):
        fine = np.linspace(a, b, cells + 1)
        n_hist = int(round((a + s_bar) / step))
        if n_hist < 0 or not math.isclose(-s_bar + n_hist * step, a, abs_tol=1e-9):
            raise ConfigError("lower + truncation must be a multiple of history_step")
        hist = -s_bar + step * np.arange(n_hist)
        axes.append(np.concatenate([hist, fine]))
    return GridPartition(tuple(axes)), float(s_bar), float(np.min(lo))


def _region(E: fields.FieldEnsemble, lower: np.ndarray) -> fields.FieldEnsemble:
    P = E.partition
    start = [P.axis_index(m, lower[m]) for m in range(P.dim)]
    Q = GridPartition(tuple(a[k:] for a, k in zip(P.axes, start)))
    vals = E.values[(slice(None),) + tuple(slice(k, None) for k in start)]
    return fields.FieldEnsemble(Q, vals, E.seed, dict(E.meta))


def simulate(cfg: dict) -> dict[str, fields.FieldEnsemble]:
    theta = parse_vector(cfg["theta"], "theta")
    N = theta.size
    try:
        theta = fields.theta_vector(theta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg["M"] < 1:
        raise ConfigError("M must be at least 1")
    P, s_bar, _ = simulation_partition(cfg, N)
    lower = parse_vector(cfg["lower"], "lower", N)
    seed, M, jobs = cfg["seed"], cfg["M"], cfg["jobs"]
    driver = cfg["driver"]
    if driver == "bsheet":
        G = fields.brownian_sheet(P, M, seed, jobs=jobs)
    elif driver == "fbm":
        if not cfg.get("hurst"):
            raise ConfigError("the fbm driver needs hurst")
        try:
            H = fields.hurst_vector(parse_vector(cfg["hurst"], "hurst", N))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        G = fields.fbm_sheet(H, P, M, seed, jobs=jobs)
    elif driver == "smooth":
        G = fields.FieldEnsemble.from_field(sample(smooth.exp_linear(np.full(N, 0.5)), P), M)
        G.meta["driver"] = "smooth"
    else:
        raise ConfigError(f"unknown driver {driver!r}")
    G.meta.update(theta=theta.tolist(), truncation=s_bar)
    out = {"driver": G}
    pipeline = cfg["pipeline"]
    if pipeline not in ("driver", "ou", "lamperti", "m-theta"):
        raise ConfigError(f"unknown pipeline {pipeline!r}")
    if pipeline != "driver":
        X = ou.ou_solve(G, theta, s_bar).base
        X.meta.update(theta=theta.tolist(), truncation=s_bar, kind="ou-solution")
        out["ou"] = _region(X, lower)
        if pipeline in ("lamperti", "m-theta"):
            out["lamperti"] = ou.lamperti(out["ou"], theta).base
        if pipeline == "m-theta":
            Y = ou.m_theta_inv(G, theta, s_bar)
            out["m-theta"] = ou.m_theta(Y, theta).base
    return out


def cmd_simulate(cfg: dict) -> int:
    ens = simulate(cfg)
    root = output_dir(cfg)
    for name, E in ens.items():
        E.save(root / name)
    summary = {name: {"M": E.M, "shape": list(E.partition.shape), "seed": E.seed} for name, E in ens.items()}
    write_json(root / "simulate.json", {"config": _public(cfg), "outputs": summary})
    print(json.dumps(summary))
    return 0


def _public(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if k not in ("jobs", "output")}


# ---------------------------------------------------------------------------
# verify


@dataclass
class Check:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.tolerance)

    def to_json(self) -> dict:
        return {"name": self.name, "error": self.error, "tolerance": self.tolerance, "pass": self.passed}


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-12)


def suite_identities(cfg: dict) -> list[Check]:
    rng = fields.substream(cfg["seed"], "verify-identities")
    checks = []
    lo, hi = np.zeros(2), np.ones(2)
    for k in range(3):
        f = smooth.random_smooth(2, rng)
        g = smooth.random_smooth(2, rng)
        one = rsint.rs_integral(1.0, f, lo, hi, refinements=3)
        checks.append(Check(f"bracket[{k}]", _rel(one.value, rect_increment(f, lo, hi)), 1e-12))
        lhs = rsint.rs_integral(f, g, lo, hi, refinements=5)
        rhs = rsint.ibp_rhs(f, g, lo, hi, refinements=5)
        checks.append(Check(f"integration-by-parts[{k}]", _rel(rhs.value, lhs.value), 1e-3))
        a, b = rsint.product_rule_check(smooth.constant(2, 1.0) + f, f, g, lo, hi, refinements=5)
        checks.append(Check(f"product-rule[{k}]", _rel(b.value, a.value), 1e-3))
        apex = rng.uniform(-1, 1, 2)
        T = triangle.triangle_integral(f, g, apex, 4)
        C = triangle.complement_integral(f, g, apex, 4)
        R = triangle.box_integral(f, g, apex, 4)
        bound = max(1e-6, 10 * (T.error_estimate + C.error_estimate + R.error_estimate))
        checks.append(Check(f"triangle-additivity[{k}]", abs(R.value - T.value - C.value), bound))
    return checks


def suite_roundtrip(cfg: dict) -> list[Check]:
    theta = np.array([1.0, 0.7])
    P = GridPartition.uniform([-8, -8], [2, 2], 80)
    G = sample(smooth.coordinate_product(2), P)
    X = sample(smooth.exp_linear([0.3, -0.2]) + smooth.coordinate(2, 1), P)
    back = ou.inv_lamperti(ou.lamperti(X, theta), theta).base
    checks = [Check("lamperti-roundtrip", float(np.max(np.abs(back.values - X.values))), 0.0)]
    Y = ou.m_theta_inv(G, theta, truncation=8.0)
    Q = GridPartition.uniform([-1, -1], [1.5, 1.5], 10)
    Gt = ou.m_theta(Y, theta, nodes=Q).base
    for s, t in [((0.25, 0.5), (1.5, 1.0)), ((-0.75, 1.0), (0.75, 1.5)), ((1.25, 0.75), (0.25, -0.5))]:
        checks.append(Check(f"m-theta-increment{s}->{t}", _rel(rect_increment(Gt, s, t), rect_increment(G, s, t)), 1e-2))
    diag = max(abs(Gt.at((a, -a))) for a in Q.axes[0] if Q.is_node((-a, a)))
    checks.append(Check("m-theta-zero-diagonal", diag, 1e-10))
    return checks


def suite_langevin(cfg: dict) -> list[Check]:
    theta = np.array([1.0, 1.0])
    P = GridPartition.uniform([-8, -8], [1, 1], 9 * 32)
    G = sample(lambda x: np.expm1(x[..., 0]) * np.expm1(x[..., 1]), P)
    X = ou.ou_solve(G, theta, truncation=8.0)
    checks = []
    for t in [(0.5, 0.5), (1.0, 1.0), (0.25, 0.75)]:
        res = ou.langevin_residual(X, G, theta, t)
        checks.append(Check(f"langevin{t}", res / abs(rect_increment(G, (0, 0), t)), 1e-2))
    return checks


def default_probes(P: GridPartition):
    """Node pairs and shifts inside the nonnegative uniform block of ``P``."""
    lows, steps, counts = [], [], []
    for a in P.axes:
        start = int(np.searchsorted(a, 0.0)) if a[-1] > 0 and a[0] < 0 else 0
        block = a[start:]
        lows.append(block[0])
        steps.append(block[1] - block[0])
        counts.append(block.size - 1)
    lo, dx = np.array(lows), np.array(steps)
    n = min(counts)
    q = max(n // 4, 1)
    pairs = [(lo + q * dx, lo + q * dx), (lo + q * dx, lo + 2 * q * dx), (lo, lo + q * dx * np.array([1.0] + [0.0] * (P.dim - 1)))]
    shifts = [q * dx, 2 * q * dx, q * dx * np.array([0.0] * (P.dim - 1) + [2.0])]
    return pairs, shifts


def suite_stationarity(cfg: dict) -> list[Check]:
    if cfg.get("input"):
        E = fields.FieldEnsemble.load(cfg["input"])
    else:
        E = simulate({**cfg, "pipeline": "ou"})["ou"]
    pairs, shifts = default_probes(E.partition)
    report = stats.stationarity_test(E, shifts, pairs, cfg["alpha"])
    print(report.to_table())
    return [Check(f"stationarity {s.probe}", abs(s.z), report.threshold) for s in report.statistics]


SUITES = {
    "identities": suite_identities,
    "roundtrip": suite_roundtrip,
    "langevin": suite_langevin,
    "stationarity": suite_stationarity,
}


def cmd_verify(cfg: dict) -> int:
    names = list(SUITES) if cfg["suite"] == "all" else [s.strip() for s in cfg["suite"].split(",")]
    for name in names:
        if name not in SUITES:
            raise ConfigError(f"unknown suite {name!r}; choose from {sorted(SUITES)} or all")
    results = {name: [c.to_json() for c in SUITES[name](cfg)] for name in names}
    ok = True
    for name, checks in results.items():
        for c in checks:
            mark = "PASS" if c["pass"] else "FAIL"
            print(f"{mark} {name}: {c['name']} error={c['error']:.3g} tol={c['tolerance']:.3g}")
            ok &= c["pass"]
    write_json(output_dir(cfg) / "verify.json", {"suites": results, "pass": ok})
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# report


def cmd_report(cfg: dict) -> int:
    path = Path(cfg.get("input") or output_dir(cfg))
    if (path / "manifest.json").exists():
        E = fields.FieldEnsemble.load(path)
        P = E.partition
        mid = tuple(a[a.size // 2] for a in P.axes)
        top = tuple(a[-1] for a in P.axes)
        rows = [f"ensemble {path}: driver={E.meta.get('driver')} M={E.M} seed={E.seed} grid={P.shape}"]
        for x in (mid, top):
            vals = E.node_values(x)
            rows.append(f"  node {tuple(float(c) for c in x)}: mean={vals.mean():.5g} var={vals.var(ddof=1) if E.M > 1 else 0.0:.5g}")
        print("\n".join(rows))
        return 0
    reports = sorted(path.glob("*.json")) if path.is_dir() else [path]
    if not reports:
        raise ConfigError(f"nothing to report in {path}")
    for rp in reports:
        data = json.loads(rp.read_text())
        print(f"{rp.name}:")
        if "suites" in data:
            for name, checks in data["suites"].items():
                n_ok = sum(c["pass"] for c in checks)
                print(f"  {name}: {n_ok}/{len(checks)} passed")
        else:
            for k, v in data.items():
                if not isinstance(v, (dict, list)):
                    print(f"  {k}: {v}")
    return 0


COMMANDS = {"integrate": cmd_integrate, "simulate": cmd_simulate, "verify": cmd_verify, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--output", help=f"output directory (default ${OUTPUT_ENV} or {DEFAULT_OUTPUT})")
    common.add_argument("--jobs", type=int, help="worker threads")
    common.add_argument("--seed", type=int)
    parser = argparse.ArgumentParser(prog="rsfields", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("integrate", parents=[common], help="evaluate a named integral")
    p.add_argument("--kind", choices=["box", "mixed", "triangle", "complement", "additivity"])
    p.add_argument("--f", help="integrator (one, product, sum, exp, sin)")
    p.add_argument("--g", help="integrand (one, product, sum, exp, sin)")
    p.add_argument("--N", type=int)
    p.add_argument("--lower")
    p.add_argument("--upper")
    p.add_argument("--apex")
    p.add_argument("--v", help="1-based coordinates of a mixed integral")
    p.add_argument("--field", help="GridField CSV to use as integrator")
    p.add_argument("--refinements", type=int)
    p.add_argument("--cells", type=int)
    p.add_argument("--tolerance", type=float)

    def sim_args(p):
        p.add_argument("--driver", choices=["bsheet", "fbm", "smooth"])
        p.add_argument("--theta")
        p.add_argument("--hurst")
        p.add_argument("--M", type=int)
        p.add_argument("--truncation", type=float)
        p.add_argument("--history-step", dest="history_step", type=float)
        p.add_argument("--grid-cells", dest="grid_cells", type=int)
        p.add_argument("--lower")
        p.add_argument("--upper")

    p = sub.add_parser("simulate", parents=[common], help="generate driver and OU ensembles")
    sim_args(p)
    p.add_argument("--pipeline", choices=["driver", "ou", "lamperti", "m-theta"])

    p = sub.add_parser("verify", parents=[common], help="run verification suites")
    sim_args(p)
    p.add_argument("--suite", help="identities, roundtrip, langevin, stationarity or all")
    p.add_argument("--alpha", type=float)
    p.add_argument("--input", help="ensemble directory to test")

    p = sub.add_parser("report", parents=[common], help="summarize outputs")
    p.add_argument("--input", help="ensemble directory, report JSON or output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        cfg = merge(args.config, flags)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"rsfields: configuration error: {exc}", file=sys.stderr)
        return 2
    except FloatingPointError as exc:
        print(f"rsfields: non-finite result: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"rsfields: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
