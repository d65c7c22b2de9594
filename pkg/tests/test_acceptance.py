"""Acceptance criteria, one test per criterion at its stated tolerance and runtime budget."""

import json
import time
from pathlib import Path

import numpy as np

from rsfields.fields import brownian_sheet
from rsfields.grid import GridPartition, cell_increments, rect_increment, sample
from rsfields.indexkit import nonempty_subsets
from rsfields.ou import (
    equivalence_check,
    homogeneous_solution_check,
    inv_lamperti,
    lamperti,
    langevin_residual,
    m_theta,
    m_theta_inv,
    ou_solve,
)
from rsfields.rsint import ibp_rhs, product_rule_check, rs_integral, substitute_derivative
from rsfields.smooth import coordinate_sum, exp_linear, random_smooth, separable
from rsfields.stats import binomial_bounds, empirical_cov, stationarity_test
from rsfields.triangle import box_integral, complement_integral, triangle_integral
from rsfields.variation import hk_variation, vitali_variation

ORACLES = json.loads((Path(__file__).parent / "oracles" / "oracle_values.json").read_text())

# node-pair families and shifts used for the frozen covariance oracle
FAMILIES = [
    ((0.25, 0.25), (0.25, 0.25)),
    ((0.25, 0.25), (0.5, 0.25)),
    ((0.25, 0.25), (0.25, 0.75)),
    ((0.25, 0.5), (0.75, 0.25)),
    ((0.125, 0.125), (0.625, 0.625)),
    ((0.5, 0.5), (0.5, 1.0)),
    ((0.0, 0.0), (0.25, 0.125)),
    ((0.375, 0.25), (0.125, 0.5)),
    ((0.0, 0.5), (1.0, 0.5)),
    ((0.25, 0.0), (0.25, 0.25)),
]
SHIFTS = [(0.0, 0.0), (0.5, 0.5), (1.0, 0.0), (0.0, 1.0), (0.75, 0.25)]

# cells per axis: (coarsest, levels) so the finest level is 128 for N=2 and 32 for N=3
LADDER = {2: (16, 4), 3: (4, 4)}
REL_TOL = 1e-3


def unit_smooth(N, rng):
    """Two separable terms whose factors have second derivatives of unit size on [0, 1]."""
    out = None
    for _ in range(2):
        axes = []
        for _ in range(N):
            kind = rng.integers(3)
            if kind == 0:
                axes.append([("exp", float(rng.uniform(-1, 1)), float(rng.uniform(-0.5, 0.5)))])
            elif kind == 1:
                axes.append([("sin", float(rng.uniform(0.5, 1.0)), float(rng.uniform(0, np.pi)))])
            else:
                axes.append([("pow", 1, 0.0)])
        term = separable(N, axes, float(rng.uniform(0.5, 2.0) * rng.choice([-1, 1])))
        out = term if out is None else out + term
    return out


def smooth_pairs(N, count, seed, make=unit_smooth):
    rng = np.random.default_rng(seed)
    return [(make(N, rng), make(N, rng), make(N, rng)) for _ in range(count)]


def magnitude(g, f, N, cells=32):
    """``sum |g(mid)| |Delta f|`` on a uniform grid: the scale of ``int g df`` without cancellation."""
    P = GridPartition.uniform(np.zeros(N), np.ones(N), cells)
    mids = np.stack(np.meshgrid(*P.midpoints(), indexing="ij"), axis=-1)
    return float(np.sum(np.abs(g(mids)) * np.abs(cell_increments(sample(f, P)))))


def relative_gaps(a, b, scale):
    return np.abs(np.asarray(a.values) - np.asarray(b.values)) / scale


def decreasing(gaps, floor=1e-12):
    return all(y < x or y < floor for x, y in zip(gaps, gaps[1:]))


def test_criterion_01_bracket_identity(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for k in range(50):
        N = (1, 2, 3)[k % 3]
        f = random_smooth(N, rng)
        lo = rng.uniform(-1, 1, N)
        hi = lo + rng.uniform(0.1, 1.5, N)
        exact = rect_increment(f, lo, hi)
        res = rs_integral(1.0, f, lo, hi, refinements=4, cells=4)
        err = np.max(np.abs(res.values - exact)) / max(abs(exact), 1e-300)
        worst = max(worst, float(err))
    elapsed = time.perf_counter() - start
    criterion(1, "bracket identity", worst <= 1e-12 and elapsed < 10,
              f"max rel err {worst:.2e}, {elapsed:.1f}s")


def test_criterion_02_integration_by_parts(criterion):
    start = time.perf_counter()
    worst, monotone = 0.0, True
    for N in (2, 3):
        cells, refinements = LADDER[N]
        lower, upper = np.zeros(N), np.ones(N)
        for f, g, _ in smooth_pairs(N, 20, 200 + N):
            lhs = rs_integral(f, g, lower, upper, refinements=refinements, cells=cells)
            rhs = ibp_rhs(f, g, lower, upper, refinements=refinements, cells=cells)
            gaps = relative_gaps(lhs, rhs, max(abs(lhs.value), magnitude(f, g, N)))
            worst = max(worst, float(gaps[-1]))
            monotone &= decreasing(gaps)
    elapsed = time.perf_counter() - start
    criterion(2, "integration by parts", worst <= REL_TOL and monotone and elapsed < 120,
              f"max rel gap {worst:.2e}, decreasing={monotone}, {elapsed:.1f}s")


def test_criterion_03_substitution_and_product_rule(criterion):
    start = time.perf_counter()
    worst, monotone = 0.0, True
    for N in (2, 3):
        cells, refinements = LADDER[N]
        lower, upper = np.zeros(N), np.ones(N)
        for f, g, h in smooth_pairs(N, 20, 200 + N):
            full = rs_integral(g, f, lower, upper, refinements=refinements, cells=cells)
            scale = max(abs(full.value), magnitude(g, f, N))
            for v in nonempty_subsets(N):
                sub = substitute_derivative(g, f.partial(v.members), lower, upper, v=v.members,
                                            refinements=refinements, cells=cells)
                gaps = relative_gaps(full, sub, scale)
                worst = max(worst, float(gaps[-1]))
                monotone &= decreasing(gaps)
            lhs, rhs = product_rule_check(h, f, g, lower, upper, refinements=refinements, cells=cells)
            gaps = relative_gaps(lhs, rhs, max(abs(lhs.value), magnitude(h, f * g, N)))
            worst = max(worst, float(gaps[-1]))
            monotone &= decreasing(gaps)
    elapsed = time.perf_counter() - start
    criterion(3, "derivative substitution and product rule",
              worst <= REL_TOL and monotone and elapsed < 120,
              f"max rel gap {worst:.2e}, decreasing={monotone}, {elapsed:.1f}s")


def random_apex(rng, N, orientation):
    while True:
        t = rng.uniform(-1, 1, N)
        if orientation * t.sum() > 0.05:
            return t


def test_criterion_04_triangle_additivity(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(404)
    worst_ratio = 0.0
    for N in (2, 3):
        refinements, cells = (4, 4) if N == 2 else (3, 4)
        for f, g, _ in smooth_pairs(N, 20, 400 + N, random_smooth):
            partials = {v.members: f.partial(v.members) for v in nonempty_subsets(N)}
            for orientation in (1, -1):
                for _ in range(10):
                    t = random_apex(rng, N, orientation)
                    R = box_integral(f, g, t, refinements, cells)
                    T = triangle_integral(f, g, t, refinements, cells, partials)
                    C = complement_integral(f, g, t, refinements, cells, partials)
                    bound = max(1e-6, 10 * (R.error_estimate + T.error_estimate + C.error_estimate))
                    worst_ratio = max(worst_ratio, abs(R.value - T.value - C.value) / bound)
    f, g = exp_linear([0.6, -0.4]), random_smooth(2, np.random.default_rng(5))
    zero = [triangle_integral(f, g, t).value for t in ([0.5, -0.5], [-0.3, 0.3], [0.2, 0.3, -0.5])]
    exact_zero = all(z == 0.0 for z in zero[:2]) and triangle_integral(
        exp_linear([0.6, -0.4, 0.2]), random_smooth(3, np.random.default_rng(6)), [0.2, 0.3, -0.5]).value == 0.0
    seq = [abs(triangle_integral(f, g, [0.5, -0.5 + d]).value) for d in (1e-1, 1e-2, 1e-3, 1e-4)]
    vanishing = decreasing(seq) and seq[-1] < 1e-3
    elapsed = time.perf_counter() - start
    criterion(4, "triangle additivity", worst_ratio <= 1.0 and exact_zero and vanishing and elapsed < 120,
              f"max gap/bound {worst_ratio:.2f}, zero at sum 0={exact_zero}, |int_T| -> {seq[-1]:.1e}, {elapsed:.1f}s")


def test_criterion_05_hk_variation(criterion):
    exact = (np.e - 1) * np.e + np.e * (np.e - 1) + (np.e - 1) ** 2
    est = hk_variation(exp_linear([1.0, 1.0]), [0, 0], [1, 1], refinements=5, cells=16)
    vit = vitali_variation(coordinate_sum(2), [0, 0], [1, 1], refinements=5, cells=16).value
    err = abs(est.value - exact)
    ok = est.partition_norm == 1 / 256 and err <= 1e-4 and abs(vit) <= 1e-14
    ok &= abs(exact - ORACLES["hk_exp"]) <= 1e-12
    criterion(5, "Hardy-Krause variation", ok, f"|HK - exact| = {err:.2e}, Vitali(t1+t2) = {vit:.1e}")


THETA = np.array([1.0, 1.0])
S_BAR = 7.0


def ou_ensemble(M, seed):
    # history and region share the 1/8 step, so [0,2] carries the 16x16 grid
    P = GridPartition.uniform([-S_BAR, -S_BAR], [2.0, 2.0], 72)
    W = brownian_sheet(P, M, seed)
    return ou_solve(W, THETA, truncation=S_BAR).base


def kernel_report(E):
    worst = 0.0
    for k, (s, t) in enumerate(FAMILIES):
        for h, want in zip(SHIFTS, ORACLES["ou_cov"][str(k)]):
            c, se = empirical_cov(E, np.add(s, h), np.add(t, h))
            worst = max(worst, abs(c - want) / se)
    return worst


def test_criterion_06_ou_stationarity(criterion):
    start = time.perf_counter()
    E = ou_ensemble(2000, seed=606)
    worst = kernel_report(E)
    rep = stationarity_test(E, SHIFTS[1:], FAMILIES, alpha=0.01)
    elapsed = time.perf_counter() - start
    max_z = max(abs(s.z) for s in rep.statistics)
    criterion(6, "OU stationarity", worst <= 4.0 and rep.passed and elapsed < 300,
              f"max |cov - kernel|/SE {worst:.2f}, stationarity max|z| {max_z:.2f} < {rep.threshold:.2f}, {elapsed:.1f}s")


LANGEVIN_PROBES = [[1, 1], [0.5, 0.25], [-1, 0.5], [-0.5, -0.75], [0.25, 1], [1, -1], [-1, -1], [0.75, 0.5],
                   [-0.25, 0.75], [0.5, -0.5]]


def test_criterion_07_langevin_residual(criterion):
    def G(x):  # dG = e^{u1+u2} du
        return np.expm1(x[..., 0]) * np.expm1(x[..., 1])

    residuals = []
    for cells in (32, 64, 128):
        P = GridPartition.uniform([-S_BAR, -S_BAR], [1.0, 1.0], cells)
        Gf = sample(G, P)
        X = ou_solve(Gf, THETA, truncation=S_BAR)
        residuals.append(max(langevin_residual(X, Gf, THETA, t) / abs(rect_increment(Gf, [0, 0], t))
                             for t in LANGEVIN_PROBES))
    variances = []
    for cells in (64, 128, 256):
        P = GridPartition.uniform([-S_BAR, -S_BAR], [1.0, 1.0], cells)
        W = brownian_sheet(P, 200, seed=707)
        X = ou_solve(W, THETA, truncation=S_BAR)
        variances.append(float(np.var(langevin_residual(X, W, THETA, [1.0, 1.0]))))
    ok = decreasing(residuals) and residuals[-1] <= 1e-2 and decreasing(variances)
    criterion(7, "Langevin residual", ok,
              "deterministic " + ", ".join(f"{r:.1e}" for r in residuals)
              + "; stochastic variance " + ", ".join(f"{v:.1e}" for v in variances))


def test_criterion_08_roundtrips(criterion):
    theta = np.array([1.0, 0.7])
    P = GridPartition.uniform([-8, -8], [2, 2], 80)
    X = sample(lambda x: np.sin(x[..., 0] + 2 * x[..., 1]) + x[..., 0] ** 2, P)
    exact_lamperti = all(np.array_equal(inv_lamperti(lamperti(X, th), th).values, X.values)
                         for th in ([1.0, 0.7], [0.3, 2.5], [4.0, 0.05]))
    G = sample(lambda x: np.sin(x[..., 0]) * np.cos(0.5 * x[..., 1]) + x[..., 0] * x[..., 1], P)
    Y = m_theta_inv(G, theta, truncation=8.0)
    nodes = GridPartition.uniform([-0.5, -0.5], [1.5, 1.5], 4)
    out = m_theta(Y, theta, nodes=nodes, cells=64).base
    rng = np.random.default_rng(808)
    worst = 0.0
    for _ in range(10):
        i, j = np.sort(rng.choice(5, 2, replace=False)), np.sort(rng.choice(5, 2, replace=False))
        s = [nodes.axes[0][i[0]], nodes.axes[1][j[0]]]
        t = [nodes.axes[0][i[1]], nodes.axes[1][j[1]]]
        want = rect_increment(G, s, t)
        worst = max(worst, abs(rect_increment(out, s, t) - want) / abs(want))
    diag = GridPartition.uniform([-1, -1], [1, 1], 8)
    Z = m_theta(Y, theta, nodes=diag, cells=32).base
    on_diag = max(abs(Z.at([a, -a])) for a in diag.axes[0])
    ok = exact_lamperti and worst <= 1e-2 and on_diag <= 1e-10
    criterion(8, "round trips", ok, f"Lamperti exact={exact_lamperti}, M-transform rel err {worst:.2e}, "
              f"diagonal {on_diag:.1e}")


def test_criterion_09_equivalence_and_homogeneous(criterion):
    theta = np.array([1.0, 0.5])
    P = GridPartition.uniform([-1, -1], [1, 1], 16)
    X = sample(lambda x: np.sin(x[..., 0] + 2 * x[..., 1]) * np.exp(-x[..., 1]), P)
    nodes = P.nodes()
    weight = np.exp(-(nodes @ theta))
    probes = [([-1, -1], [1, 1]), ([-0.5, 0.0], [0.75, 0.5]), ([0, 0], [0.25, 1.0]), ([-1, 0.25], [0.5, 0.75])]
    perturbations = [np.ones(P.shape), np.cos(3 * nodes[..., 0]), np.exp(nodes[..., 1]) - nodes[..., 1] ** 3,
                     np.sin(nodes[..., 0]) + np.cosh(nodes[..., 1])]
    accepts = all(equivalence_check(X, X.with_values(X.values + weight * h), theta, probes, tol=1e-10)
                  for h in perturbations)
    bump = X.with_values(X.values + 1e-2 * nodes[..., 0] * nodes[..., 1])
    rejects = not equivalence_check(X, bump, theta, probes, tol=1e-4)
    rng = np.random.default_rng(909)
    worst = 0.0
    for _ in range(10):
        N = int(rng.integers(2, 4))
        th = rng.uniform(0.3, 2.0, N)
        parts = {}
        for u in nonempty_subsets(N):
            if len(u) < N:
                h = random_smooth(len(u), rng)
                parts[u.members] = h
        parts[()] = lambda y, c=float(rng.normal()): c
        worst = max(worst, homogeneous_solution_check(parts, th, np.zeros(N), np.ones(N), refinements=2))
    ok = accepts and rejects and worst <= 1e-4
    criterion(9, "equivalence and homogeneous solutions", ok,
              f"accepts={accepts}, rejects eps=1e-2={rejects}, max homogeneous residual {worst:.1e}")


def test_criterion_10_calibration(criterion):
    start = time.perf_counter()
    failures = 0
    for seed in range(50):
        E = ou_ensemble(2000, seed=10_000 + seed)
        failures += not stationarity_test(E, SHIFTS[1:], FAMILIES, alpha=0.01).passed
    lo, hi = binomial_bounds(50, 0.01, 0.95)
    elapsed = time.perf_counter() - start
    criterion(10, "statistical calibration", lo <= failures <= hi,
              f"{failures}/50 rejections, binomial 95% band [{lo}, {hi}], {elapsed:.1f}s")
