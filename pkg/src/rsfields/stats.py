"""Second-order ensemble statistics: covariances, stationarity and scaling tests.

All tests are two-sided z-tests with a Bonferroni correction over the
probes of one report. Standard errors come from the delete-one jackknife,
which accounts for the dependence between estimates computed from the same
replications.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

MIN_REPLICATIONS = 30


@dataclass
class ProbeStat:
    probe: str
    observed: float
    expected: float
    se: float
    z: float


@dataclass
class TestReport:
    name: str
    alpha: float
    statistics: list[ProbeStat] = field(default_factory=list)

    __test__ = False  # not a pytest class

    @property
    def threshold(self) -> float:
        m = max(len(self.statistics), 1)
        return float(norm.ppf(1.0 - self.alpha / (2.0 * m)))

    @property
    def passed(self) -> bool:
        thr = self.threshold
        return all(abs(s.z) < thr for s in self.statistics)

    @property
    def failures(self) -> list[ProbeStat]:
        thr = self.threshold
        return [s for s in self.statistics if not abs(s.z) < thr]

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "alpha": self.alpha,
            "threshold": self.threshold,
            "pass": self.passed,
            "statistics": [vars(s) for s in self.statistics],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, default=float)

    def to_table(self) -> str:
        head = f"{self.name}: {'PASS' if self.passed else 'FAIL'} (alpha={self.alpha}, |z| < {self.threshold:.3f})"
        rows = [f"  {'probe':<40} {'observed':>12} {'expected':>12} {'se':>10} {'z':>8}"]
        for s in self.statistics:
            rows.append(f"  {s.probe:<40} {s.observed:>12.5g} {s.expected:>12.5g} {s.se:>10.3g} {s.z:>8.2f}")
        return "\n".join([head] + rows)


def z_score(diff: float, se: float, atol: float = 1e-13) -> float:
    if se > 0:
        return diff / se
    return 0.0 if abs(diff) <= atol else float(np.copysign(np.inf, diff))


def _node_series(E, x) -> np.ndarray:
    """Values of every replication at the node ``x``, shape (M,)."""
    idx = E.partition.node_index(x)
    return np.asarray(E.values[(slice(None),) + idx], dtype=float)


def _loo_cov(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    """Sample covariance and its delete-one replicates."""
    M = a.size
    sa, sb, sab = a.sum(), b.sum(), (a * b).sum()
    full = (sab - sa * sb / M) / (M - 1)
    n = M - 1
    la = (sa - a) / n
    lb = (sb - b) / n
    loo = (sab - a * b - n * la * lb) / (n - 1)
    return float(full), loo


def _jackknife_se(loo: np.ndarray) -> float:
    M = loo.size
    return float(np.sqrt((M - 1) / M * np.sum((loo - loo.mean()) ** 2)))


def _check_size(E) -> int:
    M = E.values.shape[0]
    if M < MIN_REPLICATIONS:
        raise ValueError(f"need at least {MIN_REPLICATIONS} replications, got {M}")
    return M


def empirical_cov(E, s, t) -> tuple[float, float]:
    """Sample covariance of ``X(s)`` and ``X(t)`` with its jackknife SE."""
    _check_size(E)
    c, loo = _loo_cov(_node_series(E, s), _node_series(E, t))
    return c, _jackknife_se(loo)


def _difference_test(E, pairs_a, pairs_b, scale=1.0):
    """Estimate cov(pair_a) - scale*cov(pair_b) with a jackknife SE."""
    ca, la = _loo_cov(_node_series(E, pairs_a[0]), _node_series(E, pairs_a[1]))
    cb, lb = _loo_cov(_node_series(E, pairs_b[0]), _node_series(E, pairs_b[1]))
    se = _jackknife_se(la - scale * lb)
    return ca, scale * cb, se


def _fmt(x) -> str:
    return "(" + ",".join(f"{c:g}" for c in np.asarray(x, dtype=float)) + ")"


def stationarity_test(E, shifts, node_pairs, alpha: float = 0.01, name: str = "stationarity") -> TestReport:
    """Compare ``Cov(X(s+h), X(t+h))`` with ``Cov(X(s), X(t))`` for each shift ``h``."""
    _check_size(E)
    report = TestReport(name, alpha)
    for s, t in node_pairs:
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        for h in shifts:
            h = np.asarray(h, dtype=float)
            obs, exp, se = _difference_test(E, (s + h, t + h), (s, t))
            report.statistics.append(ProbeStat(f"{_fmt(s)}~{_fmt(t)} +{_fmt(h)}", obs, exp, se,
                                               z_score(obs - exp, se)))
    return report


def self_similarity_test(E, theta, shifts, node_pairs, alpha: float = 0.01,
                         name: str = "self-similarity") -> TestReport:
    """Check ``Cov(Y(e^{t+s}), Y(e^{r+s})) = exp(2 theta.s) Cov(Y(e^t), Y(e^r))``.

    ``E`` holds Y-values indexed by the log-parameter ``t``.
    """
    _check_size(E)
    theta = np.asarray(theta, dtype=float)
    report = TestReport(name, alpha)
    for t, r in node_pairs:
        t = np.asarray(t, dtype=float)
        r = np.asarray(r, dtype=float)
        for s in shifts:
            s = np.asarray(s, dtype=float)
            scale = float(np.exp(2.0 * theta @ s))
            obs, exp, se = _difference_test(E, (t + s, r + s), (t, r), scale)
            report.statistics.append(ProbeStat(f"{_fmt(t)}~{_fmt(r)} +{_fmt(s)}", obs, exp, se,
                                               z_score(obs - exp, se)))
    return report


def paired_test(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Mean of ``a - b`` and its standard error."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    se = float(d.std(ddof=1) / np.sqrt(d.size)) if d.size > 1 else 0.0
    return float(d.mean()), se


def binomial_bounds(n: int, p: float, level: float = 0.95) -> tuple[int, int]:
    """Central binomial interval for the number of successes out of ``n``."""
    from scipy.stats import binom

    lo = int(binom.ppf((1 - level) / 2, n, p))
    hi = int(binom.ppf(1 - (1 - level) / 2, n, p))
    return lo, hi
