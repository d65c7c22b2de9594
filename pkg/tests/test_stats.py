import numpy as np
import pytest

from rsfields.fields import FieldEnsemble, brownian_sheet
from rsfields.grid import GridPartition
from rsfields.stats import (
    ProbeStat,
    TestReport,
    binomial_bounds,
    empirical_cov,
    paired_test,
    self_similarity_test,
    stationarity_test,
    z_score,
)

P = GridPartition.uniform([0, 0], [2, 2], 8)
PAIRS = [([0.25, 0.25], [0.5, 0.25]), ([0.5, 0.5], [0.5, 1.0])]
SHIFTS = [[0.5, 0.5], [1.0, 0.0]]


def test_zero_ensemble_passes_with_zero_se():
    E = FieldEnsemble(P, np.zeros((40,) + P.shape), 0, {})
    c, se = empirical_cov(E, [0, 0], [1, 1])
    assert c == 0.0 and se == 0.0
    rep = stationarity_test(E, SHIFTS, PAIRS)
    assert rep.passed and all(s.z == 0.0 for s in rep.statistics)


def test_se_scales_like_inverse_root_m():
    big = brownian_sheet(P, 4096, seed=1)
    ses = [empirical_cov(FieldEnsemble(P, big.values[:m], 1, {}), [1, 1], [1, 1])[1] for m in (256, 1024, 4096)]
    assert ses[0] / ses[2] == pytest.approx(4.0, rel=0.25)
    assert ses[0] / ses[1] == pytest.approx(2.0, rel=0.25)


def test_covariance_examples():
    E = brownian_sheet(P, 4000, seed=2)
    c, se = empirical_cov(E, [1, 1], [1, 1])
    assert abs(c - 1.0) < 4 * se
    c, se = empirical_cov(E, [0.5, 1.0], [1.0, 0.5])
    assert abs(c - 0.25) < 4 * se


def test_jackknife_matches_textbook_for_variance():
    rng = np.random.default_rng(3)
    vals = rng.standard_normal((500,) + P.shape)
    E = FieldEnsemble(P, vals, 0, {})
    c, se = empirical_cov(E, [1, 1], [1, 1])
    x = vals[:, 4, 4]
    assert c == pytest.approx(x.var(ddof=1), rel=1e-12)
    loo = np.array([np.delete(x, k).var(ddof=1) for k in range(x.size)])
    want = np.sqrt((x.size - 1) / x.size * np.sum((loo - loo.mean()) ** 2))
    assert se == pytest.approx(want, rel=1e-9)


def test_too_few_replications():
    E = FieldEnsemble(P, np.zeros((10,) + P.shape), 0, {})
    with pytest.raises(ValueError):
        empirical_cov(E, [0, 0], [1, 1])
    with pytest.raises(ValueError):
        stationarity_test(E, SHIFTS, PAIRS)


def test_sheet_is_not_stationary():
    E = brownian_sheet(P, 2000, seed=4)
    rep = stationarity_test(E, SHIFTS, PAIRS)
    assert not rep.passed and rep.failures


def test_self_similarity_rejects_stationary_field():
    # a field with constant variance is not self-similar for any positive theta
    rng = np.random.default_rng(5)
    E = FieldEnsemble(P, np.broadcast_to(rng.standard_normal((2000, 1, 1)), (2000,) + P.shape).copy(), 0, {})
    assert not self_similarity_test(E, [1, 1], SHIFTS, PAIRS).passed


def test_report_formats():
    rep = TestReport("demo", 0.05, [ProbeStat("a", 1.0, 1.0, 0.1, 0.0), ProbeStat("b", 2.0, 1.0, 0.1, 10.0)])
    assert rep.threshold == pytest.approx(2.2414, abs=1e-4)
    assert [s.probe for s in rep.failures] == ["b"]
    data = rep.to_json()
    assert data["pass"] is False and len(data["statistics"]) == 2
    assert "FAIL" in rep.to_table().splitlines()[0]


def test_z_score_and_paired():
    assert z_score(1.0, 0.5) == 2.0
    assert z_score(0.0, 0.0) == 0.0
    assert z_score(-1.0, 0.0) == -np.inf
    d, se = paired_test(np.array([1.0, 2.0, 3.0]), np.array([0.0, 1.0, 2.0]))
    assert d == 1.0 and se == 0.0


def test_binomial_bounds():
    lo, hi = binomial_bounds(50, 0.01)
    assert lo == 0 and hi == 2
