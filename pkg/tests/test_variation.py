import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsfields.grid import GridPartition, sample
from rsfields.smooth import constant, coordinate, coordinate_product, coordinate_sum, exp_linear, random_smooth
from rsfields.variation import hk_variation, hk_variation_smooth, vitali_variation

HK_EXP = 12.294040982955769  # frozen oracle


def test_vitali_cases():
    assert vitali_variation(coordinate_sum(2), [0, 0], [1, 1]).value == pytest.approx(0.0, abs=1e-14)
    assert vitali_variation(coordinate_product(2), [0, 0], [1, 1]).value == pytest.approx(1.0, rel=1e-12)
    assert vitali_variation(constant(2, 4.0), [0, 0], [1, 1]).value == 0.0
    est = vitali_variation(coordinate_product(2), [0, 0], [1, 1])
    assert est.is_lower_bound and est.partition_norm == pytest.approx(1 / 64)


def test_hk_cases():
    assert hk_variation(coordinate_sum(2), [0, 0], [1, 1]).value == pytest.approx(2.0, rel=1e-12)
    assert hk_variation(constant(2, 1.0), [0, 0], [1, 1]).value == 0.0
    f = exp_linear([1, 1])
    assert hk_variation(f, [0, 0], [1, 1]).value == pytest.approx(hk_variation_smooth(f, [0, 0], [1, 1]), rel=1e-10)


def test_smooth_formula_cases():
    assert hk_variation_smooth(exp_linear([1, 1]), [0, 0], [1, 1]) == pytest.approx(HK_EXP, rel=1e-10)
    assert hk_variation_smooth(coordinate(2, 1), [0, 0], [2, 1]) == pytest.approx(2.0, rel=1e-12)
    assert hk_variation_smooth(constant(2, 3.0), [0, 0], [1, 1]) == 0.0


def test_grid_field_uses_native_grid():
    P = GridPartition.uniform([0, 0], [1, 1], 10)
    F = sample(coordinate_product(2), P)
    est = hk_variation(F, [0, 0], [1, 1])
    assert est.partition_norm == pytest.approx(0.1)
    assert est.value == pytest.approx(3.0, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_vitali_monotone_under_refinement(seed):
    f = random_smooth(2, np.random.default_rng(seed))
    est = vitali_variation(f, [0, 0], [1, 1], refinements=5, cells=2)
    vals = [v for _, v in est.levels]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 10_000))
def test_ladder_converges_to_smooth_formula(seed):
    f = random_smooth(2, np.random.default_rng(seed))
    exact = hk_variation_smooth(f, [0, 0], [1, 1])
    est = hk_variation(f, [0, 0], [1, 1], refinements=6)
    assert est.value <= exact * (1 + 1e-4)  # reference quadrature carries rtol 1e-5 per face
    assert est.value == pytest.approx(exact, rel=2e-2)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_sum_and_product_stay_finite(seed):
    rng = np.random.default_rng(seed)
    f, g = random_smooth(2, rng), random_smooth(2, rng)
    hf = hk_variation(f, [0, 0], [1, 1]).value
    hg = hk_variation(g, [0, 0], [1, 1]).value
    assert np.isfinite(hk_variation(f + g, [0, 0], [1, 1]).value)
    assert hk_variation(f + g, [0, 0], [1, 1]).value <= hf + hg + 1e-9
    assert np.isfinite(hk_variation(f * g, [0, 0], [1, 1]).value)
