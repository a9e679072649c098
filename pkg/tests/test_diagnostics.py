import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from civqr.data import Dataset
from civqr.diagnostics import (
    rank_condition_check,
    relevance_check,
    silverman_bandwidth,
    support_check,
)
from civqr.inference import FitConfig, fit
from civqr.optim import OptimConfig
from civqr.simlab import SimDesign, gen_design, synthetic_jtpa


def _binary_dataset(z, w, y=None, delta=None):
    n = len(z)
    ones = np.ones(n)
    y = np.ones(n) if y is None else y
    delta = np.ones(n) if delta is None else delta
    return Dataset(y, delta, np.column_stack([ones, z]), np.column_stack([ones, w]))


def test_relevance_from_reported_counts():
    w = np.r_[np.ones(524), np.zeros(278)]
    z = np.r_[np.ones(339), np.zeros(524 - 339), np.ones(36), np.zeros(278 - 36)]
    got = relevance_check(_binary_dataset(z, w), 1, 1)
    exact = Fraction(339, 524) - Fraction(36, 278)
    assert abs(got - float(exact)) <= 1e-15
    assert round(got, 3) == 0.517


def test_relevance_perfect_compliance_and_sign_flip():
    rng = np.random.default_rng(0)
    w = rng.integers(0, 2, 200).astype(float)
    assert relevance_check(_binary_dataset(w, w), 1, 1) == 1.0
    z = rng.integers(0, 2, 200).astype(float)
    a = relevance_check(_binary_dataset(z, w), 1, 1)
    b = relevance_check(_binary_dataset(z, 1 - w), 1, 1)
    assert a == pytest.approx(-b, abs=1e-15)
    assert -1 <= a <= 1


def test_relevance_rejects_non_binary():
    with pytest.raises(ValueError):
        relevance_check(_binary_dataset(np.array([0.0, 2.0]), np.array([0.0, 1.0])), 1, 1)


def test_relevance_near_zero_under_independence():
    rng = np.random.default_rng(1)
    n = 100_000
    ds = _binary_dataset(rng.integers(0, 2, n).astype(float), rng.integers(0, 2, n).astype(float))
    assert abs(relevance_check(ds, 1, 1)) < 0.02


def test_support_check_trivial_cases():
    ds = Dataset([1.0, 5.0], [1, 1], [[1.0], [1.0]], [[1.0], [1.0]])
    rep = support_check(np.array([3.0]), ds)
    assert rep.passed and rep.c_bar_hat == math.inf
    ds = Dataset([1.0, 5.0], [1, 0], [[1.0, 2.0], [1.0, 3.0]], [[1.0], [1.0]])
    rep = support_check(np.zeros(2), ds)
    assert rep.passed and rep.c_bar_hat == 5.0 and rep.to_dict()["pass"]


@st.composite
def planted(draw):
    n = draw(st.integers(2, 30))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    beta = np.array([draw(st.floats(-1, 1)), draw(st.floats(0.1, 2))])
    c_bar = float(draw(st.floats(1.0, 100.0)))
    x = rng.uniform(-3, 3, n)
    # place every fitted quantile at or below c_bar / 2 by choosing x
    x = np.minimum(x, (math.log(c_bar / 2) - beta[0]) / beta[1])
    bad = draw(st.lists(st.integers(0, n - 1), unique=True, max_size=n))
    bad = sorted(b for b in bad if b != 0)
    x[bad] = (math.log(2 * c_bar) - beta[0]) / beta[1]
    y = rng.uniform(0.1, c_bar, n)
    delta = rng.integers(0, 2, n)
    y[0], delta[0] = c_bar, 0
    delta[1] = 1
    ds = Dataset(y, delta, np.column_stack([np.ones(n), x]), np.ones((n, 1)))
    return ds, beta, bad


@settings(max_examples=1000, deadline=None)
@given(planted())
def test_support_flag_fires_iff_planted(case):
    ds, beta, bad = case
    rep = support_check(beta, ds)
    assert rep.violating_rows == bad
    assert rep.passed == (not bad)
    assert rep.n_violations == len(bad)


def test_support_check_invariant_to_permutation():
    rng = np.random.default_rng(3)
    ds = gen_design(SimDesign(3, 0.175, 200, 0.7, seed=3))
    beta = np.array([0.9, 0.9, 0.9])
    rep = support_check(beta, ds)
    perm = rng.permutation(ds.n)
    rep2 = support_check(beta, ds.take(perm))
    assert rep.passed == rep2.passed
    assert sorted(perm[rep2.violating_rows].tolist()) == rep.violating_rows


def _jtpa_dataset():
    d = synthetic_jtpa()
    n = len(d["days"])
    z = np.column_stack([np.ones(n), d["treatment"]])
    w = np.column_stack([np.ones(n), d["assignment"]])
    return Dataset(d["days"], d["delta"], z, w)


def test_high_quantile_fit_fails_support_check():
    ds = _jtpa_dataset()
    box = OptimConfig([0, -3], [10, 3], n_starts=20)
    low = support_check(fit(ds, FitConfig(0.3, box)), ds)
    high = support_check(fit(ds, FitConfig(0.8, box)), ds)
    assert low.passed
    assert not high.passed and high.n_violations > 0
    assert high.c_bar_hat == np.max(ds.y[ds.delta == 0])


def test_silverman_unweighted_matches_textbook():
    x = np.random.default_rng(0).normal(size=500)
    sd = np.std(x)
    q75, q25 = np.percentile(x, [75, 25])
    h = silverman_bandwidth(x, np.ones_like(x))
    want = 0.9 * min(sd, (q75 - q25) / 1.34) * 500 ** (-0.2)
    assert h == pytest.approx(want, rel=0.02)


def test_rank_check_design3_structure():
    ds = gen_design(SimDesign(3, 0.07, 4000, 0.5, seed=5))
    rep = rank_condition_check(ds, 0.5, beta_hat=[0.5, 0.5, 0.5])
    assert sorted(rep.skipped_cells) == [(0, 1), (1, 0)]
    assert rep.cell_probs[(0, 1)] == 0.0 and rep.cell_probs[(1, 0)] == 0.0
    assert np.all(rep.determinants > 0)
    assert rep.mlr_direction_consistent
    assert rep.min_abs_det > 0
    assert len(rep.grid) == 121
    assert rep.bandwidths[(0, 1)] is None and rep.bandwidths[(0, 0)] > 0


def test_rank_check_flags_independence():
    rng = np.random.default_rng(6)
    n = 100_000
    z = rng.integers(0, 2, n).astype(float)
    w = rng.integers(0, 2, n).astype(float)
    y = np.exp(0.5 + 0.3 * z + rng.normal(size=n))
    rep = rank_condition_check(_binary_dataset(z, w, y), 0.5)
    assert not rep.mlr_direction_consistent
    scale = np.max(np.abs(rep.determinants)) or 1.0
    assert rep.min_abs_det <= scale


def test_rank_check_identical_rows():
    ds = _binary_dataset(np.r_[np.zeros(10), np.ones(10)], np.r_[np.zeros(10), np.ones(10)],
                         y=np.full(20, 3.0))
    with pytest.warns(RuntimeWarning):
        rep = rank_condition_check(ds, 0.5)
    assert rep.min_abs_det == 0.0
    assert rep.warnings
    assert not rep.mlr_direction_consistent


def test_rank_check_is_deterministic():
    ds = _jtpa_dataset()
    a = rank_condition_check(ds, 0.5, grid_steps=5)
    b = rank_condition_check(ds, 0.5, grid_steps=5)
    np.testing.assert_array_equal(a.determinants, b.determinants)
    assert a.to_dict() == b.to_dict()
