import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from civqr.data import Dataset
from civqr.moment import MomentContext, a_hat, objective
from oracles import moments_dense, objective_dense


def _ctx(y, delta, z, w, u=0.5, **kw):
    return MomentContext(Dataset(y, delta, z, w), u, **kw)


def test_empty_conditioning_set_gives_zero():
    ctx = _ctx([1.0, 2.0, 3.0], [1, 0, 1], [[1.0]] * 3, [[1.0], [2.0], [3.0]])
    assert a_hat(ctx, [0.3], [0.5]) == 0.0


def test_nothing_below_threshold_gives_minus_u():
    ctx = _ctx([1.0, 2.0, 3.0], [1, 1, 1], [[1.0]] * 3, [[1.0], [2.0], [3.0]], u=0.3)
    assert a_hat(ctx, [-50.0], [10.0]) == pytest.approx(-0.3, abs=1e-15)


def test_three_row_enumeration():
    y, z, w = [1.0, 2.0, 3.0], [[1.0]] * 3, [[1.0], [2.0], [3.0]]
    ctx = _ctx(y, [1, 1, 1], z, w)
    beta = [math.log(2.5)]
    # rows with W <= 2: {1, 2}; of those Y <= 2.5: {1, 2}
    assert a_hat(ctx, beta, [2.0]) == pytest.approx(1 / 3, abs=1e-15)
    oracle = moments_dense(y, [1, 1, 1], z, w, 0.5, np.array([beta]))[0, 1]
    assert oracle == pytest.approx(1 / 3, abs=1e-15)


@pytest.mark.parametrize("u", [0.2, 0.5, 0.9])
def test_single_row_objective(u):
    ctx = _ctx([2.0], [1], [[1.0]], [[1.0]], u=u)
    assert objective(ctx, [math.log(3.0)]) == pytest.approx((1 - u) ** 2, abs=1e-15)
    assert objective(ctx, [math.log(1.0)]) == pytest.approx(u**2, abs=1e-15)


def test_true_parameter_beats_neighbours(grid_sample):
    ctx = MomentContext(grid_sample, 0.5)
    beta0 = np.full(3, 0.5)
    f0 = objective(ctx, beta0)
    for k in range(3):
        for sign in (-1, 1):
            b = beta0.copy()
            b[k] += sign * 0.2
            assert f0 < objective(ctx, b)


def test_dimension_mismatch_raises():
    ctx = _ctx([1.0, 2.0], [1, 1], [[1.0, 0.0], [1.0, 1.0]], [[1.0], [2.0]])
    with pytest.raises(ValueError):
        objective(ctx, [0.1])
    with pytest.raises(ValueError):
        a_hat(ctx, [0.1, 0.2], [1.0, 2.0])


def test_weights_invariant():
    ctx = _ctx([1.0, 2.0, 3.0, 4.0], [1, 0, 1, 1], [[1.0]] * 4, [[1.0]] * 4)
    wts = ctx.weights
    assert np.all(wts[[1]] == 0)
    assert np.all(wts[[0, 2, 3]] >= 1)
    # Ĝ(3) = 2/3 (risk 3 at s=2), so weight 1.5
    assert wts[2] == 1.5


def _random_dataset(rng, n, k, l_varying, ties):
    y = rng.exponential(2.0, n) + 0.01
    if ties:
        y = np.round(y, 1) + 0.1
    delta = rng.integers(0, 2, n)
    delta[0] = 1
    z = np.column_stack([np.ones(n)] + [rng.uniform(-1, 1, n) for _ in range(k - 1)])
    cols = [np.ones(n)]
    for _ in range(l_varying):
        cols.append(rng.integers(0, 3, n).astype(float) if ties else rng.normal(size=n))
    return Dataset(y, delta, z, np.column_stack(cols))


@pytest.mark.parametrize("l_varying", [0, 1, 2, 3])
@pytest.mark.parametrize("ties", [False, True])
def test_fast_objective_matches_dense_oracle(l_varying, ties):
    rng = np.random.default_rng(10 * l_varying + ties)
    for _ in range(5):
        ds = _random_dataset(rng, int(rng.integers(5, 60)), 3, l_varying, ties)
        ctx = MomentContext(ds, 0.4)
        betas = rng.normal(0, 1, (20, 3))
        got = np.array([objective(ctx, b) for b in betas])
        want = objective_dense(ds.y, ds.delta, ds.z, ds.w, 0.4, betas)
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-15)
        m = ctx.moments(betas[0])
        np.testing.assert_allclose(m, [a_hat(ctx, betas[0], wj) for wj in ds.w], atol=1e-14)


def test_no_censoring_reduces_to_plain_moment():
    rng = np.random.default_rng(3)
    ds = _random_dataset(rng, 40, 3, 2, False)
    ds = Dataset(ds.y, np.ones(ds.n), ds.z, ds.w)
    ctx = MomentContext(ds, 0.5)
    assert np.all(ctx.weights == 1.0)
    beta = np.array([0.2, -0.1, 0.3])
    for wj in ds.w[:10]:
        in_w = np.all(ds.w <= wj, axis=1)
        hit = ds.y <= np.exp(ds.z @ beta)
        plain = np.mean(hit & in_w) - 0.5 * np.mean(in_w)
        assert a_hat(ctx, beta, wj) == pytest.approx(plain, abs=1e-15)


def test_piecewise_constant():
    rng = np.random.default_rng(4)
    ds = _random_dataset(rng, 50, 3, 2, False)
    ctx = MomentContext(ds, 0.5)
    for _ in range(20):
        beta = rng.normal(0, 0.5, 3)
        gap = np.min(np.abs(ds.z @ beta - np.log(ds.y)))
        step = gap / 10 / np.max(np.abs(ds.z).sum(axis=1))
        assert objective(ctx, beta + step) == objective(ctx, beta)
        assert objective(ctx, beta - step) == objective(ctx, beta)


def test_no_overflow_for_extreme_beta():
    ctx = _ctx([1.0, 2.0], [1, 1], [[1.0], [1.0]], [[1.0], [2.0]])
    assert np.isfinite(objective(ctx, [1e6]))
    assert np.isfinite(objective(ctx, [-1e6]))


@st.composite
def moment_case(draw):
    n = draw(st.integers(1, 12))
    y = draw(st.lists(st.integers(1, 6), min_size=n, max_size=n))
    delta = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    delta[0] = 1
    w = draw(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=n, max_size=n))
    z = draw(st.lists(st.floats(-1, 1), min_size=n, max_size=n))
    beta = draw(st.tuples(st.floats(-3, 3), st.floats(-3, 3)))
    wpt = draw(st.tuples(st.integers(-1, 3), st.integers(-1, 3)))
    u = draw(st.floats(0.01, 0.99))
    ds = Dataset([float(v) for v in y], delta, np.column_stack([np.ones(n), z]),
                 np.array(w, dtype=float))
    return ds, np.array(beta), np.array(wpt, dtype=float), u


@settings(max_examples=1000, deadline=None)
@given(moment_case())
def test_range_nonnegativity_and_monotonicity(case):
    ds, beta, wpt, u = case
    ctx = MomentContext(ds, u)
    val = a_hat(ctx, beta, wpt)
    assert -u - 1e-12 <= val <= ctx.weights.max() + 1e-12
    assert objective(ctx, beta) >= 0.0
    # unweighted counts grow with w: recover them from a unit-weight context
    unit = MomentContext(ds, u, weights=np.ones(ds.n))
    low = np.array([-1e3, 0.0])  # Z beta = -1e3 for every row

    def counts(wv):
        cnt = -ds.n * a_hat(unit, low, wv) / u
        return ds.n * a_hat(unit, beta, wv) + u * cnt, cnt

    hits_a, cnt_a = counts(wpt)
    hits_b, cnt_b = counts(wpt + 1)
    assert hits_a <= hits_b + 1e-9
    assert cnt_a <= cnt_b + 1e-9
