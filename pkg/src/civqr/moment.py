"""IPCW moment operator and the minimum-distance objective.

For a candidate ``beta`` and instrument point ``w``::

    A(beta, w) = 1/n sum_i delta_i / G(Y_i) * 1{Y_i <= exp(Z_i'beta), W_i <= w}
                 - u/n sum_i 1{W_i <= w}

with ``W_i <= w`` taken componentwise. The objective averages ``A(beta, W_j)**2``
over the sample instrument points. Comparisons are done as
``log Y_i <= Z_i'beta`` so extreme ``beta`` never overflows.
"""

from __future__ import annotations

import numba
import numpy as np

from .data import Dataset, check_quantile
from .km import FLOOR_EPSILON, KmCurve, km_eval_flagged, km_fit


@numba.njit(cache=True)
def _dominance_sums(a, order, bounds, srank, m):
    # out[j] = sum_i a[i] over rows with (p_i <= p_j, s_i <= s_j); rows come
    # grouped by primary rank, secondary handled with a Fenwick tree.
    n = a.shape[0]
    out = np.empty(n)
    tree = np.zeros(m + 1)
    for g in range(bounds.shape[0] - 1):
        for t in range(bounds[g], bounds[g + 1]):
            i = order[t]
            k = srank[i] + 1
            v = a[i]
            while k <= m:
                tree[k] += v
                k += k & (-k)
        for t in range(bounds[g], bounds[g + 1]):
            i = order[t]
            k = srank[i] + 1
            s = 0.0
            while k > 0:
                s += tree[k]
                k -= k & (-k)
            out[i] = s
    return out


@numba.njit(cache=True)
def _objective_fenwick(beta, z, logy, weights, order, bounds, srank, m, ucnt):
    n, kdim = z.shape
    a = np.empty(n)
    for i in range(n):
        s = 0.0
        for c in range(kdim):
            s += z[i, c] * beta[c]
        a[i] = weights[i] if logy[i] <= s else 0.0
    sums = _dominance_sums(a, order, bounds, srank, m)
    acc = 0.0
    for j in range(n):
        d = (sums[j] - ucnt[j]) / n
        acc += d * d
    return acc / n


def _dense_rank(x: np.ndarray) -> np.ndarray:
    return np.unique(x, return_inverse=True)[1].reshape(-1).astype(np.int64)


class _Dominance:
    """Precomputed layout for sums over ``{i : W_i <= W_j}`` at every sample point ``j``.

    Constant instrument columns never change a comparison between sample
    points and are dropped. Up to two remaining columns use an O(n log n)
    sweep; more fall back to a dense n-by-n inclusion matrix.
    """

    def __init__(self, w: np.ndarray):
        n = w.shape[0]
        varying = [j for j in range(w.shape[1]) if np.ptp(w[:, j]) > 0] if n else []
        self.dense = None
        if len(varying) > 2:
            wv = w[:, varying]
            self.dense = np.all(wv[None, :, :] <= wv[:, None, :], axis=2).astype(float)
            return
        prim = _dense_rank(w[:, varying[0]]) if varying else np.zeros(n, np.int64)
        sec = _dense_rank(w[:, varying[1]]) if len(varying) > 1 else np.zeros(n, np.int64)
        self.order = np.lexsort((sec, prim)).astype(np.int64)
        p_sorted = prim[self.order]
        starts = np.flatnonzero(np.r_[True, p_sorted[1:] != p_sorted[:-1]]) if n else np.empty(0, np.int64)
        self.bounds = np.r_[starts, n].astype(np.int64)
        self.srank = sec
        self.m = int(sec.max()) + 1 if n else 1

    def sums(self, a: np.ndarray) -> np.ndarray:
        a = np.ascontiguousarray(a, dtype=float)
        if self.dense is not None:
            return self.dense @ a
        return _dominance_sums(a, self.order, self.bounds, self.srank, self.m)


class MomentContext:
    """Everything the objective needs that does not depend on ``beta``.

    Built once per (dataset, KM curve) pair and reused for every objective
    evaluation. Instances are read-only and safe to share across workers.

    Parameters
    ----------
    dataset : Dataset
    u : float
        Quantile level in (0, 1).
    curve : KmCurve, optional
        Censoring survival estimate; fitted from ``dataset`` when omitted.
    weights : array_like, optional
        Explicit per-row weights replacing ``delta_i / G(Y_i)``. Used for
        reference computations, e.g. ``G == 1``.
    """

    def __init__(
        self,
        dataset: Dataset,
        u: float,
        curve: KmCurve | None = None,
        weights=None,
        floor_epsilon: float = FLOOR_EPSILON,
    ):
        self.dataset = dataset
        self.u = check_quantile(u)
        self.clipping_fired = False
        if weights is None:
            if curve is None:
                curve = km_fit(dataset, floor_epsilon)
            g, clipped = km_eval_flagged(curve, dataset.y)
            uncensored = dataset.delta == 1
            weights = np.where(uncensored, 1.0 / g, 0.0)
            self.clipping_fired = bool(np.any(clipped & uncensored))
        else:
            weights = np.asarray(weights, dtype=float)
            if weights.shape != (dataset.n,):
                raise ValueError("weights must have one entry per row")
        self.curve = curve
        self.weights = weights
        self.weights.setflags(write=False)
        self._logy = np.log(dataset.y)
        self._z = np.ascontiguousarray(dataset.z)
        self._dom = _Dominance(dataset.w)
        self._count = self._dom.sums(np.ones(dataset.n))
        self._ucount = self.u * self._count

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def k(self) -> int:
        return self.dataset.k

    def _check_beta(self, beta) -> np.ndarray:
        beta = np.ascontiguousarray(beta, dtype=float).reshape(-1)
        if beta.shape[0] != self.k:
            raise ValueError(f"beta has length {beta.shape[0]}, expected {self.k}")
        return beta

    def moments(self, beta) -> np.ndarray:
        """``A(beta, W_j)`` for every sample instrument point ``j``."""
        beta = self._check_beta(beta)
        a = np.where(self._logy <= self._z @ beta, self.weights, 0.0)
        return (self._dom.sums(a) - self._ucount) / self.n


def a_hat(ctx: MomentContext, beta, w) -> float:
    """Empirical moment ``A(beta, w)`` at an arbitrary instrument point ``w``."""
    beta = ctx._check_beta(beta)
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.shape[0] != ctx.dataset.l:
        raise ValueError(f"w has length {w.shape[0]}, expected {ctx.dataset.l}")
    in_w = np.all(ctx.dataset.w <= w, axis=1)
    hit = ctx._logy <= ctx._z @ beta
    return float(
        (np.sum(ctx.weights[in_w & hit]) - ctx.u * np.count_nonzero(in_w)) / ctx.n
    )


def objective(ctx: MomentContext, beta) -> float:
    """Mean of squared moments over the sample instrument points (always >= 0)."""
    beta = ctx._check_beta(beta)
    dom = ctx._dom
    if dom.dense is not None:
        m = ctx.moments(beta)
        return float(np.mean(m * m))
    return float(
        _objective_fenwick(
            beta, ctx._z, ctx._logy, ctx.weights,
            dom.order, dom.bounds, dom.srank, dom.m, ctx._ucount,
        )
    )
