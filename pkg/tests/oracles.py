"""Independent reference computations used as test oracles.

These deliberately avoid the package's fast paths: exact rational KM, dense
indicator matrices for the objective, exhaustive grid search.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np


def km_bruteforce(ys, deltas, t) -> Fraction:
    """prod over s <= t of (1 - dN(s)/R(s)), straight from the definition."""
    value = Fraction(1)
    for s in sorted(set(ys)):
        if s > t:
            break
        dn = sum(1 for y, d in zip(ys, deltas) if y == s and d == 0)
        if dn == 0:
            continue
        at_risk = sum(1 for y in ys if y >= s)
        value *= 1 - Fraction(dn, at_risk)
    return value


def weights_bruteforce(ys, deltas) -> np.ndarray:
    return np.array(
        [float(d / km_bruteforce(ys, deltas, y)) if d == 1 else 0.0 for y, d in zip(ys, deltas)]
    )


def moments_dense(y, delta, z, w, u, betas, weights=None) -> np.ndarray:
    """A(beta, W_j) for a batch of betas: returns array (n_betas, n)."""
    y, z, w = np.asarray(y, float), np.asarray(z, float), np.asarray(w, float)
    if weights is None:
        weights = weights_bruteforce(list(y), list(delta))
    n = y.shape[0]
    incl = np.all(w[None, :, :] <= w[:, None, :], axis=2).astype(float)  # [j, i]
    hit = (y[None, :] <= np.exp(np.atleast_2d(betas) @ z.T)).astype(float)  # [b, i]
    first = (hit * weights[None, :]) @ incl.T / n
    second = u * incl.sum(axis=1) / n
    return first - second[None, :]


def objective_dense(y, delta, z, w, u, betas, weights=None) -> np.ndarray:
    m = moments_dense(y, delta, z, w, u, betas, weights)
    return np.mean(m * m, axis=1)


def grid_min(y, delta, z, w, u, lower, upper, step=0.02, chunk=4096):
    """Exhaustive search of the objective over a box grid; returns (min value, argmin)."""
    axes = [np.arange(lo, hi + step / 2, step) for lo, hi in zip(lower, upper)]
    pts = np.array(list(itertools.product(*axes)))
    weights = weights_bruteforce(list(np.asarray(y, float)), list(delta))
    best, arg = np.inf, None
    for s in range(0, len(pts), chunk):
        vals = objective_dense(y, delta, z, w, u, pts[s:s + chunk], weights)
        i = int(np.argmin(vals))
        if vals[i] < best:
            best, arg = float(vals[i]), pts[s + i]
    return best, arg


def type7_quantile(sorted_values, p) -> float:
    """Hyndman-Fan type 7 written out: h = (N - 1) p, linear between neighbours."""
    n = len(sorted_values)
    h = (n - 1) * p
    lo = int(np.floor(h))
    hi = min(lo + 1, n - 1)
    return sorted_values[lo] + (h - lo) * (sorted_values[hi] - sorted_values[lo])
