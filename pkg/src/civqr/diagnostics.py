"""Data-driven checks of the identification and feasibility conditions.

None of these block estimation; they are reported alongside a fit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, check_quantile
from .km import km_eval, km_fit

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class FeasibilityReport:
    c_bar_hat: float
    n_violations: int
    violating_rows: list
    passed: bool

    def to_dict(self) -> dict:
        return {
            "c_bar_hat": self.c_bar_hat if math.isfinite(self.c_bar_hat) else None,
            "n_violations": self.n_violations,
            "violating_rows": list(self.violating_rows),
            "pass": self.passed,
        }


@dataclass(frozen=True)
class RankReport:
    """Estimated Jacobian determinant of the binary-case moment map over a grid.

    ``bandwidths`` maps each (z, w) cell to its kernel bandwidth on the log
    scale (None for cells not estimated). ``in_region`` marks grid points
    where both conditional probabilities are within ``nu`` of ``u`` and every
    used cell density exceeds ``f_floor``.
    """

    grid: list
    determinants: np.ndarray = field(repr=False)
    min_abs_det: float
    mlr_direction_consistent: bool
    bandwidths: dict
    cell_probs: dict
    skipped_cells: list
    in_region: np.ndarray = field(repr=False)
    warnings: list

    def to_dict(self) -> dict:
        return {
            "grid_points": len(self.grid),
            "center": list(self.grid[len(self.grid) // 2]),
            "min_abs_det": self.min_abs_det,
            "mlr_direction_consistent": self.mlr_direction_consistent,
            "bandwidths": {f"z={z},w={w}": h for (z, w), h in self.bandwidths.items()},
            "cell_probs": {f"z={z},w={w}": p for (z, w), p in self.cell_probs.items()},
            "skipped_cells": [f"z={z},w={w}" for z, w in self.skipped_cells],
            "n_in_region": int(np.sum(self.in_region)),
            "warnings": list(self.warnings),
        }


def support_check(fit, dataset: Dataset) -> FeasibilityReport:
    """Flag rows whose fitted quantile ``exp(Z_i'beta)`` exceeds the largest censored time.

    Compared on the log scale. With no censored rows the bound is infinite and
    the check passes.
    """
    beta = np.asarray(getattr(fit, "beta_hat", fit), dtype=float)
    censored = dataset.delta == 0
    if not np.any(censored):
        return FeasibilityReport(math.inf, 0, [], True)
    c_bar = float(np.max(dataset.y[censored]))
    rows = np.flatnonzero(dataset.z @ beta > math.log(c_bar)).tolist()
    return FeasibilityReport(c_bar, len(rows), rows, not rows)


def _binary(col: np.ndarray, what: str) -> np.ndarray:
    if not np.all((col == 0) | (col == 1)):
        raise ValueError(f"{what} column is not binary")
    return col


def relevance_check(dataset: Dataset, treat_col: int, instr_col: int) -> float:
    """First-stage strength ``P(Z=1 | W=1) - P(Z=1 | W=0)`` for binary columns.

    ``treat_col`` indexes ``dataset.z`` and ``instr_col`` indexes ``dataset.w``.
    """
    z = _binary(dataset.z[:, treat_col], "treatment")
    w = _binary(dataset.w[:, instr_col], "instrument")
    if not (np.any(w == 1) and np.any(w == 0)):
        raise ValueError("instrument takes a single value")
    return float(z[w == 1].mean() - z[w == 0].mean())


def silverman_bandwidth(x: np.ndarray, weights: np.ndarray) -> float:
    """Silverman's rule of thumb on a weighted sample (Kish effective size).

    Returns 0 for a constant sample.
    """
    if np.ptp(x) == 0:
        return 0.0
    p = weights / weights.sum()
    mean = np.sum(p * x)
    sd = math.sqrt(max(np.sum(p * (x - mean) ** 2), 0.0))
    order = np.argsort(x)
    cdf = np.cumsum(p[order])
    xs = x[order]
    q25 = xs[min(np.searchsorted(cdf, 0.25), xs.size - 1)]
    q75 = xs[min(np.searchsorted(cdf, 0.75), xs.size - 1)]
    iqr = q75 - q25
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    n_eff = weights.sum() ** 2 / np.sum(weights**2)
    return 0.9 * spread * n_eff ** (-0.2)


def _weighted_quantile(x: np.ndarray, weights: np.ndarray, q: float) -> float:
    order = np.argsort(x)
    cdf = np.cumsum(weights[order]) / weights.sum()
    return float(x[order][min(np.searchsorted(cdf, q), x.size - 1)])


def rank_condition_check(
    dataset: Dataset,
    u: float,
    grid_radius: float = 0.25,
    grid_steps: int = 11,
    *,
    treat_col: int = 1,
    instr_col: int = 1,
    intercept_col: int | None = 0,
    beta_hat=None,
    nu: float = 0.05,
    f_floor: float = 0.0,
    det_rel_tol: float = 0.1,
) -> RankReport:
    """Check the full-rank / monotone likelihood ratio condition for binary Z and W.

    On a square grid of ``(t0, t1)`` (the log-quantiles for untreated and
    treated) the 2x2 matrix with entries ``P(Z=z|W=w) * f_{log T|Z=z,W=w}(t_z)``
    (rows ``w``, columns ``z``) is estimated with IPCW-weighted Gaussian
    kernels. The likelihood-ratio inequality holds in one direction across
    the grid exactly when the determinant keeps a strict sign; determinants
    smaller than ``det_rel_tol`` times the sum of the two diagonal products
    in absolute value count as zero.

    The grid is centred at ``(b0, b0 + b1)`` from ``beta_hat`` (intercept and
    treatment coefficients) or, when no fit is supplied, at IPCW-weighted
    ``u``-quantiles of log Y within each treatment arm. Other regressors are
    ignored, so the check is marginal over them.
    """
    u = check_quantile(u)
    if grid_steps < 1 or grid_radius < 0:
        raise ValueError("grid_steps must be positive and grid_radius nonnegative")
    z = _binary(dataset.z[:, treat_col], "treatment")
    w = _binary(dataset.w[:, instr_col], "instrument")
    logy = np.log(dataset.y)
    g = km_eval(km_fit(dataset), dataset.y)
    ipcw = np.where(dataset.delta == 1, 1.0 / np.atleast_1d(g), 0.0)
    notes = []

    probs, cells, bandwidths, skipped = {}, {}, {}, []
    for zz in (0, 1):
        for ww in (0, 1):
            in_w = w == ww
            p = float(np.mean(z[in_w] == zz)) if np.any(in_w) else 0.0
            probs[(zz, ww)] = p
            if p == 0.0:
                skipped.append((zz, ww))
                bandwidths[(zz, ww)] = None
                continue
            mask = in_w & (z == zz)
            ev = mask & (ipcw > 0)
            x, wt = logy[ev], ipcw[ev]
            h = silverman_bandwidth(x, wt) if x.size >= 2 else 0.0
            if not h > 0:
                if p > 0.01:
                    msg = f"cell z={zz}, w={ww}: density not estimable"
                    notes.append(msg)
                    warnings.warn(msg, RuntimeWarning, stacklevel=2)
                bandwidths[(zz, ww)] = None
                cells[(zz, ww)] = None
                continue
            bandwidths[(zz, ww)] = float(h)
            # IPCW density of log T in the cell: normalize by the cell size.
            cells[(zz, ww)] = (x, wt / np.count_nonzero(mask), float(h))

    if beta_hat is not None:
        beta_hat = np.asarray(beta_hat, dtype=float)
        b0 = beta_hat[intercept_col] if intercept_col is not None else 0.0
        center = (b0, b0 + beta_hat[treat_col])
    else:
        center = []
        for zz in (0, 1):
            sel = (z == zz) & (ipcw > 0)
            center.append(_weighted_quantile(logy[sel], ipcw[sel], u) if np.any(sel) else 0.0)
        center = tuple(center)
    offsets = np.linspace(-grid_radius, grid_radius, grid_steps) if grid_steps > 1 else np.zeros(1)
    t0s, t1s = center[0] + offsets, center[1] + offsets

    def density(cell, t):
        if cell is None:
            return np.zeros_like(t)
        x, wt, h = cell
        d = (t[:, None] - x[None, :]) / h
        return (wt[None, :] * np.exp(-0.5 * d * d)).sum(axis=1) / (h * _SQRT_2PI)

    # entry[(z, w)] evaluated at t_z along the grid axis for z
    axis = {0: t0s, 1: t1s}
    entry, dens = {}, {}
    for key, p in probs.items():
        zz = key[0]
        f = density(cells.get(key), axis[zz]) if key not in skipped else np.zeros_like(axis[zz])
        dens[key] = f
        entry[key] = p * f

    a00 = entry[(0, 0)][:, None]
    a01 = entry[(0, 1)][:, None]
    a10 = entry[(1, 0)][None, :]
    a11 = entry[(1, 1)][None, :]
    det = a00 * a11 - a10 * a01
    scale = np.abs(a00 * a11) + np.abs(a10 * a01)
    signed = np.abs(det) > det_rel_tol * scale
    consistent = bool(np.all(signed) and (np.all(det > 0) or np.all(det < 0)))

    # Region: conditional CDFs near u and densities above the floor.
    cdf = {}
    for ww in (0, 1):
        in_w = w == ww
        m = max(np.count_nonzero(in_w), 1)
        c0 = np.array([np.sum(ipcw[in_w & (z == 0) & (logy <= t)]) for t in t0s]) / m
        c1 = np.array([np.sum(ipcw[in_w & (z == 1) & (logy <= t)]) for t in t1s]) / m
        cdf[ww] = c0[:, None] + c1[None, :]
    in_region = (np.abs(cdf[0] - u) <= nu) & (np.abs(cdf[1] - u) <= nu)
    for key, f in dens.items():
        if key in skipped:
            continue
        vals = f[:, None] if key[0] == 0 else f[None, :]
        in_region &= vals > f_floor

    grid = [(float(a), float(b)) for a in t0s for b in t1s]
    return RankReport(
        grid=grid,
        determinants=det,
        min_abs_det=float(np.min(np.abs(det))),
        mlr_direction_consistent=consistent,
        bandwidths=bandwidths,
        cell_probs=probs,
        skipped_cells=skipped,
        in_region=in_region,
        warnings=notes,
    )
