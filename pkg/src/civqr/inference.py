"""Point estimation of beta(u) and percentile bootstrap intervals."""

from __future__ import annotations

import functools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, canonical_order, check, check_quantile
from .km import FLOOR_EPSILON, km_fit
from .moment import MomentContext, objective
from .optim import OptimConfig, OptimResult, multi_start

MAX_REDRAWS = 100
_BOOT_STREAM = 0xB007


@dataclass(frozen=True)
class FitConfig:
    u: float
    optim: OptimConfig
    floor_epsilon: float = FLOOR_EPSILON

    def __post_init__(self):
        object.__setattr__(self, "u", check_quantile(self.u))
        if not self.floor_epsilon > 0:
            raise ValueError("floor_epsilon must be positive")


@dataclass(frozen=True)
class FitResult:
    beta_hat: np.ndarray
    objective_value: float
    clipping_fired: bool
    optim: OptimResult = field(repr=False)

    def to_dict(self) -> dict:
        starts = self.optim.starts
        return {
            "beta_hat": self.beta_hat.tolist(),
            "objective_value": self.objective_value,
            "clipping_fired": self.clipping_fired,
            "starts": len(starts),
            "converged_starts": sum(s.converged for s in starts),
            "best_start": self.optim.best_start,
        }


@dataclass(frozen=True)
class BootstrapResult:
    replicates: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    level: float
    b: int
    beta_hat: np.ndarray
    n: int
    n_redraws: int = 0

    def centered(self) -> np.ndarray:
        """``sqrt(n) * (beta_b - beta_hat)`` for each replicate, for basic intervals."""
        return np.sqrt(self.n) * (self.replicates - self.beta_hat)

    def to_dict(self) -> dict:
        return {
            "beta_hat": self.beta_hat.tolist(),
            "ci_lower": self.ci_lower.tolist(),
            "ci_upper": self.ci_upper.tolist(),
            "level": self.level,
            "b": self.b,
            "n_redraws": self.n_redraws,
            "replicates": self.replicates.tolist(),
        }


def estimate(ctx: MomentContext, optim: OptimConfig) -> FitResult:
    """Minimize the objective held by ``ctx`` over the box by multi-start Nelder-Mead."""
    if optim.dim != ctx.k:
        raise ValueError(f"box has dimension {optim.dim} but z has {ctx.k} columns")
    res = multi_start(functools.partial(objective, ctx), optim)
    return FitResult(res.best_x, res.best_f, ctx.clipping_fired, res)


def fit(dataset: Dataset, cfg: FitConfig) -> FitResult:
    """Estimate ``beta(u)``: KM weights, moment context, then multi-start search.

    Rows are put in a canonical order first, so the result does not depend
    on the order in which they were supplied.
    """
    if dataset.n and not np.any(dataset.delta == 1):
        raise ValueError("no uncensored observations")
    check(dataset)
    ds = dataset.take(canonical_order(dataset))
    curve = km_fit(ds, cfg.floor_epsilon)
    return estimate(MomentContext(ds, cfg.u, curve), cfg.optim)


def percentile_ci(replicates, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
    """Columnwise empirical quantiles at ``(1 - level)/2`` and ``1 - (1 - level)/2``.

    Uses linear interpolation between order statistics (Hyndman-Fan type 7).
    """
    reps = np.asarray(replicates, dtype=float)
    if reps.ndim == 1:
        reps = reps[:, None]
    if reps.shape[0] < 2:
        raise ValueError("need at least two replicates")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    alpha = 1.0 - level
    lo, hi = np.quantile(reps, [alpha / 2, 1 - alpha / 2], axis=0, method="linear")
    return lo, hi


def resample_indices(dataset: Dataset, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Draw n row indices with replacement, redrawing samples without any event.

    Returns the indices and the number of redraws needed.
    """
    n = dataset.n
    for redraws in range(MAX_REDRAWS + 1):
        idx = rng.integers(0, n, size=n)
        if np.any(dataset.delta[idx] == 1):
            return idx, redraws
    raise RuntimeError(
        f"{MAX_REDRAWS} consecutive bootstrap resamples had no uncensored observations"
    )


def _replicate(dataset: Dataset, cfg: FitConfig, seed: int, r: int):
    rng = np.random.default_rng([seed, _BOOT_STREAM, r])
    idx, redraws = resample_indices(dataset, rng)
    # KM is re-estimated on the resample inside fit.
    return fit(dataset.take(idx), cfg).beta_hat, redraws


def parallel_map(fn, items, workers: int = 1) -> list:
    """``list(map(fn, items))``, fanned out over processes when ``workers > 1``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def bootstrap(
    dataset: Dataset,
    cfg: FitConfig,
    b: int = 500,
    level: float = 0.95,
    seed: int = 0,
    workers: int = 1,
    beta_hat: np.ndarray | None = None,
) -> BootstrapResult:
    """Nonparametric bootstrap of the full estimator, KM stage included.

    Replicate ``r`` resamples from its own substream of ``seed``, so results
    are identical for any ``workers``.
    """
    if b < 2:
        raise ValueError("need at least two bootstrap replicates")
    if beta_hat is None:
        beta_hat = fit(dataset, cfg).beta_hat
    out = parallel_map(functools.partial(_replicate, dataset, cfg, seed), range(b), workers)
    reps = np.array([beta for beta, _ in out])
    lo, hi = percentile_ci(reps, level)
    return BootstrapResult(
        replicates=reps,
        ci_lower=lo,
        ci_upper=hi,
        level=level,
        b=b,
        beta_hat=np.asarray(beta_hat, dtype=float),
        n=dataset.n,
        n_redraws=int(sum(r for _, r in out)),
    )
