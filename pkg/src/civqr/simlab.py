"""Monte Carlo lab: the three simulation designs, replication engine and metrics.

Every design draws ``U ~ U(0,1)``, sets ``Z = (1, Z2, Z3)``, ``W = (1, W2, Z3)``
and ``T = exp(Z'(U, U, U))``, then censors with ``C ~ Exp(rate lambda)``:

======  ==============  =====================================  ======
design  W2              Z2                                     Z3
======  ==============  =====================================  ======
1       Exp(1)          1{W2 + 0.5 U - 1 > 0}                  U(0,1)
2       LogNormal(0,1)  W2 + 0.5 U + 0.2 U(0,1)                Exp(1)
3       Bernoulli(0.5)  1{W2 + 0.5 U - 1 > 0}                  U(0,1)
======  ==============  =====================================  ======
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, check_quantile
from .inference import FitConfig, fit, parallel_map, resample_indices
from .optim import OptimConfig

log = logging.getLogger(__name__)

# Censoring rates that target 20% / 40% censoring, per design.
LAMBDAS = {1: (0.0068, 0.176), 2: (0.0173, 0.065), 3: (0.07, 0.175)}

_DATA_STREAM = 0xDA7A
_WARP_STREAM = 0x3A4B
MAX_FAILURE_SHARE = 0.01


@dataclass(frozen=True)
class SimDesign:
    design_id: int
    lam: float
    n: int
    u: float
    seed: int = 0

    def __post_init__(self):
        if self.design_id not in (1, 2, 3):
            raise ValueError(f"design_id must be 1, 2 or 3, got {self.design_id}")
        if not self.lam > 0:
            raise ValueError("censoring rate must be positive")
        if self.n < 1:
            raise ValueError("n must be positive")
        object.__setattr__(self, "u", check_quantile(self.u))

    @property
    def beta0(self) -> np.ndarray:
        return np.full(3, self.u)


@dataclass(frozen=True)
class SimMetrics:
    bias: np.ndarray
    rmse: float
    coverage: np.ndarray
    n_reps: int
    censoring_rate_observed: float
    n_failed: int = 0

    def record(self, design: SimDesign) -> dict:
        """Flat record with the columns of a simulation results table."""
        return {
            "design": design.design_id,
            "u": design.u,
            "n": design.n,
            "cens_pct": 100.0 * self.censoring_rate_observed,
            "bias": [float(v) for v in self.bias],
            "rmse": float(self.rmse),
            "coverage": [float(v) for v in self.coverage],
        }


def _draw_latents(design_id: int, n: int, rng: np.random.Generator) -> dict:
    u = rng.uniform(size=n)
    if design_id == 1:
        w2 = rng.exponential(1.0, size=n)
        z2 = (w2 + 0.5 * u - 1 > 0).astype(float)
        z3 = rng.uniform(size=n)
    elif design_id == 2:
        w2 = rng.lognormal(0.0, 1.0, size=n)
        z2 = w2 + 0.5 * u + 0.2 * rng.uniform(size=n)
        z3 = rng.exponential(1.0, size=n)
    else:
        w2 = rng.binomial(1, 0.5, size=n).astype(float)
        z2 = (w2 + 0.5 * u - 1 > 0).astype(float)
        z3 = rng.uniform(size=n)
    ones = np.ones(n)
    z = np.column_stack([ones, z2, z3])
    w = np.column_stack([ones, w2, z3])
    t = np.exp(z.sum(axis=1) * u)
    return {"U": u, "Z": z, "W": w, "T": t}


def gen_design(design: SimDesign, rng: np.random.Generator | None = None, return_latents: bool = False):
    """Simulate one sample of size ``design.n``.

    Without ``rng`` the sample is drawn from ``design.seed``. With
    ``return_latents`` the latent ``U``, ``T`` and ``C`` come back as well.
    """
    if rng is None:
        rng = np.random.default_rng([design.seed, _DATA_STREAM])
    lat = _draw_latents(design.design_id, design.n, rng)
    c = rng.exponential(1.0 / design.lam, size=design.n)
    t = lat["T"]
    ds = Dataset(np.minimum(t, c), (t <= c).astype(float), lat["Z"], lat["W"])
    if return_latents:
        return ds, {"U": lat["U"], "T": t, "C": c}
    return ds


def censoring_rate(design_id: int, lam: float, n_draws: int = 10**6, seed: int = 0) -> float:
    """Monte Carlo estimate of P(delta = 0) for a design and censoring rate."""
    rng = np.random.default_rng([seed, design_id])
    t = _draw_latents(design_id, n_draws, rng)["T"]
    c = rng.exponential(1.0 / lam, size=n_draws)
    return float(np.mean(t > c))


def default_fit_config(u: float, n_starts: int = 100, seed: int = 0) -> FitConfig:
    """Search box [0, 1]^3 with uniform multi-start, as in the simulation study."""
    return FitConfig(u, OptimConfig((0.0,) * 3, (1.0,) * 3, n_starts=n_starts, seed=seed))


def _fit_beta(dataset: Dataset, cfg: FitConfig) -> np.ndarray:
    return fit(dataset, cfg).beta_hat


def _replication(design: SimDesign, fit_cfg: FitConfig, estimator, r: int):
    rng = np.random.default_rng([design.seed, _DATA_STREAM, r])
    ds = gen_design(design, rng)
    cens = ds.censoring_fraction
    try:
        beta = np.asarray(estimator(ds, fit_cfg), dtype=float)
        boot_rng = np.random.default_rng([design.seed, _WARP_STREAM, r])
        idx, _ = resample_indices(ds, boot_rng)
        beta_star = np.asarray(estimator(ds.take(idx), fit_cfg), dtype=float)
    except (ValueError, RuntimeError) as exc:
        return None, None, cens, f"replication {r}: {exc}"
    return beta, beta_star, cens, None


def warp_speed_coverage(beta_hat, beta_star, beta0, level: float = 0.95) -> np.ndarray:
    """Coverage from one bootstrap draw per replication.

    The centered draws ``beta_star - beta_hat`` are pooled over replications;
    with ``q_lo, q_hi`` their quantiles, replication ``r`` covers component
    ``k`` when ``beta_hat[r,k] - q_hi <= beta0[k] <= beta_hat[r,k] - q_lo``.
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    diffs = np.asarray(beta_star, dtype=float) - beta_hat
    alpha = 1.0 - level
    q_lo, q_hi = np.quantile(diffs, [alpha / 2, 1 - alpha / 2], axis=0)
    covered = (beta_hat - q_hi <= beta0) & (beta0 <= beta_hat - q_lo)
    return covered.mean(axis=0)


def run_monte_carlo(
    design: SimDesign,
    n_reps: int,
    fit_cfg: FitConfig | None = None,
    workers: int = 1,
    estimator=None,
) -> SimMetrics:
    """Replicate estimation ``n_reps`` times and summarize bias, RMSE and coverage.

    Each replication simulates its own sample, fits it, and refits one
    bootstrap resample of it. Replication ``r`` uses substreams of
    ``design.seed`` indexed by ``r``, so results do not depend on ``workers``
    and a longer run extends a shorter one.

    ``estimator(dataset, fit_cfg) -> beta`` replaces the fit (test hook).
    """
    if fit_cfg is None:
        fit_cfg = default_fit_config(design.u)
    fit_cfg = replace(fit_cfg, u=design.u)
    lo, hi = fit_cfg.optim.lower, fit_cfg.optim.upper
    if np.any(design.beta0 < lo) or np.any(design.beta0 > hi):
        raise ValueError("search box does not contain the true coefficients")
    if estimator is None:
        estimator = _fit_beta
    job = functools.partial(_replication, design, fit_cfg, estimator)
    out = parallel_map(job, range(n_reps), workers)

    failures = [msg for *_, msg in out if msg is not None]
    for msg in failures:
        log.warning(msg)
    if len(failures) >= MAX_FAILURE_SHARE * n_reps and failures:
        raise RuntimeError(f"{len(failures)} of {n_reps} replications failed: {failures[0]}")
    ok = [o for o in out if o[3] is None]
    beta_hat = np.array([o[0] for o in ok])
    beta_star = np.array([o[1] for o in ok])
    beta0 = design.beta0
    err = beta_hat - beta0
    return SimMetrics(
        bias=err.mean(axis=0),
        rmse=float(np.sqrt(np.mean(np.sum(err**2, axis=1)))),
        coverage=warp_speed_coverage(beta_hat, beta_star, beta0),
        n_reps=len(ok),
        censoring_rate_observed=float(np.mean([o[2] for o in out])),
        n_failed=len(failures),
    )


def synthetic_jtpa(n: int = 802, seed: int = 0, follow_up: float = 900.0) -> dict:
    """Synthetic sample shaped like a job-training experiment. Not real data.

    Columns: ``days`` (time to employment), ``delta``, ``treatment``
    (program participation), ``age`` and ``assignment`` (random offer).
    Compliance follows 339/524 among those offered and 36/278 among the
    rest. Follow-up ends uniformly before ``follow_up`` days, so high
    quantiles of the duration fall beyond the last censoring time.
    """
    rng = np.random.default_rng([seed, 0x17FA])
    assignment = (rng.uniform(size=n) < 524 / 802).astype(float)
    p_treat = np.where(assignment == 1, 339 / 524, 36 / 278)
    u = rng.uniform(size=n)
    # Endogenous take-up: low-U subjects (quick finders) join less often.
    treatment = (rng.uniform(size=n) < np.clip(p_treat * (0.6 + 0.8 * u), 0, 1)).astype(float)
    age = rng.integers(22, 55, size=n).astype(float)
    log_t = 2.0 + 6.0 * u - 0.3 * u * treatment + 0.01 * u * (age - 22)
    t = np.exp(log_t)
    c = rng.uniform(0.3 * follow_up, follow_up, size=n)
    days = np.maximum(np.round(np.minimum(t, c)), 1.0)
    return {
        "days": days,
        "delta": (t <= c).astype(float),
        "treatment": treatment,
        "age": age,
        "assignment": assignment,
    }
