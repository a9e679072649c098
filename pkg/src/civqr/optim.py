"""Box-constrained Nelder-Mead with seeded uniform multi-start."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ALPHA, GAMMA, RHO, SIGMA = 1.0, 2.0, 0.5, 0.5

_START_STREAM = 0x57A27


@dataclass(frozen=True)
class OptimConfig:
    """Search box and Nelder-Mead settings.

    ``f_tol`` stops a run once the spread of objective values over the
    simplex drops below it; ``x_tol`` once every vertex is within that
    (max-norm) distance of the best vertex. ``simplex_step`` sets the edge
    of the initial simplex as a fraction of each box width; ``box_mode``
    chooses how infeasible trial points are handled (see ``nelder_mead``).
    """

    box_lower: tuple
    box_upper: tuple
    n_starts: int = 100
    max_iters: int = 500
    f_tol: float = 1e-8
    x_tol: float = 1e-6
    seed: int = 0
    box_mode: str = "clip"
    simplex_step: float = 0.2

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.box_lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.box_upper))
        object.__setattr__(self, "box_lower", lo)
        object.__setattr__(self, "box_upper", hi)
        if len(lo) != len(hi) or not lo:
            raise ValueError("box bounds must be nonempty and of equal length")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError("box_lower must be strictly below box_upper")
        if self.n_starts < 1 or self.max_iters < 1:
            raise ValueError("n_starts and max_iters must be positive")
        if self.f_tol < 0 or self.x_tol < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.box_mode not in ("reject", "clip"):
            raise ValueError("box_mode must be 'reject' or 'clip'")
        if not 0 < self.simplex_step <= 1:
            raise ValueError("simplex_step must lie in (0, 1]")

    @property
    def dim(self) -> int:
        return len(self.box_lower)

    @property
    def lower(self) -> np.ndarray:
        return np.array(self.box_lower)

    @property
    def upper(self) -> np.ndarray:
        return np.array(self.box_upper)


@dataclass(frozen=True)
class StartSummary:
    x0: np.ndarray
    x: np.ndarray
    f: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class OptimResult:
    best_x: np.ndarray
    best_f: float
    starts: list = field(repr=False)

    @property
    def best_start(self) -> int:
        return int(np.argmin([s.f for s in self.starts]))


def _inside(x, lo, hi) -> bool:
    return bool(np.all(x >= lo) and np.all(x <= hi))


def initial_simplex(x0, lo, hi, step: float) -> np.ndarray:
    """``x0`` plus one vertex per axis, offset by ``step`` box widths (inward if needed)."""
    k = x0.shape[0]
    simplex = np.tile(x0, (k + 1, 1))
    step = step * (hi - lo)
    for i in range(k):
        v = x0[i] + step[i]
        simplex[i + 1, i] = v if v <= hi[i] else x0[i] - step[i]
    return simplex


def nelder_mead(f, x0, cfg: OptimConfig):
    """Minimize ``f`` inside the box from ``x0``.

    With ``box_mode="clip"`` trial points outside the box are projected
    onto it before evaluation, so minima on a face are reachable. With
    ``"reject"`` they get objective ``+inf`` and are never accepted. Either
    way every vertex stays feasible and the best value never increases.

    Returns
    -------
    x : ndarray
        Best vertex.
    f_val : float
    iterations : int
    converged : bool
        True if a tolerance was met before ``max_iters``.
    """
    lo, hi = cfg.lower, cfg.upper
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != cfg.dim:
        raise ValueError(f"x0 has length {x0.shape[0]}, box has dimension {cfg.dim}")
    if not _inside(x0, lo, hi):
        raise ValueError("starting point lies outside the box")

    clip = cfg.box_mode == "clip"

    def fb(x):
        if not _inside(x, lo, hi):
            if not clip:
                return math.inf
            np.clip(x, lo, hi, out=x)
        v = float(f(x))
        return math.inf if math.isnan(v) else v

    k = cfg.dim
    sim = initial_simplex(x0, lo, hi, cfg.simplex_step)
    fs = np.array([fb(v) for v in sim])
    iterations = 0
    converged = False
    while True:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        spread = fs[-1] - fs[0]
        diameter = np.max(np.abs(sim[1:] - sim[0]))
        if spread < cfg.f_tol or diameter < cfg.x_tol:
            converged = True
            break
        if iterations >= cfg.max_iters:
            break
        iterations += 1

        centroid = sim[:-1].mean(axis=0)
        worst = sim[-1]
        xr = centroid + ALPHA * (centroid - worst)
        fr = fb(xr)
        if fs[0] <= fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[0]:
            xe = centroid + GAMMA * (xr - centroid)
            fe = fb(xe)
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-1]:
            xc = centroid + RHO * (xr - centroid)
            fc = fb(xc)
            if fc <= fr:
                sim[-1], fs[-1] = xc, fc
                continue
        else:
            xc = centroid + RHO * (worst - centroid)
            fc = fb(xc)
            if fc < fs[-1]:
                sim[-1], fs[-1] = xc, fc
                continue
        for i in range(1, k + 1):
            sim[i] = sim[0] + SIGMA * (sim[i] - sim[0])
            fs[i] = fb(sim[i])
    return sim[0].copy(), float(fs[0]), iterations, converged


def start_point(cfg: OptimConfig, index: int) -> np.ndarray:
    """Uniform draw on the box from the substream for start ``index``."""
    rng = np.random.default_rng([cfg.seed, _START_STREAM, index])
    return rng.uniform(cfg.lower, cfg.upper)


def multi_start(f, cfg: OptimConfig) -> OptimResult:
    """Run Nelder-Mead from ``cfg.n_starts`` uniform starting points and keep the best.

    Each start draws from its own substream of ``cfg.seed``, so the result
    does not depend on the order in which starts are run. Ties keep the
    lowest start index.
    """
    starts = []
    for s in range(cfg.n_starts):
        x0 = start_point(cfg, s)
        x, fv, it, conv = nelder_mead(f, x0, cfg)
        starts.append(StartSummary(x0, x, fv, it, conv))
    best = min(range(len(starts)), key=lambda i: starts[i].f)
    return OptimResult(starts[best].x.copy(), starts[best].f, starts)
