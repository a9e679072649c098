"""Kaplan-Meier estimate of the censoring survival function G(s) = P(C >= s)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset

FLOOR_EPSILON = 1e-10


@dataclass(frozen=True)
class KmCurve:
    """Right-continuous step function with jumps at the censoring times.

    ``survival_values[j]`` is the value just after (and at) ``jump_times[j]``;
    before the first jump the curve equals one.
    """

    jump_times: np.ndarray
    survival_values: np.ndarray
    floor_epsilon: float = FLOOR_EPSILON

    def __post_init__(self):
        for name in ("jump_times", "survival_values"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    def __call__(self, t):
        return km_eval(self, t)


def km_fit(dataset: Dataset, floor_epsilon: float = FLOOR_EPSILON) -> KmCurve:
    """Product-limit estimate where the "events" are censorings (delta == 0).

    At each distinct time ``s`` carrying censored rows the factor is
    ``1 - dN(s)/R(s)``, with ``R(s)`` counting every row with ``y >= s``
    whatever its event flag. Each survival value is accumulated as an exact
    integer ratio and rounded once, so small-sample values such as 2/3 are
    the correctly rounded doubles.
    """
    y = dataset.y
    censored = dataset.delta == 0
    times = np.unique(y[censored])
    if times.size == 0:
        return KmCurve(np.empty(0), np.empty(0), floor_epsilon)
    y_sorted = np.sort(y)
    at_risk = y.size - np.searchsorted(y_sorted, times, side="left")
    c_sorted = np.sort(y[censored])
    d = np.searchsorted(c_sorted, times, side="right") - np.searchsorted(
        c_sorted, times, side="left"
    )
    values = np.empty(times.size)
    num, den = 1, 1
    for j, (r, dj) in enumerate(zip(at_risk.tolist(), d.tolist())):
        num *= r - dj
        den *= r
        if num == 0:
            values[j:] = 0.0
            break
        values[j] = num / den
    return KmCurve(times, values, floor_epsilon)


def km_eval_flagged(curve: KmCurve, t) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the curve at ``t`` and report where the floor was applied."""
    t = np.asarray(t, dtype=float)
    if curve.jump_times.size == 0:
        return np.ones_like(t), np.zeros(t.shape, dtype=bool)
    idx = np.searchsorted(curve.jump_times, t, side="right") - 1
    vals = np.where(idx >= 0, curve.survival_values[np.maximum(idx, 0)], 1.0)
    clipped = vals < curve.floor_epsilon
    return np.where(clipped, curve.floor_epsilon, vals), clipped


def km_eval(curve: KmCurve, t):
    """Value of the curve at ``t`` (jump at ``t`` included), floored at ``floor_epsilon``.

    Scalar in, float out; array in, array out.
    """
    vals, _ = km_eval_flagged(curve, t)
    return float(vals) if vals.ndim == 0 else vals
