"""Observational data model: duration, event indicator, regressors, instruments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Observation:
    """One subject: follow-up time ``y = min(T, C)``, event flag, regressors, instruments."""

    y: float
    delta: int
    z: tuple[float, ...]
    w: tuple[float, ...]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


class Dataset:
    """An i.i.d. sample of ``(Y, delta, Z, W)`` stored column-wise.

    Arrays are copied on construction and marked read-only, so a Dataset can
    be shared between workers. Row order is kept exactly as given. No
    intercept is ever added here; include a column of ones in ``z``/``w``
    yourself if the model needs one.

    Parameters
    ----------
    y : array_like, shape (n,)
        Observed follow-up times.
    delta : array_like, shape (n,)
        1 if the event was observed (uncensored), 0 if censored.
    z : array_like, shape (n, k)
        Regressors.
    w : array_like, shape (n, l)
        Instruments (should contain every exogenous regressor).
    """

    __slots__ = ("y", "delta", "z", "w")

    def __init__(self, y, delta, z, w):
        y = np.asarray(y, dtype=float).reshape(-1)
        delta = np.asarray(delta, dtype=float).reshape(-1)
        z = np.asarray(z, dtype=float)
        w = np.asarray(w, dtype=float)
        n = y.shape[0]
        if z.ndim == 1:
            z = z.reshape(n, -1) if n else z.reshape(0, 0)
        if w.ndim == 1:
            w = w.reshape(n, -1) if n else w.reshape(0, 0)
        if delta.shape[0] != n or z.shape[0] != n or w.shape[0] != n:
            raise ValueError(
                f"row count mismatch: y={n}, delta={delta.shape[0]}, "
                f"z={z.shape[0]}, w={w.shape[0]}"
            )
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "delta", _frozen(delta))
        object.__setattr__(self, "z", _frozen(z))
        object.__setattr__(self, "w", _frozen(w))

    def __setattr__(self, name, value):
        raise AttributeError("Dataset is immutable")

    def __reduce__(self):
        return (Dataset, (self.y, self.delta, self.z, self.w))

    @classmethod
    def from_observations(cls, observations) -> "Dataset":
        observations = list(observations)
        if not observations:
            return cls(np.empty(0), np.empty(0), np.empty((0, 0)), np.empty((0, 0)))
        k = {len(o.z) for o in observations}
        l = {len(o.w) for o in observations}
        if len(k) != 1 or len(l) != 1:
            raise ValueError("observations have inconsistent z or w lengths")
        return cls(
            [o.y for o in observations],
            [o.delta for o in observations],
            [list(o.z) for o in observations],
            [list(o.w) for o in observations],
        )

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def k(self) -> int:
        return self.z.shape[1]

    @property
    def l(self) -> int:  # noqa: E743
        return self.w.shape[1]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> Observation:
        return Observation(
            float(self.y[i]), int(self.delta[i]), tuple(self.z[i]), tuple(self.w[i])
        )

    def __iter__(self):
        return (self[i] for i in range(self.n))

    def take(self, idx) -> "Dataset":
        """Rows selected by ``idx`` (repeats allowed, as in a bootstrap resample)."""
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.y[idx], self.delta[idx], self.z[idx], self.w[idx])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            np.array_equal(self.y, other.y)
            and np.array_equal(self.delta, other.delta)
            and self.z.shape == other.z.shape
            and self.w.shape == other.w.shape
            and np.array_equal(self.z, other.z)
            and np.array_equal(self.w, other.w)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"Dataset(n={self.n}, k={self.k}, l={self.l})"

    @property
    def censoring_fraction(self) -> float:
        return float(np.mean(1.0 - self.delta)) if self.n else float("nan")


def validate(dataset: Dataset) -> list[str]:
    """List every violated data invariant; an empty list means the sample is usable."""
    report = []
    if dataset.n == 0:
        return ["empty dataset"]
    for i in np.flatnonzero(~np.isfinite(dataset.y)):
        report.append(f"non-finite duration at row {i}")
    for i in np.flatnonzero(np.isfinite(dataset.y) & (dataset.y <= 0)):
        report.append(f"nonpositive duration at row {i}")
    for i in np.flatnonzero((dataset.delta != 0) & (dataset.delta != 1)):
        report.append(f"non-binary event indicator at row {i}")
    for name, block in (("z", dataset.z), ("w", dataset.w)):
        if block.shape[1] == 0:
            report.append(f"{name} has no columns")
        for i in np.flatnonzero(~np.isfinite(block).all(axis=1)):
            report.append(f"non-finite {name} at row {i}")
    if not np.any(dataset.delta == 1):
        report.append("no uncensored observations")
    return report


def check(dataset: Dataset) -> None:
    """Raise ``ValueError`` listing the violations if ``dataset`` is not valid."""
    report = validate(dataset)
    if report:
        raise ValueError("; ".join(report))


def canonical_order(dataset: Dataset) -> np.ndarray:
    """Row permutation sorting the sample lexicographically on all columns.

    Estimators run on the canonically ordered sample so that floating point
    summation order, and hence the optimizer path, does not depend on how the
    rows were ingested.
    """
    keys = [dataset.w[:, j] for j in range(dataset.l - 1, -1, -1)]
    keys += [dataset.z[:, j] for j in range(dataset.k - 1, -1, -1)]
    keys += [dataset.delta, dataset.y]
    return np.lexsort(keys)


def check_quantile(u) -> float:
    """Return ``u`` as a float, raising ``ValueError`` unless 0 < u < 1."""
    u = float(u)
    if not 0.0 < u < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {u}")
    return u
