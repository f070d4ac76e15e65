"""Small statistics helpers shared by the Monte-Carlo experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EstimateWithError:
    """A Monte-Carlo estimate with its standard error."""

    value: float
    stderr: float
    reps: int

    def __post_init__(self):
        if self.reps < 2:
            raise ValueError("reps must be >= 2")
        if self.stderr < 0:
            raise ValueError("stderr must be nonnegative")

    def agrees(self, reference: float, n_sigma: float = 3.0,
               floor: float = 0.0) -> bool:
        tol = n_sigma * max(self.stderr, floor)
        return abs(self.value - reference) <= tol


def binomial_estimate(hits: int, reps: int) -> EstimateWithError:
    p = hits / reps
    return EstimateWithError(p, float(np.sqrt(p * (1.0 - p) / reps)), reps)


def mean_estimate(samples: np.ndarray) -> EstimateWithError:
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    return EstimateWithError(float(samples.mean()),
                             float(samples.std(ddof=1) / np.sqrt(n)), n)


def merge_estimates(a: EstimateWithError, b: EstimateWithError) -> EstimateWithError:
    """Merge two independent mean estimates of the same quantity.

    Associative and order-independent: pooled by replicate counts.
    """
    n = a.reps + b.reps
    value = (a.value * a.reps + b.value * b.reps) / n
    var = (a.stderr ** 2 * a.reps ** 2 + b.stderr ** 2 * b.reps ** 2) / n ** 2
    return EstimateWithError(value, float(np.sqrt(var)), n)


def loglog_slope(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares slope of log y vs log x; returns (slope, stderr)."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    n = lx.size
    if n < 2:
        raise ValueError("need at least two ladder points")
    A = np.vstack([lx, np.ones(n)]).T
    coef, res, _, _ = np.linalg.lstsq(A, ly, rcond=None)
    if n > 2 and res.size:
        sigma2 = res[0] / (n - 2)
        cov = sigma2 * np.linalg.inv(A.T @ A)
        se = float(np.sqrt(cov[0, 0]))
    else:
        se = 0.0
    return float(coef[0]), se


def fitted_ratio_bounds(values: np.ndarray, references: np.ndarray
                        ) -> tuple[float, float]:
    """Smallest and largest ratio value/reference over a grid.

    The fitted constants of an up-to-constant inequality check: the lower
    bound holds with constant min(ratio), the upper with max(ratio).
    """
    r = np.asarray(values, dtype=float) / np.asarray(references, dtype=float)
    return float(r.min()), float(r.max())


def derive_seeds(seed: int, n: int, stream: int = 0) -> np.ndarray:
    """Per-replicate 64-bit seeds from (seed, stream), splittable scheme."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream,))
    return ss.generate_state(n, dtype=np.uint64)
