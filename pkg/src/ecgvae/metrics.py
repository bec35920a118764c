"""Distribution comparison: RBF kernel, median-heuristic bandwidth, MMD^2.

All statistics run in float64 over deterministic pair orderings. The biased
(V-statistic) estimator is non-negative by construction and exactly zero when
both samples are identical; the unbiased variant drops diagonal terms and may
go slightly negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import DimensionError, NumericsError


def _as_matrix(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be rank 2, got rank {arr.ndim}")
    if arr.shape[0] < 1:
        raise DimensionError(f"{name} is empty")
    if not np.isfinite(arr).all():
        raise NumericsError(f"{name} contains non-finite values")
    return arr


def rbf_kernel(x: np.ndarray, y: np.ndarray, sigma: float) -> np.ndarray:
    """Gram matrix k(x, y) = exp(-||x - y||^2 / (2 sigma^2))."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x = _as_matrix(x, "x")
    y = _as_matrix(y, "y")
    if x.shape[1] != y.shape[1]:
        raise DimensionError(f"feature dims differ: {x.shape[1]} vs {y.shape[1]}")
    sq = cdist(x, y, metric="sqeuclidean")
    return np.exp(-sq / (2.0 * sigma * sigma))


def median_heuristic(a, b, max_points: int = 2000, seed: int = 0) -> float:
    """Median pairwise distance over the pooled samples.

    Exact when the pool has at most `max_points` rows; above that a seeded
    uniform subsample of `max_points` rows is used. A degenerate pool (all
    rows identical) falls back to sigma = 1.0.
    """
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"feature dims differ: {a.shape[1]} vs {b.shape[1]}")
    pool = np.concatenate([a, b], axis=0)
    if pool.shape[0] > max_points:
        rng = np.random.default_rng(seed)
        pick = rng.choice(pool.shape[0], size=max_points, replace=False)
        pool = pool[np.sort(pick)]
    if pool.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(pool, metric="euclidean")))
    if med <= 0.0:
        return 1.0
    return med


def mmd2_biased(a, b, sigma: float) -> float:
    """V-statistic MMD^2: mean k(a,a) + mean k(b,b) - 2 mean k(a,b) >= 0."""
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    kaa = rbf_kernel(a, a, sigma)
    kbb = rbf_kernel(b, b, sigma)
    kab = rbf_kernel(a, b, sigma)
    v = float(kaa.mean() + kbb.mean() - 2.0 * kab.mean())
    return max(v, 0.0)


def mmd2_unbiased(a, b, sigma: float) -> float:
    """U-statistic MMD^2 (diagonals excluded); needs >= 2 rows per side."""
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    m, n = a.shape[0], b.shape[0]
    if m < 2 or n < 2:
        raise DimensionError("unbiased MMD^2 needs at least 2 samples per side")
    kaa = rbf_kernel(a, a, sigma)
    kbb = rbf_kernel(b, b, sigma)
    kab = rbf_kernel(a, b, sigma)
    term_a = (kaa.sum() - np.trace(kaa)) / (m * (m - 1))
    term_b = (kbb.sum() - np.trace(kbb)) / (n * (n - 1))
    return float(term_a + term_b - 2.0 * kab.mean())


@dataclass
class MmdReport:
    """One comparison row, ready for the CSV writer."""

    label_a: str
    label_b: str
    n_a: int
    n_b: int
    sigma: float
    mmd2_biased: float
    mmd2_unbiased: float
    seed: int


def compare_sets(a, b, label_a: str = "A", label_b: str = "B",
                 sigma: float | None = None, seed: int = 0) -> MmdReport:
    """Full comparison with median-heuristic sigma unless one is given."""
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    s = median_heuristic(a, b, seed=seed) if sigma is None else float(sigma)
    if s <= 0:
        raise ValueError(f"sigma must be positive, got {s}")
    return MmdReport(
        label_a=label_a,
        label_b=label_b,
        n_a=a.shape[0],
        n_b=b.shape[0],
        sigma=s,
        mmd2_biased=mmd2_biased(a, b, s),
        mmd2_unbiased=mmd2_unbiased(a, b, s) if min(a.shape[0], b.shape[0]) >= 2
        else float("nan"),
        seed=seed,
    )
