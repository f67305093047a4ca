"""Significance tests and bootstrap confidence intervals over per-image metrics"""

from typing import Callable, Sequence

import numpy as np
from scipy import stats

from shared.exceptions import ValidationError
from shared.models.records import BootstrapResult, TTestResult
from shared.utils.seeding import derive_rng

# spreads at or below this (relative to the data scale) count as zero
DEGENERATE_RTOL = 1e-12


def _as_values(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def _negligible(spread: float, scale: float) -> bool:
    return spread <= DEGENERATE_RTOL * max(1.0, scale)


def paired_ttest(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Two-sided t-test on the differences a - b with n - 1 degrees of freedom.

    Differences without spread give p = 1 and the degenerate flag instead of an error.
    """
    a, b = _as_values(a, "a"), _as_values(b, "b")
    if a.size != b.size:
        raise ValidationError(f"paired samples differ in length: {a.size} vs {b.size}")
    if a.size < 2:
        raise ValidationError(f"paired t-test needs at least 2 pairs, got {a.size}")
    diffs = a - b
    dof = float(a.size - 1)
    if _negligible(float(np.std(diffs, ddof=1)), float(np.max(np.abs(diffs)))):
        return TTestResult(statistic=0.0, p_value=1.0, dof=dof, degenerate=True)
    result = stats.ttest_rel(a, b)
    return TTestResult(statistic=float(result.statistic), p_value=float(result.pvalue), dof=dof)


def independent_ttest(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Welch's two-sample t-test; both samples without spread is the degenerate case (p = 1)"""
    a, b = _as_values(a, "a"), _as_values(b, "b")
    if a.size < 2 or b.size < 2:
        raise ValidationError(f"Welch t-test needs at least 2 values per sample, got {a.size} and {b.size}")
    va, vb = np.var(a, ddof=1) / a.size, np.var(b, ddof=1) / b.size
    scale = float(max(np.max(np.abs(a)), np.max(np.abs(b))))
    if _negligible(float(np.sqrt(va + vb)), scale):
        return TTestResult(statistic=0.0, p_value=1.0, dof=float(a.size + b.size - 2), degenerate=True)
    dof = (va + vb) ** 2 / (va ** 2 / (a.size - 1) + vb ** 2 / (b.size - 1))
    result = stats.ttest_ind(a, b, equal_var=False)
    return TTestResult(statistic=float(result.statistic), p_value=float(result.pvalue), dof=float(dof))


def bootstrap_metric(
    samples: Sequence,
    metric_fn: Callable[[Sequence], float],
    n_boot: int = 1000,
    seed: int = 0,
) -> BootstrapResult:
    """Resample with replacement, recompute the metric per replicate, report the 2.5/97.5 percentiles"""
    if len(samples) == 0:
        raise ValidationError("bootstrap needs at least one sample")
    if n_boot < 100:
        raise ValidationError(f"n_boot must be >= 100, got {n_boot}")
    rng = derive_rng(seed, "bootstrap")
    pool = np.asarray(samples) if np.isscalar(samples[0]) else list(samples)
    size = len(samples)
    replicates = np.empty(n_boot)
    for i in range(n_boot):
        idx = rng.integers(0, size, size=size)
        drawn = pool[idx] if isinstance(pool, np.ndarray) else [pool[j] for j in idx]
        replicates[i] = metric_fn(drawn)
    low, high = np.percentile(replicates, [2.5, 97.5])
    return BootstrapResult(
        estimate=float(metric_fn(pool)),
        mean=float(replicates.mean()),
        std=float(replicates.std()),
        ci_low=float(low),
        ci_high=float(high),
        n_boot=n_boot,
    )
