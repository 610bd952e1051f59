"""Automatic DBSCAN parameter selection from k-NN dissimilarity ECDFs.

For each neighbor rank k between 2 and round(ln n), the empirical CDF of
the k-th-nearest-neighbor dissimilarities is smoothed with a cubic spline;
the curve with the sharpest rise is handed to Kneedle, and the detected
knee becomes epsilon. min_samples is round(ln n) throughout.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import UnivariateSpline

from .dissimilarity import DissimilarityMatrix
from .errors import EmptyAnalysisError, NoKneeError

logger = logging.getLogger(__name__)

DEFAULT_SENSITIVITY = 1.0
DEFAULT_SMOOTHING = 0.1
MIN_ANALYSIS_VALUES = 8
RETRIM_SHARE = 0.6
MAX_RETRIMS = 3


@dataclass(frozen=True)
class EcdfCurve:
    """Step curve of sorted samples; ys jump by exactly 1/n per sample."""

    k: int
    xs: np.ndarray
    ys: np.ndarray


@dataclass(frozen=True)
class SmoothCurve:
    """Smoothed curve resampled on an even x-grid."""

    xs: np.ndarray
    ys: np.ndarray
    degenerate: bool = False


@dataclass(frozen=True)
class AutoConfig:
    chosen_k: int
    epsilon: float
    min_samples: int
    knee_x: float
    smoothing: float
    sensitivity: float
    retrimmed: bool = False
    fallback: bool = False
    retrim_failed: bool = False
    retrim_count: int = 0


def round_ln(n: int) -> int:
    """round(ln n) with half-away-from-zero rounding."""
    return int(math.floor(math.log(n) + 0.5))


def knn_dissimilarities(matrix: DissimilarityMatrix, k: int) -> np.ndarray:
    """Per value, the k-th smallest dissimilarity to any other value."""
    n = matrix.n
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must be in [1, {n - 1}], got {k}")
    rows = matrix.d.copy()
    np.fill_diagonal(rows, np.inf)
    rows.sort(axis=1)
    return rows[:, k - 1]


def ecdf(samples, k: int = 1) -> EcdfCurve:
    """Empirical CDF of the samples: xs sorted, ys[i] = (i+1)/n."""
    xs = np.sort(np.asarray(samples, dtype=np.float64))
    if xs.size == 0:
        raise ValueError("ecdf needs at least one sample")
    ys = np.arange(1, xs.size + 1, dtype=np.float64) / xs.size
    return EcdfCurve(k, xs, ys)


def smooth_spline(curve: EcdfCurve, s: float = DEFAULT_SMOOTHING) -> SmoothCurve:
    """Cubic smoothing-spline fit of an ECDF, resampled on an even grid.

    The residual budget passed to the spline is s per fitted point.
    Duplicate x positions collapse to the top of their step beforehand;
    the result is clamped to [0, 1] and made monotone non-decreasing.
    A degenerate x-range returns the step curve unchanged, flagged.
    """
    xs, ys = curve.xs, curve.ys
    if xs[-1] == xs[0]:
        return SmoothCurve(xs.copy(), ys.copy(), degenerate=True)
    # keep the last (highest) y per distinct x: the top of the ECDF step
    keep = np.append(xs[1:] != xs[:-1], True)
    ux, uy = xs[keep], ys[keep]
    grid = np.linspace(xs[0], xs[-1], max(200, xs.size))
    degree = min(3, ux.size - 1)
    spline = UnivariateSpline(ux, uy, k=degree, s=s * ux.size)
    smoothed = np.clip(spline(grid), 0.0, 1.0)
    smoothed = np.maximum.accumulate(smoothed)
    return SmoothCurve(grid, smoothed)


def kneedle(curve: SmoothCurve, sensitivity: float = DEFAULT_SENSITIVITY) -> float:
    """Rightmost confirmed knee of a monotone curve, in original x units.

    Both axes are normalized to [0, 1]; candidate knees are local maxima of
    the difference curve y - x, confirmed when the difference drops below
    (maximum - sensitivity * mean x spacing) before the next local maximum.
    """
    xs, ys = curve.xs, curve.ys
    if xs.size < 10:
        raise ValueError(f"kneedle needs at least 10 samples, got {xs.size}")
    x_span = xs[-1] - xs[0]
    y_span = ys.max() - ys.min()
    if x_span <= 0 or y_span <= 0:
        raise NoKneeError("curve has no extent to detect a knee in")
    x_norm = (xs - xs[0]) / x_span
    y_norm = (ys - ys.min()) / y_span
    diff = y_norm - x_norm

    maxima = [
        i
        for i in range(1, diff.size - 1)
        if diff[i] > diff[i - 1] and diff[i] >= diff[i + 1]
    ]
    if not maxima:
        raise NoKneeError("difference curve has no local maxima")

    spacing = float(np.mean(np.diff(x_norm)))
    confirmed = []
    for position, index in enumerate(maxima):
        threshold = diff[index] - sensitivity * spacing
        end = maxima[position + 1] if position + 1 < len(maxima) else diff.size
        if np.any(diff[index + 1 : end] < threshold):
            confirmed.append(index)
    if not confirmed:
        raise NoKneeError("no candidate knee fell below its sensitivity threshold")
    return float(xs[confirmed[-1]])


def select_epsilon(
    matrix: DissimilarityMatrix,
    sensitivity: float = DEFAULT_SENSITIVITY,
    smoothing: float = DEFAULT_SMOOTHING,
    epsilon_shift: float = 0.0,
) -> AutoConfig:
    """Pick epsilon from the sharpest smoothed k-NN ECDF and min_samples = round(ln n).

    The rank k' maximizing the largest single-step increase of the smoothed
    curve is selected (ties toward smaller k); Kneedle runs on that curve.
    Without a confirmed knee, epsilon falls back to the median 2-NN
    dissimilarity, flagged.
    """
    n = matrix.n
    if n < MIN_ANALYSIS_VALUES:
        raise EmptyAnalysisError(
            f"need at least {MIN_ANALYSIS_VALUES} unique segment values, got {n}"
        )
    k_max = round_ln(n)
    smoothed: list[tuple[int, SmoothCurve]] = []
    for k in range(2, k_max + 1):
        curve = ecdf(knn_dissimilarities(matrix, k), k)
        smoothed.append((k, smooth_spline(curve, smoothing)))

    sharpness = [float(np.max(np.diff(sc.ys))) if sc.ys.size > 1 else 0.0 for _, sc in smoothed]
    best = int(np.argmax(sharpness))  # first occurrence wins: smaller k on ties
    chosen_k, chosen_curve = smoothed[best]

    min_samples = max(1, round_ln(n))
    try:
        knee = kneedle(chosen_curve, sensitivity)
        fallback = False
    except NoKneeError:
        knee = float(np.median(knn_dissimilarities(matrix, 2)))
        fallback = True
        logger.warning("no knee confirmed for k=%d; falling back to median 2-NN %.6g", chosen_k, knee)
    return AutoConfig(
        chosen_k=chosen_k,
        epsilon=knee + epsilon_shift,
        min_samples=min_samples,
        knee_x=knee,
        smoothing=smoothing,
        sensitivity=sensitivity,
        fallback=fallback,
    )


def retrim_epsilon(
    matrix: DissimilarityMatrix,
    previous: AutoConfig,
    clustering,
    epsilon_shift: float = 0.0,
) -> AutoConfig:
    """Shrink epsilon when one giant cluster dominates the clustering.

    If the largest cluster holds more than 60 % of the non-noise segments
    (instances, duplicates included), the k'-NN ECDF is rebuilt from the
    dissimilarities below the previous knee and knee detection runs again.
    Returns ``previous`` unchanged when the condition is not met, or a
    flagged copy when the trimmed curve is unusable.
    """
    sizes = [
        sum(len(matrix.values[m].members) for m in cluster.members)
        for cluster in clustering.clusters
    ]
    total = sum(sizes)
    if not sizes or total == 0 or max(sizes) <= RETRIM_SHARE * total:
        return previous

    samples = knn_dissimilarities(matrix, previous.chosen_k)
    trimmed = samples[samples < previous.knee_x]
    if trimmed.size < MIN_ANALYSIS_VALUES:
        logger.warning("re-trim skipped: only %d dissimilarities below the knee", trimmed.size)
        return replace(previous, retrim_failed=True)
    curve = ecdf(trimmed, previous.chosen_k)
    smoothed = smooth_spline(curve, previous.smoothing)
    if smoothed.degenerate or smoothed.xs.size < 10:
        logger.warning("re-trim skipped: trimmed curve is degenerate")
        return replace(previous, retrim_failed=True)
    try:
        knee = kneedle(smoothed, previous.sensitivity)
    except NoKneeError:
        logger.warning("re-trim skipped: no knee in the trimmed curve")
        return replace(previous, retrim_failed=True)
    return replace(
        previous,
        epsilon=knee + epsilon_shift,
        knee_x=knee,
        retrimmed=True,
        retrim_failed=False,
        retrim_count=previous.retrim_count + 1,
    )


def ecdf_rows(
    matrix: DissimilarityMatrix,
    smoothing: float = DEFAULT_SMOOTHING,
) -> list[tuple[int, float, float, float]]:
    """(k, x, y_raw, y_smoothed) rows over the smoothed grid, for diagnostics."""
    n = matrix.n
    if n < MIN_ANALYSIS_VALUES:
        raise EmptyAnalysisError(
            f"need at least {MIN_ANALYSIS_VALUES} unique segment values, got {n}"
        )
    rows: list[tuple[int, float, float, float]] = []
    for k in range(2, round_ln(n) + 1):
        samples = np.sort(knn_dissimilarities(matrix, k))
        curve = ecdf(samples, k)
        sc = smooth_spline(curve, smoothing)
        raw = np.searchsorted(samples, sc.xs, side="right") / samples.size
        rows.extend(
            (k, float(x), float(yr), float(ys))
            for x, yr, ys in zip(sc.xs, raw, sc.ys)
        )
    return rows
