"""Frequency-threshold tuning and the adaptive tree-count stopping rule.

The number of trees is driven by an estimate of how many rules two refits
on the same data would disagree on: for each stored path, the binomial CDF
of its occurrence count around the selection cutoff measures how likely the
path is to flip in or out of the selection.  Trees are added until the
estimated disagreement falls below a target level.

The threshold itself is tuned by cross-validation against two objectives,
picking the value whose (error, stability) point lies closest to an ideal
of zero unexplained variance and 90% stability.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from .aggregation import MAX_RULES
from .data import Dataset, QuantileGrid
from .errors import TuningError
from .forest import ForestParams, grow_trees_into
from .metrics import (
    EvaluationReport,
    RepeatEvaluation,
    build_fold_forests,
    cv_evaluate,
    evaluate_folds_at,
)
from .rules import PathFrequencyTable

logger = logging.getLogger(__name__)

IDEAL_STABILITY = 0.9


def binomial_cdf(k: int, trials: int, prob: float) -> float:
    """P(X <= k) for X ~ Binomial(trials, prob)."""
    if not 0 <= prob <= 1:
        raise ValueError("prob must be in [0, 1]")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if k < 0:
        return 0.0
    if k >= trials:
        return 1.0
    return float(binom.cdf(k, trials, prob))


def _flip_scores(counts: np.ndarray, num_trees: int, p0: float) -> np.ndarray:
    """Per-path probability that a refit lands at or below the cutoff."""
    cutoff = int(np.floor(num_trees * p0))
    if cutoff >= num_trees:
        return np.ones(len(counts))
    return binom.cdf(cutoff, num_trees, counts / num_trees)


def stopping_epsilon(table: PathFrequencyTable, p0: float) -> float:
    """Estimated rule-list disagreement between two refits at threshold p0.

    With z the per-path binomial CDF at floor(M * p0), returns
    sum z(1-z) / sum (1-z) over all stored paths; 0 when the denominator
    vanishes (every path certain to stay selected).
    """
    if len(table) == 0:
        raise ValueError("empty path table")
    counts = np.fromiter(table.counts.values(), dtype=np.int64, count=len(table))
    unique, multiplicity = np.unique(counts, return_counts=True)
    z = _flip_scores(unique, table.num_trees, p0)
    denominator = float(multiplicity @ (1.0 - z))
    if denominator == 0.0:
        return 0.0
    numerator = float(multiplicity @ (z * (1.0 - z)))
    return numerator / denominator


def threshold_grid(table: PathFrequencyTable, max_rules: int = MAX_RULES) -> np.ndarray:
    """Distinct occurrence frequencies usable as selection thresholds.

    A frequency value qualifies when thresholding strictly above it selects
    between 1 and ``max_rules`` paths.  Selections change exactly at these
    values, so they form the exhaustive tuning grid.
    """
    counts = np.fromiter(table.counts.values(), dtype=np.int64, count=len(table))
    unique = np.unique(counts)  # ascending
    above = len(counts) - np.cumsum(
        np.bincount(np.searchsorted(unique, counts))
    )  # paths with count > unique[i]
    keep = (above >= 1) & (above <= max_rules)
    return unique[keep] / table.num_trees


def epsilon_threshold_grid(table: PathFrequencyTable, max_rules: int = MAX_RULES,
                           grid_size: int = 50) -> np.ndarray:
    """Evenly spaced thresholds spanning the usable selection range.

    Thresholds pinned to realized frequencies always have paths exactly at
    the selection boundary, whose refit-flip probability stays near 1/2 at
    any forest size; an even spread of the same range covers the identical
    family of selections without pinning every grid point to a boundary.
    """
    admissible = threshold_grid(table, max_rules)
    if len(admissible) == 0:
        return admissible
    return np.linspace(admissible.min(), admissible.max(), grid_size)


STOPPING_QUANTILE = 0.95


def grid_stopping_epsilon(table: PathFrequencyTable, max_rules: int = MAX_RULES,
                          quantile: float = STOPPING_QUANTILE) -> float:
    """Upper-quantile of stopping_epsilon over the even threshold grid.

    Thresholds falling in wide gaps of the frequency spectrum are
    trivially stable and would dominate a plain mean, letting the forest
    stop while the dense regions the tuner actually operates in still
    churn; requiring the upper quantile below the level means nearly all
    candidate selections are individually stable.  An empty grid
    (degenerate forest with nothing to select) counts as converged.
    """
    thresholds = epsilon_threshold_grid(table, max_rules)
    if len(thresholds) == 0:
        return 0.0
    counts = np.fromiter(table.counts.values(), dtype=np.int64, count=len(table))
    unique, multiplicity = np.unique(counts, return_counts=True)
    cutoffs = np.floor(table.num_trees * thresholds).astype(np.int64)
    z = binom.cdf(cutoffs[:, None], table.num_trees, unique[None, :] / table.num_trees)
    z = np.where(cutoffs[:, None] >= table.num_trees, 1.0, z)
    numerator = (z * (1.0 - z)) @ multiplicity
    denominator = (1.0 - z) @ multiplicity
    values = np.divide(
        numerator, denominator, out=np.zeros_like(numerator),
        where=denominator > 0,
    )
    return float(np.quantile(values, quantile))


def grow_adaptive_forest(
    data: Dataset,
    grid: QuantileGrid,
    params: ForestParams,
    alpha: float = 0.05,
    batch: int = 100,
    max_trees: int = 100_000,
) -> tuple[PathFrequencyTable, int]:
    """Grow trees in batches until the disagreement estimate drops below
    ``alpha``; returns the table and the realized tree count.

    The criterion is checked after every batch while the forest is small;
    past 10 batches the check cadence stretches to every 5th batch and
    past 100 to every 10th, since the estimate moves slowly once the
    frequency spectrum has formed.
    """
    table = PathFrequencyTable()
    grown = 0
    while grown < max_trees:
        target = min(grown + batch, max_trees)
        grow_trees_into(table, data, grid, params, grown, target)
        grown = target
        batches = grown // batch
        if batches > 100 and batches % 10:
            continue
        if batches > 10 and batches % 5:
            continue
        if len(table) == 0:
            # no splits at all (e.g. constant response): nothing to stabilize
            return table, grown
        if grid_stopping_epsilon(table) < alpha:
            return table, grown
    logger.warning("tree-count cap %d reached before convergence", max_trees)
    return table, grown


def adaptive_num_trees(
    data: Dataset,
    grid: QuantileGrid,
    params: ForestParams,
    alpha: float = 0.05,
    batch: int = 100,
    max_trees: int = 100_000,
) -> int:
    """Minimum tree count (in batch increments) meeting the stopping rule."""
    _, num_trees = grow_adaptive_forest(data, grid, params, alpha, batch, max_trees)
    return num_trees


@dataclass(frozen=True)
class ParetoPoint:
    """One tuning-grid evaluation: a candidate threshold and its metrics."""

    p0: float
    error: float
    stability: float
    size: float
    distance: float


def pareto_distance(error: float, stability: float,
                    ideal_stability: float = IDEAL_STABILITY) -> float:
    return float(np.hypot(error, stability - ideal_stability))


@dataclass
class TuningResult:
    """Tuned threshold with the full Pareto front and its evaluation."""

    p0: float
    pareto: list[ParetoPoint]
    evaluation: EvaluationReport
    repeat_p0s: list[float]
    seconds: float


def _pick_threshold(points: list[ParetoPoint]) -> float:
    """Smallest distance; ties prefer fewer rules, then larger threshold."""
    best = min(points, key=lambda pt: (pt.distance, pt.size, -pt.p0))
    return best.p0


def tune_p0(
    data: Dataset,
    params: ForestParams | None = None,
    k: int = 10,
    repeats: int = 10,
    seed: int = 0,
    max_rules: int = MAX_RULES,
    fold_forests=None,
) -> TuningResult:
    """Tune the selection threshold by repeated k-fold cross-validation.

    One forest is grown per fold; every candidate threshold is evaluated by
    re-selecting rules from the stored path counts, so the grid sweep costs
    no additional tree growing.  Candidate thresholds are the distinct
    occurrence frequencies observed across the fold forests whose mean
    selection size stays within [1, max_rules].  Each repetition picks the
    threshold closest to (error=0, stability=0.9); the lower median over
    repetitions is returned, together with its cross-validated evaluation.
    """
    params = params or ForestParams()
    started = time.perf_counter()
    if fold_forests is None:
        fold_forests = build_fold_forests(data, params, k, seed, repeats)

    pareto: list[ParetoPoint] = []
    repeat_p0s: list[float] = []
    for per_repeat in fold_forests:
        candidates = np.unique(
            np.concatenate([ff.frequencies() for ff in per_repeat])
        )
        mean_sizes = np.array(
            [
                np.mean([ff.selection_size(p0) for ff in per_repeat])
                for p0 in candidates
            ]
        )
        admissible = candidates[(mean_sizes >= 1) & (mean_sizes <= max_rules)]
        if len(admissible) == 0:
            raise TuningError(
                "no threshold selects between 1 and "
                f"{max_rules} rules on average; the forests are degenerate"
            )
        points = []
        for p0 in admissible:
            ev: RepeatEvaluation = evaluate_folds_at(
                per_repeat, data, float(p0), max_rules
            )
            if ev.size < 1:  # post-treatment emptied some folds entirely
                continue
            points.append(
                ParetoPoint(
                    p0=float(p0),
                    error=ev.pooled_error,
                    stability=ev.stability,
                    size=ev.size,
                    distance=pareto_distance(ev.pooled_error, ev.stability),
                )
            )
        if not points:
            raise TuningError(
                "every candidate threshold leaves an empty model in some fold"
            )
        pareto.extend(points)
        repeat_p0s.append(_pick_threshold(points))

    chosen = sorted(repeat_p0s)[(len(repeat_p0s) - 1) // 2]  # lower median
    evaluation = cv_evaluate(
        data,
        chosen,
        params,
        k=k,
        repeats=len(fold_forests),
        seed=seed,
        max_rules=max_rules,
        fold_forests=fold_forests,
    )
    return TuningResult(
        p0=float(chosen),
        pareto=pareto,
        evaluation=evaluation,
        repeat_p0s=repeat_p0s,
        seconds=time.perf_counter() - started,
    )
