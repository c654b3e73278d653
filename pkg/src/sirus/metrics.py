"""Predictivity, stability, and model-size measurement over cross-validation.

The fold machinery is shared with threshold tuning: a forest is grown once
per fold and models at any frequency threshold are pure post-processing of
its path counts, cached by selection size.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .aggregation import (
    MAX_RULES,
    build_design,
    fit_nn_ridge,
    tune_penalty,
)
from .data import Dataset, QuantileGrid, compute_quantile_grid, kfold_split
from .errors import DegenerateRuleError
from .forest import ForestParams, grow_forest
from .parallel import parallel_map
from .rules import Path, post_treat, rule_from_path, rule_matrix


def dice_sorensen(a: set, b: set) -> float:
    """Proportion of shared rules: 2|a&b| / (|a|+|b|).

    Membership is canonical path equality (feature, rank, side); realized
    cut values play no part.  Two empty sets count as identical (1.0).
    """
    if not a and not b:
        return 1.0
    return 2.0 * len(set(a) & set(b)) / (len(a) + len(b))


def unexplained_variance(predictions, truth) -> float:
    """Mean squared error divided by the variance of the truth."""
    predictions = np.asarray(predictions, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if predictions.shape != truth.shape or truth.ndim != 1 or len(truth) < 2:
        raise ValueError("predictions and truth must be equal-length vectors")
    spread = float(np.var(truth))
    if spread == 0:
        raise ValueError("truth has zero variance")
    return float(np.mean((predictions - truth) ** 2)) / spread


@dataclass
class StabilityReport:
    """Pairwise Dice-Sorensen indices between per-fold rule sets."""

    pairwise: list[float]
    rule_sets: list[set]

    @property
    def mean_dice(self) -> float:
        return float(np.mean(self.pairwise)) if self.pairwise else 1.0


def stability_report(rule_sets: list[set]) -> StabilityReport:
    pairwise = [
        dice_sorensen(rule_sets[i], rule_sets[j])
        for i in range(len(rule_sets))
        for j in range(i + 1, len(rule_sets))
    ]
    return StabilityReport(pairwise=pairwise, rule_sets=rule_sets)


@dataclass
class EvaluationReport:
    """Cross-validated error / stability / size summary."""

    unexplained_variance: float
    unexplained_variance_macro: float
    stability: float
    model_size: float
    active_rules: float
    p0: float
    k: int
    repeats: int
    seed: int
    mean_num_trees: float
    seconds: float

    def to_row(self, dataset: str = "") -> dict:
        return {
            "dataset": dataset,
            "p0": self.p0,
            "size": self.model_size,
            "stability": self.stability,
            "error": self.unexplained_variance,
            "M": self.mean_num_trees,
            "seed": self.seed,
        }


@dataclass
class FoldFit:
    """Fitted fold model at one selection prefix."""

    rule_set: set
    size: int
    active: int
    predictions: np.ndarray


@dataclass
class FoldForest:
    """One fold's trained forest plus everything needed to fit models at
    arbitrary frequency thresholds without regrowing trees."""

    fold: int
    train_rows: np.ndarray
    test_rows: np.ndarray
    grid: QuantileGrid
    paths: list[Path]
    counts: np.ndarray
    num_trees: int
    train_data: Dataset
    test_x: np.ndarray
    inner_seed: int
    _cache: dict[int, FoldFit] = field(default_factory=dict)

    def selection_size(self, p0: float) -> int:
        """Number of paths with frequency strictly above the threshold."""
        return int(np.count_nonzero(self.counts > p0 * self.num_trees))

    def frequencies(self) -> np.ndarray:
        return self.counts / self.num_trees

    def fit(self, p0: float, max_rules: int = MAX_RULES) -> FoldFit:
        prefix = min(self.selection_size(p0), max_rules)
        cached = self._cache.get(prefix)
        if cached is not None:
            return cached
        fit = self._fit_prefix(prefix)
        self._cache[prefix] = fit
        return fit

    def _fit_prefix(self, prefix: int) -> FoldFit:
        if prefix == 0:
            fit = FoldFit(
                rule_set=set(),
                size=0,
                active=0,
                predictions=np.full(
                    len(self.test_rows), self.train_data.y.mean()
                ),
            )
            return fit
        kept = post_treat(self.paths[:prefix], self.grid)
        rules = []
        for path in kept:
            try:
                rules.append(rule_from_path(path, self.grid, self.train_data))
            except DegenerateRuleError:
                continue
        if not rules:
            return self._fit_prefix(0)
        inner = kfold_split(
            self.train_data.n, min(10, self.train_data.n), seed=self.inner_seed
        )
        penalty = tune_penalty(rules, self.train_data, inner)
        weights, intercept = fit_nn_ridge(build_design(rules, self.train_data), penalty)
        predictions = intercept + rule_matrix(rules, self.test_x) @ weights
        return FoldFit(
            rule_set={rule.path for rule in rules},
            size=len(rules),
            active=int((weights > 0).sum()),
            predictions=predictions,
        )


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _build_fold_forest(task) -> FoldForest:
    data, params, assignment, fold, seed_parts = task
    train_rows = np.flatnonzero(assignment != fold)
    test_rows = np.flatnonzero(assignment == fold)
    train_data = data.subset(train_rows)
    grid = compute_quantile_grid(train_data, params.q)
    from dataclasses import replace

    fold_params = replace(params, seed=_derived_seed(*seed_parts, 1))
    table = grow_forest(train_data, grid, fold_params)
    ordered = table.items_by_frequency()
    # fits never reach past the rule cap; keep a margin of ordered paths
    # but the full count spectrum (threshold grids need every frequency)
    return FoldForest(
        fold=fold,
        train_rows=train_rows,
        test_rows=test_rows,
        grid=grid,
        paths=[path for path, _ in ordered[: 4 * MAX_RULES]],
        counts=np.asarray([count for _, count in ordered], dtype=np.int64),
        num_trees=table.num_trees,
        train_data=train_data,
        test_x=data.x[test_rows],
        inner_seed=_derived_seed(*seed_parts, 2),
    )


def build_fold_forests(
    data: Dataset, params: ForestParams, k: int, seed: int, repeats: int = 1
) -> list[list[FoldForest]]:
    """Grow one forest per (repeat, fold); the expensive step, parallelizable."""
    tasks = []
    for repeat in range(repeats):
        assignment = kfold_split(data.n, k, seed=_derived_seed(seed, repeat)).assignment
        for fold in range(k):
            tasks.append((data, params, assignment, fold, (seed, repeat, fold)))
    flat = parallel_map(_build_fold_forest, tasks)
    return [flat[r * k : (r + 1) * k] for r in range(repeats)]


@dataclass
class RepeatEvaluation:
    pooled_error: float
    macro_error: float
    stability: float
    size: float
    active: float


def evaluate_folds_at(
    fold_forests: list[FoldForest], data: Dataset, p0: float,
    max_rules: int = MAX_RULES,
) -> RepeatEvaluation:
    """Fit every fold at one threshold and pool the held-out metrics."""
    fits = [ff.fit(p0, max_rules) for ff in fold_forests]
    pooled = np.empty(data.n)
    macro = []
    for ff, fit in zip(fold_forests, fits):
        pooled[ff.test_rows] = fit.predictions
        truth = data.y[ff.test_rows]
        if np.var(truth) > 0:
            macro.append(unexplained_variance(fit.predictions, truth))
    report = stability_report([fit.rule_set for fit in fits])
    return RepeatEvaluation(
        pooled_error=unexplained_variance(pooled, data.y),
        macro_error=float(np.mean(macro)) if macro else float("nan"),
        stability=report.mean_dice,
        size=float(np.mean([fit.size for fit in fits])),
        active=float(np.mean([fit.active for fit in fits])),
    )


def cv_evaluate(
    data: Dataset,
    p0: float,
    params: ForestParams | None = None,
    k: int = 10,
    repeats: int = 1,
    seed: int = 0,
    max_rules: int = MAX_RULES,
    fold_forests: list[list[FoldForest]] | None = None,
) -> EvaluationReport:
    """Full pipeline evaluation by k-fold cross-validation.

    Each fold trains on its own quantile grid and forest; the held-out fold
    supplies predictions.  The primary error is pooled (all held-out
    predictions against all truths); the macro per-fold average is reported
    alongside.  Stability is the mean pairwise Dice index of fold rule sets.
    """
    if k < 2:
        raise ValueError("need k >= 2 folds")
    params = params or ForestParams()
    started = time.perf_counter()
    if fold_forests is None:
        fold_forests = build_fold_forests(data, params, k, seed, repeats)
    evaluations = [
        evaluate_folds_at(per_repeat, data, p0, max_rules)
        for per_repeat in fold_forests
    ]
    trees = [ff.num_trees for per_repeat in fold_forests for ff in per_repeat]
    return EvaluationReport(
        unexplained_variance=float(np.mean([e.pooled_error for e in evaluations])),
        unexplained_variance_macro=float(np.mean([e.macro_error for e in evaluations])),
        stability=float(np.mean([e.stability for e in evaluations])),
        model_size=float(np.mean([e.size for e in evaluations])),
        active_rules=float(np.mean([e.active for e in evaluations])),
        p0=float(p0),
        k=k,
        repeats=len(fold_forests),
        seed=seed,
        mean_num_trees=float(np.mean(trees)),
        seconds=time.perf_counter() - started,
    )
