"""Non-negative ridge aggregation of rules into the final predictor."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import nnls as _scipy_nnls

from .data import Dataset, FoldAssignment, QuantileGrid, kfold_split
from .errors import DegenerateRuleError
from .forest import ForestParams, grow_forest
from .rules import (
    PathFrequencyTable,
    Rule,
    path_bounds,
    post_treat,
    rule_from_path,
    rule_matrix,
    select_paths,
)

MAX_RULES = 25


@dataclass(frozen=True)
class RuleDesignMatrix:
    """Rule outputs evaluated on the training rows, one column per rule."""

    gamma: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.gamma)) or not np.all(np.isfinite(self.y)):
            raise ValueError("design matrix and response must be finite")
        if self.gamma.ndim != 2 or self.gamma.shape[0] != len(self.y):
            raise ValueError("design shape does not match response length")


def build_design(rules: list[Rule], data: Dataset) -> RuleDesignMatrix:
    return RuleDesignMatrix(gamma=rule_matrix(rules, data.x), y=data.y)


def fit_nn_ridge(design: RuleDesignMatrix, penalty: float) -> tuple[np.ndarray, float]:
    """Exact minimizer of (1/n)||y - b0 - G w||^2 + penalty * ||w||^2, w >= 0.

    The intercept is unpenalized and handled by centering; the constrained
    problem is solved as non-negative least squares on the centered design
    augmented with sqrt(n * penalty) * I.
    """
    gamma, y = design.gamma, design.y
    n, c = gamma.shape
    if c < 1:
        raise ValueError("need at least one rule column")
    if penalty < 0:
        raise ValueError("penalty must be >= 0")
    col_means = gamma.mean(axis=0)
    y_mean = y.mean()
    augmented = np.vstack([gamma - col_means, np.sqrt(n * penalty) * np.eye(c)])
    target = np.concatenate([y - y_mean, np.zeros(c)])
    weights, _ = _scipy_nnls(augmented, target, maxiter=max(300, 30 * c))
    intercept = float(y_mean - col_means @ weights)
    return weights, intercept


def _nnls_gram(gram: np.ndarray, moment: np.ndarray, n: int,
               penalty: float) -> np.ndarray:
    """Same minimizer as :func:`fit_nn_ridge` from precomputed Gram factors.

    gram = Gc' Gc and moment = Gc' yc of the centered design; used where
    many penalties are solved against one design.
    """
    c = gram.shape[0]
    system = gram + n * penalty * np.eye(c)
    try:
        chol = np.linalg.cholesky(system)
    except np.linalg.LinAlgError:
        chol = np.linalg.cholesky(system + 1e-12 * np.trace(system) * np.eye(c))
    target = solve_triangular(chol, moment, lower=True)
    weights, _ = _scipy_nnls(chol.T, target, maxiter=max(300, 30 * c))
    return weights


def kkt_violation(design: RuleDesignMatrix, penalty: float,
                  weights: np.ndarray, intercept: float) -> float:
    """Worst violation of the first-order optimality conditions.

    At an exact solution each coordinate has zero gradient when positive
    and non-negative gradient when at the bound; returns the largest
    excess, 0 for a perfect solution.
    """
    gamma, y = design.gamma, design.y
    n = len(y)
    residual = gamma @ weights + intercept - y
    grad = 2.0 / n * (gamma.T @ residual) + 2.0 * penalty * weights
    worst = 0.0
    for k in range(len(weights)):
        if weights[k] > 0:
            worst = max(worst, abs(float(grad[k])))
        else:
            worst = max(worst, max(0.0, -float(grad[k])))
    return worst


def default_penalty_grid(y: np.ndarray, size: int = 50) -> np.ndarray:
    """Log-spaced ridge penalties spanning [1e-4, 1e2] times Var(y)."""
    scale = float(np.var(y))
    if scale <= 0:
        scale = 1.0
    return np.geomspace(1e-4 * scale, 1e2 * scale, size)


def tune_penalty(rules: list[Rule], data: Dataset, folds: FoldAssignment,
                 grid: np.ndarray | None = None) -> float:
    """Ridge penalty minimizing cross-validated squared error.

    Pooled over held-out rows; ties resolve to the larger penalty.
    """
    if grid is None:
        grid = default_penalty_grid(data.y)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0:
        raise ValueError("penalty grid must be a non-empty 1-d array")
    grid = np.sort(grid)
    gamma_all = rule_matrix(rules, data.x)
    errors = np.zeros(len(grid))
    for fold in range(folds.k):
        train, test = folds.train_rows(fold), folds.test_rows(fold)
        gamma, y = gamma_all[train], data.y[train]
        col_means, y_mean = gamma.mean(axis=0), y.mean()
        centered = gamma - col_means
        gram = centered.T @ centered
        moment = centered.T @ (y - y_mean)
        gamma_test, y_test = gamma_all[test], data.y[test]
        for i, penalty in enumerate(grid):
            weights = _nnls_gram(gram, moment, len(train), penalty)
            pred = y_mean - col_means @ weights + gamma_test @ weights
            errors[i] += float(((pred - y_test) ** 2).sum())
    best = len(grid) - 1 - int(np.argmin(errors[::-1]))  # ties -> larger penalty
    return float(grid[best])


@dataclass
class SirusModel:
    """Fitted rule-set regressor: intercept plus weighted rule outputs."""

    intercept: float
    rules: list[Rule]
    weights: np.ndarray
    frequencies: list[float]
    penalty: float
    p0: float
    grid: QuantileGrid
    feature_names: tuple[str, ...]
    response_name: str
    response_mean: float
    num_trees: int
    categorical_levels: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.weights) != len(self.rules) or len(self.rules) != len(
            self.frequencies
        ):
            raise ValueError("rules, weights and frequencies must align")
        if np.any(self.weights < 0):
            raise ValueError("rule weights must be non-negative")
        if len(self.rules) > MAX_RULES:
            raise ValueError(f"more than {MAX_RULES} rules in a fitted model")

    @property
    def num_rules(self) -> int:
        """Rule count after post-treatment (the reported model size)."""
        return len(self.rules)

    @property
    def num_active_rules(self) -> int:
        """Rules carrying a strictly positive weight."""
        return int((self.weights > 0).sum())

    def rule_set(self) -> set:
        return {rule.path for rule in self.rules}

    def predict(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != len(self.feature_names):
            raise ValueError(
                f"query has {x.shape[1]} features, model expects "
                f"{len(self.feature_names)}"
            )
        if not self.rules:
            return np.full(len(x), self.intercept)
        return self.intercept + rule_matrix(self.rules, x) @ self.weights


def predict(model: SirusModel, x) -> float:
    """Model value at a single query point."""
    return float(model.predict(np.atleast_2d(x))[0])


def fit_sirus(
    data: Dataset,
    p0: float,
    params: ForestParams | None = None,
    penalty: float | None = None,
    penalty_folds: int = 10,
    max_rules: int = MAX_RULES,
    grid: QuantileGrid | None = None,
    table: PathFrequencyTable | None = None,
) -> SirusModel:
    """Full pipeline: forest -> selection -> post-treatment -> ridge weights.

    ``grid`` and ``table`` may be supplied to reuse an existing forest.  The
    selection is capped at ``max_rules`` highest-frequency paths before
    post-treatment; degenerate rules (one empty side) are dropped with a
    warning.  When ``penalty`` is None it is tuned by cross-validation.
    """
    from .data import compute_quantile_grid  # local to keep import graph flat

    params = params or ForestParams()
    if grid is None:
        grid = compute_quantile_grid(data, params.q)
    if table is None:
        table = grow_forest(data, grid, params)
    selected = select_paths(table, p0)[:max_rules]
    kept = post_treat(selected, grid)
    rules, frequencies = [], []
    dropped = 0
    for path in kept:
        try:
            rules.append(rule_from_path(path, grid, data))
            frequencies.append(table.frequency(path))
        except DegenerateRuleError:
            dropped += 1
    if dropped:
        warnings.warn(f"dropped {dropped} degenerate rule(s) with empty support")

    if not rules:
        weights = np.zeros(0)
        intercept = float(data.y.mean())
        penalty = 0.0 if penalty is None else penalty
    else:
        if penalty is None:
            folds = kfold_split(data.n, min(penalty_folds, data.n), seed=params.seed)
            penalty = tune_penalty(rules, data, folds)
        weights, intercept = fit_nn_ridge(build_design(rules, data), penalty)

    return SirusModel(
        intercept=intercept,
        rules=rules,
        weights=weights,
        frequencies=frequencies,
        penalty=float(penalty),
        p0=float(p0),
        grid=grid,
        feature_names=data.feature_names,
        response_name=data.response_name,
        response_mean=float(data.y.mean()),
        num_trees=table.num_trees,
        categorical_levels=data.categorical_levels,
    )


# ---------------------------------------------------------------------------
# JSON persistence.  Floats go through repr-based serialization, so decimal
# values survive a save/load cycle bit-exactly.
# ---------------------------------------------------------------------------


def model_to_json(model: SirusModel) -> str:
    rules = []
    for rule, weight, freq in zip(model.rules, model.weights, model.frequencies):
        constraints = [
            {
                "feature": model.feature_names[f],
                "feature_index": f,
                "rank": r,
                "cut_value": model.grid.cut_value(f, r),
                "side": s,
            }
            for f, r, s in rule.path
        ]
        rules.append(
            {
                "constraints": constraints,
                "y_in": rule.y_in,
                "y_out": rule.y_out,
                "n_in": rule.n_in,
                "n_out": rule.n_out,
                "weight": float(weight),
                "frequency": freq,
            }
        )
    doc = {
        "q": model.grid.q,
        "p0": model.p0,
        "lambda": model.penalty,
        "intercept": model.intercept,
        "rules": rules,
        "num_trees": model.num_trees,
        "feature_names": list(model.feature_names),
        "response_name": model.response_name,
        "response_mean": model.response_mean,
        "categorical_levels": {
            k: list(v) for k, v in model.categorical_levels.items()
        },
        "grid": {
            "cuts": [c.tolist() for c in model.grid.cuts],
            "ranks": [r.tolist() for r in model.grid.ranks],
        },
    }
    return json.dumps(doc, indent=2)


def model_from_json(text: str) -> SirusModel:
    doc = json.loads(text)
    grid = QuantileGrid(
        q=doc["q"],
        cuts=tuple(np.asarray(c, dtype=float) for c in doc["grid"]["cuts"]),
        ranks=tuple(np.asarray(r, dtype=np.int64) for r in doc["grid"]["ranks"]),
    )
    rules, weights, frequencies = [], [], []
    for entry in doc["rules"]:
        path = tuple(
            sorted(
                (c["feature_index"], c["rank"], c["side"])
                for c in entry["constraints"]
            )
        )
        rules.append(
            Rule(
                path=path,
                bounds=path_bounds(path, grid),
                y_in=entry["y_in"],
                y_out=entry["y_out"],
                n_in=entry["n_in"],
                n_out=entry["n_out"],
            )
        )
        weights.append(entry["weight"])
        frequencies.append(entry["frequency"])
    return SirusModel(
        intercept=doc["intercept"],
        rules=rules,
        weights=np.asarray(weights),
        frequencies=frequencies,
        penalty=doc["lambda"],
        p0=doc["p0"],
        grid=grid,
        feature_names=tuple(doc["feature_names"]),
        response_name=doc["response_name"],
        response_mean=doc["response_mean"],
        num_trees=doc["num_trees"],
        categorical_levels={
            k: tuple(v) for k, v in doc.get("categorical_levels", {}).items()
        },
    )
