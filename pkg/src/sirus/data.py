"""Dataset ingestion, quantile grids, and cross-validation fold assignment."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DataError


@dataclass(frozen=True)
class Dataset:
    """Numeric regression sample: feature matrix, response vector, names.

    Rows containing missing values are dropped at load time and counted in
    ``n_dropped``.  Categorical source columns are one-hot encoded; the
    original level sets are kept in ``categorical_levels`` so that query
    tables holding the raw column can be re-encoded at prediction time.
    """

    x: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    response_name: str = "y"
    n_dropped: int = 0
    categorical_levels: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        x = np.ascontiguousarray(np.asarray(self.x, dtype=float))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=float))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if x.ndim != 2:
            raise DataError("feature matrix must be 2-dimensional")
        if y.shape != (x.shape[0],):
            raise DataError("response length does not match feature rows")
        if x.shape[0] < 2 or x.shape[1] < 1:
            raise DataError(
                f"need at least 2 rows and 1 feature, got {x.shape[0]}x{x.shape[1]}"
            )
        if len(self.feature_names) != x.shape[1]:
            raise DataError("feature_names length does not match feature count")
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
            raise DataError("features and response must be finite")
        x.setflags(write=False)
        y.setflags(write=False)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def subset(self, rows: np.ndarray) -> "Dataset":
        """Row-restricted copy (used for CV fold training/test splits)."""
        return Dataset(
            x=self.x[rows],
            y=self.y[rows],
            feature_names=self.feature_names,
            response_name=self.response_name,
            n_dropped=0,
            categorical_levels=self.categorical_levels,
        )


_MISSING_TOKENS = ["", "NA", "N/A", "NaN", "nan", "?", "null", "NULL"]


def load_dataset(
    source,
    response_column: str,
    categorical_columns: tuple[str, ...] = (),
) -> Dataset:
    """Load a CSV file (header row, '.' decimal) into a :class:`Dataset`.

    Categorical columns are expanded into one 0/1 indicator column per
    observed level, named ``column=level`` and inserted at the position of
    the source column.  Rows with a missing value in any used column are
    dropped and counted.  A non-numeric token in a non-categorical column is
    an error, not a missing value.
    """
    try:
        frame = pd.read_csv(
            source, dtype=str, keep_default_na=True, na_values=_MISSING_TOKENS,
            skipinitialspace=True,
        )
    except FileNotFoundError:
        raise DataError(f"dataset file not found: {source}")
    except pd.errors.ParserError as exc:
        raise DataError(f"malformed CSV {source}: {exc}")
    if response_column not in frame.columns:
        raise DataError(
            f"response column {response_column!r} not in {list(frame.columns)}"
        )
    for col in categorical_columns:
        if col not in frame.columns:
            raise DataError(f"categorical column {col!r} not in file")
    feature_cols = [c for c in frame.columns if c != response_column]
    if not feature_cols:
        raise DataError("no feature columns besides the response")

    numeric_cols = [response_column] + [
        c for c in feature_cols if c not in categorical_columns
    ]
    converted = {}
    for col in numeric_cols:
        try:
            converted[col] = pd.to_numeric(frame[col], errors="raise")
        except (ValueError, TypeError):
            raise DataError(f"non-numeric value in numeric column {col!r}")

    keep = np.ones(len(frame), dtype=bool)
    for col in numeric_cols:
        keep &= converted[col].notna().to_numpy()
    for col in categorical_columns:
        keep &= frame[col].notna().to_numpy()
    n_dropped = int((~keep).sum())
    if keep.sum() < 2:
        raise DataError(f"fewer than 2 usable rows in {source}")

    columns: list[np.ndarray] = []
    names: list[str] = []
    levels: dict[str, tuple[str, ...]] = {}
    for col in feature_cols:
        if col in categorical_columns:
            values = frame[col].to_numpy()[keep]
            cats = tuple(sorted(set(values)))
            levels[col] = cats
            for cat in cats:
                columns.append((values == cat).astype(float))
                names.append(f"{col}={cat}")
        else:
            columns.append(converted[col].to_numpy(dtype=float)[keep])
            names.append(col)
    y = converted[response_column].to_numpy(dtype=float)[keep]

    return Dataset(
        x=np.column_stack(columns),
        y=y,
        feature_names=tuple(names),
        response_name=response_column,
        n_dropped=n_dropped,
        categorical_levels=levels,
    )


@dataclass(frozen=True)
class QuantileGrid:
    """Per-feature empirical quantile cut values, the only allowed splits.

    ``cuts[j]`` is strictly increasing and ``ranks[j]`` holds the quantile
    rank (1..q-1) of each cut.  Duplicate quantile values are collapsed
    keeping the smallest rank, so a (feature, rank) pair is a canonical
    identity for a cut.  Constant features have empty cut lists.
    """

    q: int
    cuts: tuple[np.ndarray, ...]
    ranks: tuple[np.ndarray, ...]

    def __post_init__(self):
        for c, r in zip(self.cuts, self.ranks):
            c.setflags(write=False)
            r.setflags(write=False)

    @property
    def p(self) -> int:
        return len(self.cuts)

    def num_cuts(self, feature: int) -> int:
        return len(self.cuts[feature])

    def cut_value(self, feature: int, rank: int) -> float:
        """Cut value for a (feature, quantile rank) pair."""
        pos = int(np.searchsorted(self.ranks[feature], rank))
        if pos >= len(self.ranks[feature]) or self.ranks[feature][pos] != rank:
            raise KeyError(f"no cut at rank {rank} for feature {feature}")
        return float(self.cuts[feature][pos])

    def bin_matrix(self, x: np.ndarray) -> np.ndarray:
        """Bin index per value: count of cuts <= x, shape like ``x``."""
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape, dtype=np.int16)
        for j in range(self.p):
            out[:, j] = np.searchsorted(self.cuts[j], x[:, j], side="right")
        return out


def compute_quantile_grid(data: Dataset, q: int = 10) -> QuantileGrid:
    """Empirical quantile cuts: order statistic at ceil(n*r/q), r in 1..q-1.

    Cuts are observed values by construction.  Duplicates collapse to the
    smallest rank; constant features yield empty lists.  Recomputing on the
    same dataset is bit-identical.
    """
    if q < 2:
        raise ValueError(f"q must be >= 2, got {q}")
    n = data.n
    positions = np.ceil(n * np.arange(1, q) / q).astype(int) - 1  # 0-based
    cuts, ranks = [], []
    for j in range(data.p):
        column = np.sort(data.x[:, j])
        values = column[positions]
        keep_vals, keep_ranks = [], []
        for rank, value in enumerate(values, start=1):
            if not keep_vals or value > keep_vals[-1]:
                keep_vals.append(value)
                keep_ranks.append(rank)
        if len(keep_vals) == 1 and keep_vals[0] == column[0] == column[-1]:
            # constant feature: no usable split anywhere
            keep_vals, keep_ranks = [], []
        cuts.append(np.asarray(keep_vals, dtype=float))
        ranks.append(np.asarray(keep_ranks, dtype=np.int64))
    return QuantileGrid(q=q, cuts=tuple(cuts), ranks=tuple(ranks))


@dataclass(frozen=True)
class FoldAssignment:
    """Deterministic shuffled round-robin assignment of rows to k folds."""

    k: int
    assignment: np.ndarray
    seed: int

    def __post_init__(self):
        self.assignment.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.assignment)

    def test_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def train_rows(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)


def kfold_split(n: int, k: int, seed: int) -> FoldAssignment:
    """Assign n rows to k folds whose sizes differ by at most one."""
    if not 2 <= k <= n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    order = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[order] = np.arange(n) % k
    return FoldAssignment(k=k, assignment=assignment, seed=seed)
