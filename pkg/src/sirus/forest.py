"""Randomized shallow trees with splits restricted to quantile cuts.

Every split candidate is a (feature, quantile-rank) pair from the training
grid, so each realized tree node has an exact symbolic identity.  Trees are
grown on per-tree RNG streams derived from (seed, tree index), which makes
forest counts a pure function of (data, params) regardless of scheduling
and lets a forest be extended batch by batch without replaying history.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, QuantileGrid
from .rules import PathFrequencyTable

try:
    from numba import njit as _njit

    _HAVE_NUMBA = True
except ImportError:  # pure-numpy fallback below
    _HAVE_NUMBA = False

ADAPTIVE = "adaptive"

_grow_forest_calls = 0


def grow_forest_call_count() -> int:
    """How many forests have been grown in this process (instrumentation)."""
    return _grow_forest_calls


@dataclass(frozen=True)
class ForestParams:
    """Forest configuration.

    ``num_trees`` may be an integer or ``"adaptive"``, in which case trees
    are grown in batches until the rule-list stopping criterion fires.
    ``mtry`` defaults to max(p // 3, 2) clamped to p.  ``sampling`` is
    ``"bootstrap"`` (n draws with replacement) or ``"subsample"``
    (``subsample_rate`` * n draws without replacement).
    """

    num_trees: int | str = ADAPTIVE
    max_depth: int | None = 2
    mtry: int | None = None
    q: int = 10
    sampling: str = "bootstrap"
    subsample_rate: float = 0.5
    min_node_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.num_trees, str) and self.num_trees != ADAPTIVE:
            raise ValueError(f"num_trees must be an int or {ADAPTIVE!r}")
        if isinstance(self.num_trees, int) and self.num_trees < 1:
            raise ValueError("num_trees must be positive")
        if self.sampling not in ("bootstrap", "subsample"):
            raise ValueError(f"unknown sampling {self.sampling!r}")
        if self.sampling == "subsample" and not 0 < self.subsample_rate <= 1:
            raise ValueError("subsample_rate must be in (0, 1]")
        if self.min_node_size < 1:
            raise ValueError("min_node_size must be positive")

    def resolved_mtry(self, p: int) -> int:
        if self.mtry is not None:
            if not 1 <= self.mtry <= p:
                raise ValueError(f"mtry must be in [1, {p}]")
            return self.mtry
        return min(max(p // 3, 2), p)


@dataclass
class TreePaths:
    """All root-to-node paths of one realized tree, in tree order."""

    paths: list


def cart_variance_reduction(responses, left_mask) -> float:
    """Variance decrease of a binary split, population-variance convention.

    Var(node) - (n_L/n) Var(left) - (n_R/n) Var(right); requires both sides
    non-empty.
    """
    y = np.asarray(responses, dtype=float)
    mask = np.asarray(left_mask, dtype=bool)
    if y.ndim != 1 or y.shape != mask.shape or len(y) < 2:
        raise ValueError("need >= 2 responses and a matching boolean mask")
    n_left = int(mask.sum())
    if n_left == 0 or n_left == len(y):
        raise ValueError("invalid split: one side is empty")
    n = len(y)
    return float(
        np.var(y) - n_left / n * np.var(y[mask]) - (n - n_left) / n * np.var(y[~mask])
    )


def _tree_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _draw_rows(rng: np.random.Generator, n: int, params: ForestParams) -> np.ndarray:
    if params.sampling == "bootstrap":
        return rng.integers(0, n, size=n)
    size = max(1, int(round(params.subsample_rate * n)))
    return rng.permutation(n)[:size]


class _SplitContext:
    """Per-forest constants hoisted out of the node loop."""

    __slots__ = ("bins", "y", "width", "mtry", "p")

    def __init__(self, bins: np.ndarray, y: np.ndarray, grid: QuantileGrid,
                 mtry: int):
        self.bins = bins
        self.y = y
        self.p = bins.shape[1]
        self.width = max((grid.num_cuts(j) for j in range(grid.p)), default=0) + 1
        self.mtry = mtry


def _node_split_numpy(bins, rows, y, features, width):
    """Vectorized node scoring; see :func:`_node_split` for the contract."""
    n_node = len(rows)
    y_node = y[rows]
    total = y_node.sum()
    sub = bins[rows[:, None], features[None, :]]
    flat = (sub + width * np.arange(len(features), dtype=np.int64)).ravel()
    size = width * len(features)
    counts = np.bincount(flat, minlength=size)
    sums = np.bincount(flat, weights=np.repeat(y_node, len(features)),
                       minlength=size)
    n_left = np.cumsum(counts.reshape(len(features), width), axis=1)[:, :-1]
    s_left = np.cumsum(sums.reshape(len(features), width), axis=1)[:, :-1]
    n_right = n_node - n_left
    valid = (n_left > 0) & (n_right > 0)
    score = (
        s_left**2 / np.maximum(n_left, 1)
        + (total - s_left) ** 2 / np.maximum(n_right, 1)
    ) / n_node - (total / n_node) ** 2
    score[~valid] = -np.inf
    flat_pos = int(np.argmax(score))
    slot, pos = divmod(flat_pos, width - 1)
    if not valid[slot, pos]:
        return -np.inf, -1, -1
    return float(score[slot, pos]), slot, pos


if _HAVE_NUMBA:

    @_njit(cache=True)
    def _node_split_kernel(bins, rows, y, features, width):  # pragma: no cover
        m = rows.shape[0]
        f = features.shape[0]
        counts = np.zeros((f, width), np.int64)
        sums = np.zeros((f, width), np.float64)
        total = 0.0
        for i in range(m):
            r = rows[i]
            yi = y[r]
            total += yi
            for s in range(f):
                b = bins[r, features[s]]
                counts[s, b] += 1
                sums[s, b] += yi
        base = (total / m) * (total / m)
        best = -np.inf
        best_slot = -1
        best_pos = -1
        for s in range(f):
            n_left = 0
            s_left = 0.0
            for pos in range(width - 1):
                n_left += counts[s, pos]
                s_left += sums[s, pos]
                n_right = m - n_left
                if n_left > 0 and n_right > 0:
                    score = (
                        s_left * s_left / n_left
                        + (total - s_left) * (total - s_left) / n_right
                    ) / m - base
                    if score > best:
                        best = score
                        best_slot = s
                        best_pos = pos
        return best, best_slot, best_pos


def _node_split(ctx: _SplitContext, rows, features):
    """Best (reduction, slot, cut position) at one node, or None.

    Candidate cuts are grid cuts with both children non-empty on the node
    sample.  Ties break to the lowest feature index, then lowest rank:
    features are evaluated in increasing index order, cuts in increasing
    rank order, and the first maximum wins.

    The per-cut score is the exact variance reduction: with the response
    centered, (s_L^2/n_L + s_R^2/n_R - s^2/n) / n equals
    Var(node) - (n_L/n) Var(L) - (n_R/n) Var(R).
    """
    if ctx.width == 1:
        return None
    if _HAVE_NUMBA:
        score, slot, pos = _node_split_kernel(
            ctx.bins, rows, ctx.y, features, ctx.width
        )
    else:
        score, slot, pos = _node_split_numpy(
            ctx.bins, rows, ctx.y, features, ctx.width
        )
    if slot < 0:
        return None
    return score, int(slot), int(pos)


def _grow_tree_binned(ctx: _SplitContext, grid: QuantileGrid,
                      params: ForestParams, rng: np.random.Generator) -> list:
    """Grow one tree on pre-binned features; returns canonical paths."""
    n = len(ctx.y)
    p, mtry = ctx.p, ctx.mtry
    bins, y = ctx.bins, ctx.y
    rows = _draw_rows(rng, n, params)
    paths: list = []

    def split(rows, y_node, prefix, depth):
        if params.max_depth is not None and depth >= params.max_depth:
            return
        if len(rows) < 2 * params.min_node_size:
            return
        if y_node.min() == y_node.max():  # pure node
            return
        features = np.sort(rng.permutation(p)[:mtry])
        best = _node_split(ctx, rows, features)
        if best is None:
            return
        _, slot, pos = best
        feature = int(features[slot])
        rank = int(grid.ranks[feature][pos])
        mask = bins[rows, feature] <= pos
        constraint_l = (feature, rank, "L")
        constraint_r = (feature, rank, "R")
        # canonical form kept incrementally: tree paths never repeat a
        # (feature, rank) pair, so a two-way comparison orders the common
        # depth-2 case without a sort
        if not prefix:
            left, right = (constraint_l,), (constraint_r,)
        elif len(prefix) == 1:
            if prefix[0] <= constraint_l:
                left = prefix + (constraint_l,)
                right = prefix + (constraint_r,)
            else:
                left = (constraint_l,) + prefix
                right = (constraint_r,) + prefix
        else:
            left = tuple(sorted(prefix + (constraint_l,)))
            right = tuple(sorted(prefix + (constraint_r,)))
        paths.append(left)
        split(rows[mask], y_node[mask], left, depth + 1)
        paths.append(right)
        split(rows[~mask], y_node[~mask], right, depth + 1)

    split(rows, y[rows], (), 0)
    return paths


def grow_tree(data: Dataset, grid: QuantileGrid, params: ForestParams,
              tree_rng: np.random.Generator) -> TreePaths:
    """Grow a single randomized tree and return its extracted paths."""
    bins = grid.bin_matrix(data.x)
    y = data.y - data.y.mean()  # centering improves split-score conditioning
    ctx = _SplitContext(bins, y, grid, params.resolved_mtry(data.p))
    return TreePaths(paths=_grow_tree_binned(ctx, grid, params, tree_rng))


def grow_trees_into(table: PathFrequencyTable, data: Dataset, grid: QuantileGrid,
                    params: ForestParams, start: int, stop: int) -> None:
    """Grow trees with indices [start, stop) and merge their paths into
    ``table``.  Tree index fixes the RNG stream, so growing in any batch
    layout yields identical counts."""
    bins = grid.bin_matrix(data.x)
    y = data.y - data.y.mean()
    ctx = _SplitContext(bins, y, grid, params.resolved_mtry(data.p))
    seed = params.seed
    counts = table.counts
    for index in range(start, stop):
        rng = _tree_rng(seed, index)
        for path in _grow_tree_binned(ctx, grid, params, rng):
            counts[path] = counts.get(path, 0) + 1
        table.num_trees += 1


def grow_forest(data: Dataset, grid: QuantileGrid,
                params: ForestParams) -> PathFrequencyTable:
    """Grow the forest and count canonical path occurrences per tree.

    With ``num_trees="adaptive"`` the forest is extended in batches until
    the expected rule-list disagreement between two identical refits drops
    below the stopping level (see :mod:`sirus.tuning`).
    """
    global _grow_forest_calls
    _grow_forest_calls += 1
    if params.num_trees == ADAPTIVE:
        from .tuning import grow_adaptive_forest

        table, _ = grow_adaptive_forest(data, grid, params)
        return table
    table = PathFrequencyTable()
    grow_trees_into(table, data, grid, params, 0, params.num_trees)
    return table


# ---------------------------------------------------------------------------
# Full-depth quantile forest: the predictive baseline.
# ---------------------------------------------------------------------------


class _PredictorTree:
    """Array-backed tree: internal nodes route on (feature, cut position)."""

    __slots__ = ("feature", "cut_pos", "left", "right", "value")

    def __init__(self):
        self.feature: list[int] = []
        self.cut_pos: list[int] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.cut_pos.append(-1)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def predict_bins(self, bins: np.ndarray) -> np.ndarray:
        out = np.empty(len(bins))
        pending = [(0, np.arange(len(bins)))]
        while pending:
            node, idx = pending.pop()
            feature = self.feature[node]
            if feature < 0:
                out[idx] = self.value[node]
                continue
            mask = bins[idx, feature] <= self.cut_pos[node]
            pending.append((self.left[node], idx[mask]))
            pending.append((self.right[node], idx[~mask]))
        return out


def _grow_predictor_tree(ctx: _SplitContext, params: ForestParams,
                         rng: np.random.Generator) -> _PredictorTree:
    n = len(ctx.y)
    p, mtry = ctx.p, ctx.mtry
    bins, y = ctx.bins, ctx.y
    tree = _PredictorTree()

    def build(rows, y_node, depth) -> int:
        node = tree._new_node()
        tree.value[node] = float(y_node.mean())
        if params.max_depth is not None and depth >= params.max_depth:
            return node
        if len(rows) < 2 * params.min_node_size or y_node.min() == y_node.max():
            return node
        features = np.sort(rng.permutation(p)[:mtry])
        best = _node_split(ctx, rows, features)
        if best is None:
            return node
        _, slot, pos = best
        mask = bins[rows, int(features[slot])] <= pos
        tree.feature[node] = int(features[slot])
        tree.cut_pos[node] = pos
        tree.left[node] = build(rows[mask], y_node[mask], depth + 1)
        tree.right[node] = build(rows[~mask], y_node[~mask], depth + 1)
        return node

    rows = _draw_rows(rng, n, params)
    build(rows, y[rows], 0)
    return tree


def full_depth_forest_predict(data: Dataset, grid: QuantileGrid,
                              params: ForestParams, queries) -> np.ndarray:
    """Predictions of an unlimited-depth quantile forest at the queries.

    Each tree grows until nodes are pure, too small, or out of candidate
    cuts; a query gets the mean response of the leaf it falls into,
    averaged over trees.
    """
    if params.num_trees == ADAPTIVE:
        raise ValueError("the baseline forest needs an explicit num_trees")
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    if queries.shape[1] != data.p:
        raise ValueError(f"queries must have {data.p} features")
    params = replace(params, max_depth=None)
    bins = grid.bin_matrix(data.x)
    query_bins = grid.bin_matrix(queries)
    ctx = _SplitContext(bins, data.y, grid, params.resolved_mtry(data.p))
    total = np.zeros(len(queries))
    for index in range(params.num_trees):
        rng = _tree_rng(params.seed, index)
        tree = _grow_predictor_tree(ctx, params, rng)
        total += tree.predict_bins(query_bins)
    return total / params.num_trees
