"""Rule paths: canonical identity, frequency table, selection, post-treatment.

A path is a tuple of constraints ``(feature, rank, side)`` where ``rank``
indexes a quantile cut of the training grid and ``side`` is ``"L"`` for
``x < cut`` or ``"R"`` for ``x >= cut``.  Canonical form is the sorted
constraint tuple, so tree-order variants of the same hyperrectangle share
one identity and one occurrence count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .data import Dataset, QuantileGrid
from .errors import DegenerateRuleError, InvalidPathError

SIDE_LEFT = "L"
SIDE_RIGHT = "R"

Constraint = tuple[int, int, str]
Path = tuple[Constraint, ...]


def canonicalize_path(raw) -> Path:
    """Sort constraints by (feature, rank, side) and drop exact duplicates.

    Raises :class:`InvalidPathError` when the same (feature, rank) appears
    with both sides, since the constrained region is then empty.  Nested
    constraints on the same feature and side are kept as-is: they are
    distinct identities even when one bound is implied by the other.
    """
    constraints = sorted(set(raw))
    if not constraints:
        raise InvalidPathError("empty path")
    seen = set()
    for feature, rank, side in constraints:
        if side not in (SIDE_LEFT, SIDE_RIGHT):
            raise InvalidPathError(f"unknown side {side!r}")
        if (feature, rank) in seen:
            raise InvalidPathError(
                f"contradictory constraints on feature {feature} rank {rank}"
            )
        seen.add((feature, rank))
    return tuple(constraints)


@dataclass
class PathFrequencyTable:
    """Occurrence counts of canonical paths over ``num_trees`` trees."""

    counts: dict[Path, int] = field(default_factory=dict)
    num_trees: int = 0

    def add_tree(self, tree_paths) -> None:
        """Count each distinct canonical path of one tree exactly once."""
        self.num_trees += 1
        distinct = {canonicalize_path(path) for path in tree_paths}
        for path in distinct:
            self.counts[path] = self.counts.get(path, 0) + 1

    def merge(self, other: "PathFrequencyTable") -> None:
        self.num_trees += other.num_trees
        for path, count in other.counts.items():
            self.counts[path] = self.counts.get(path, 0) + count

    def frequency(self, path: Path) -> float:
        return self.counts.get(path, 0) / self.num_trees

    def items_by_frequency(self) -> list[tuple[Path, int]]:
        """(path, count) pairs, decreasing count, ties in canonical order."""
        return sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))

    def __len__(self) -> int:
        return len(self.counts)


def select_paths(table: PathFrequencyTable, p0: float) -> list[Path]:
    """All paths with occurrence frequency strictly above ``p0``.

    Ordered by decreasing frequency, ties broken by canonical path order.
    """
    if table.num_trees == 0:
        raise ValueError("empty table: no trees counted")
    cutoff = p0 * table.num_trees
    return [path for path, count in table.items_by_frequency() if count > cutoff]


# ---------------------------------------------------------------------------
# Post-treatment: exact linear-dependence filtering.
#
# The prediction function of a rule is affine in the indicator of its
# hyperrectangle, so dependence on already-kept rules (intercept included)
# reduces to membership of that indicator in the span of the kept indicators
# plus the constant function.  Indicators are represented exactly in a basis
# of step-function products: for each (feature, rank) let v = 1{x >= cut};
# a box indicator expands into products of v's over distinct features with
# integer coefficients.  Those monomials are linearly independent as
# functions on the cells of the cut partition, so an exact rank test on the
# expansion coefficients equals the exact rank test on cell-indicator
# vectors, without enumerating the cells.
# ---------------------------------------------------------------------------

Monomial = tuple[tuple[int, int], ...]  # sorted ((feature, rank), ...), () == 1


def path_monomials(path: Path) -> dict[Monomial, int]:
    """Exact expansion of a path's box indicator in the step-product basis."""
    # Per feature: indicator of [lo, hi) as a difference of at most two v's.
    per_feature: dict[int, list[tuple[int | None, int]]] = {}
    for feature, rank, side in path:
        terms = per_feature.setdefault(feature, [(None, 1)])  # start from 1
        if side == SIDE_RIGHT:
            update = [(rank, 1)]                  # * v_rank
        else:
            update = [(None, 1), (rank, -1)]      # * (1 - v_rank)
        new_terms: dict[int | None, int] = {}
        for r1, c1 in terms:
            for r2, c2 in update:
                if r1 is None:
                    r = r2
                elif r2 is None:
                    r = r1
                else:
                    # same-feature product of step functions: the larger
                    # rank (higher cut) dominates for >=, i.e. v_a*v_b=v_max
                    r = max(r1, r2)
                new_terms[r] = new_terms.get(r, 0) + c1 * c2
        per_feature[feature] = [(r, c) for r, c in new_terms.items() if c != 0]

    expansion: dict[Monomial, int] = {(): 1}
    for feature, terms in per_feature.items():
        new_expansion: dict[Monomial, int] = {}
        for mono, coeff in expansion.items():
            for rank, c in terms:
                new_mono = mono if rank is None else tuple(
                    sorted(mono + ((feature, rank),))
                )
                new_expansion[new_mono] = new_expansion.get(new_mono, 0) + coeff * c
        expansion = {m: c for m, c in new_expansion.items() if c != 0}
    return expansion


class _ExactSpan:
    """Incremental exact Gaussian elimination over sparse rational vectors."""

    def __init__(self):
        self._rows: dict[Monomial, dict[Monomial, Fraction]] = {}

    def _reduce(self, vector: dict[Monomial, Fraction]) -> dict[Monomial, Fraction]:
        for pivot, row in self._rows.items():
            coeff = vector.get(pivot)
            if coeff:
                for mono, value in row.items():
                    new = vector.get(mono, Fraction(0)) - coeff * value
                    if new:
                        vector[mono] = new
                    else:
                        vector.pop(mono, None)
        return vector

    def contains(self, expansion: dict[Monomial, int]) -> bool:
        vector = {m: Fraction(c) for m, c in expansion.items()}
        return not self._reduce(vector)

    def add(self, expansion: dict[Monomial, int]) -> bool:
        """Insert the vector; returns False when already in the span."""
        vector = self._reduce({m: Fraction(c) for m, c in expansion.items()})
        if not vector:
            return False
        pivot = max(vector)  # any deterministic pivot choice works
        inv = 1 / vector[pivot]
        self._rows[pivot] = {m: c * inv for m, c in vector.items()}
        # keep rows reduced against the new pivot
        for other_pivot, row in self._rows.items():
            if other_pivot == pivot:
                continue
            coeff = row.get(pivot)
            if coeff:
                for mono, value in self._rows[pivot].items():
                    new = row.get(mono, Fraction(0)) - coeff * value
                    if new:
                        row[mono] = new
                    else:
                        row.pop(mono, None)
        return True


def post_treat(selected: list[Path], grid: QuantileGrid) -> list[Path]:
    """Drop rules whose prediction function is a linear combination
    (intercept included) of the prediction functions of higher-frequency
    kept rules.

    The scan preserves the input order, which must be decreasing frequency.
    Among the two complementary one-split rules of a first tree level the
    ``"L"`` form survives, because it sorts first among equal frequencies
    and its counterpart defines the identical prediction function.  The
    dependence test is exact (integer/rational arithmetic), so re-running
    the filter on its own output is the identity.
    """
    span = _ExactSpan()
    span.add({(): 1})  # the intercept / all-ones function
    kept: list[Path] = []
    for path in selected:
        if span.add(path_monomials(path)):
            kept.append(path)
    return kept


@dataclass(frozen=True)
class Rule:
    """Piecewise-constant predictor attached to a path.

    ``bounds`` maps feature index to the tightest (low, high) interval
    implied by the constraints: low is inclusive (from ``>=`` splits), high
    exclusive (from ``<`` splits).  ``y_in``/``y_out`` are training response
    means inside and outside the box.
    """

    path: Path
    bounds: tuple[tuple[int, float, float], ...]
    y_in: float
    y_out: float
    n_in: int
    n_out: int

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Vectorized membership test for rows of a feature matrix."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        inside = np.ones(len(x), dtype=bool)
        for feature, low, high in self.bounds:
            column = x[:, feature]
            if low > -np.inf:
                inside &= column >= low
            if high < np.inf:
                inside &= column < high
        return inside


def path_bounds(path: Path, grid: QuantileGrid) -> tuple[tuple[int, float, float], ...]:
    """Tightest per-feature interval implied by a path's constraints."""
    intervals: dict[int, list[float]] = {}
    for feature, rank, side in path:
        cut = grid.cut_value(feature, rank)
        low, high = intervals.setdefault(feature, [-np.inf, np.inf])
        if side == SIDE_RIGHT:
            intervals[feature][0] = max(low, cut)
        else:
            intervals[feature][1] = min(high, cut)
    return tuple((f, lo, hi) for f, (lo, hi) in sorted(intervals.items()))


def rule_from_path(path: Path, grid: QuantileGrid, data: Dataset) -> Rule:
    """Estimate the inside/outside response means of a path on a dataset."""
    bounds = path_bounds(path, grid)
    probe = Rule(path=path, bounds=bounds, y_in=0.0, y_out=0.0, n_in=0, n_out=0)
    inside = probe.contains(data.x)
    n_in = int(inside.sum())
    n_out = data.n - n_in
    if n_in == 0 or n_out == 0:
        raise DegenerateRuleError(
            f"path {path} has empty {'inside' if n_in == 0 else 'outside'} support"
        )
    return Rule(
        path=path,
        bounds=bounds,
        y_in=float(data.y[inside].mean()),
        y_out=float(data.y[~inside].mean()),
        n_in=n_in,
        n_out=n_out,
    )


def rule_eval(rule: Rule, x) -> float:
    """y_in if the point falls in the rule's box, else y_out."""
    return float(np.where(rule.contains(np.atleast_2d(x)), rule.y_in, rule.y_out)[0])


def rule_matrix(rules: list[Rule], x: np.ndarray) -> np.ndarray:
    """Stack rule outputs column-wise for a feature matrix: shape (n, c)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = np.empty((len(x), len(rules)))
    for k, rule in enumerate(rules):
        out[:, k] = np.where(rule.contains(x), rule.y_in, rule.y_out)
    return out
