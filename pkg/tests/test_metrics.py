import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sirus import (
    Dataset,
    ForestParams,
    cv_evaluate,
    dice_sorensen,
    unexplained_variance,
)
from sirus.metrics import stability_report

paths_strategy = st.sets(
    st.tuples(st.integers(0, 3), st.integers(1, 9), st.sampled_from(["L", "R"])),
    max_size=6,
).map(lambda s: {(c,) for c in s})


class TestDice:
    def test_identical_sets(self):
        a = {((0, 1, "L"),), ((1, 2, "R"),)}
        assert dice_sorensen(a, set(a)) == 1.0

    def test_disjoint_sets(self):
        a = {((0, 1, "L"),)}
        b = {((1, 2, "R"),)}
        assert dice_sorensen(a, b) == 0.0

    def test_formula_arithmetic(self):
        a = {((0, 1, "L"),), ((1, 1, "L"),), ((2, 1, "L"),)}
        b = {((0, 1, "L"),), ((1, 1, "L"),), ((3, 1, "L"),)}
        assert dice_sorensen(a, b) == pytest.approx(2 / 3)

    def test_empty_conventions(self):
        assert dice_sorensen(set(), set()) == 1.0
        assert dice_sorensen(set(), {((0, 1, "L"),)}) == 0.0

    @given(paths_strategy, paths_strategy)
    @settings(max_examples=150)
    def test_symmetry_and_bounds(self, a, b):
        value = dice_sorensen(a, b)
        assert value == dice_sorensen(b, a)
        assert 0.0 <= value <= 1.0
        if a:
            assert dice_sorensen(a, a) == 1.0

    def test_removing_shared_element_recomputes_exactly(self):
        a = {((0, 1, "L"),), ((1, 1, "L"),), ((2, 1, "L"),)}
        b = set(a)
        shared = ((0, 1, "L"),)
        smaller = a - {shared}
        assert dice_sorensen(smaller, b) == pytest.approx(2 * 2 / (2 + 3))

    def test_stability_report_mean(self):
        sets = [{1}, {1}, {2}]
        report = stability_report(sets)
        assert len(report.pairwise) == 3
        assert report.mean_dice == pytest.approx(np.mean([1.0, 0.0, 0.0]))


class TestUnexplainedVariance:
    def test_perfect_predictions(self):
        truth = np.array([1.0, 2.0, 3.0])
        assert unexplained_variance(truth, truth) == 0.0

    def test_constant_mean_prediction_is_one(self):
        truth = np.array([1.0, 2.0, 3.0, 4.0])
        preds = np.full(4, truth.mean())
        assert unexplained_variance(preds, truth) == 1.0

    def test_shift_invariance(self):
        rng = np.random.default_rng(0)
        truth = rng.normal(size=50)
        preds = truth + rng.normal(scale=0.5, size=50)
        base = unexplained_variance(preds, truth)
        assert unexplained_variance(preds + 7.0, truth + 7.0) == pytest.approx(base)

    def test_scale_invariance(self):
        rng = np.random.default_rng(1)
        truth = rng.normal(size=50)
        preds = truth + rng.normal(scale=0.5, size=50)
        base = unexplained_variance(preds, truth)
        assert unexplained_variance(preds * -3.0, truth * -3.0) == pytest.approx(base)

    def test_zero_variance_truth_rejected(self):
        with pytest.raises(ValueError):
            unexplained_variance(np.ones(5), np.ones(5))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            unexplained_variance(np.ones(4), np.ones(5))


@pytest.fixture(scope="module")
def small_data():
    # binary step feature with a quarter of zeros: the cut keeps
    # quantile rank 3 in every fold resample
    rng = np.random.default_rng(3)
    n = 200
    x = rng.normal(size=(n, 3))
    x[:, 0] = rng.permutation((np.arange(n) % 4 != 0).astype(float))
    y = 4.0 * (x[:, 0] < 1.0) + 0.2 * rng.normal(size=n)
    return Dataset(x=x, y=y, feature_names=("a", "b", "c"))


class TestCvEvaluate:

    def test_deterministic(self, small_data):
        params = ForestParams(num_trees=80, seed=0)
        a = cv_evaluate(small_data, 0.2, params, k=5, seed=11)
        b = cv_evaluate(small_data, 0.2, params, k=5, seed=11)
        assert a.unexplained_variance == b.unexplained_variance
        assert a.stability == b.stability
        assert a.model_size == b.model_size

    def test_strong_signal_metrics(self, small_data):
        params = ForestParams(num_trees=150, seed=0)
        report = cv_evaluate(small_data, 0.3, params, k=5, seed=1)
        assert report.unexplained_variance < 0.2
        assert report.stability > 0.8
        assert report.model_size >= 1
        assert report.mean_num_trees == 150

    def test_requires_two_folds(self, small_data):
        with pytest.raises(ValueError):
            cv_evaluate(small_data, 0.2, ForestParams(num_trees=10), k=1)

    def test_serial_and_parallel_agree(self, small_data, monkeypatch):
        params = ForestParams(num_trees=60, seed=2)
        monkeypatch.setenv("SIRUS_THREADS", "1")
        serial = cv_evaluate(small_data, 0.2, params, k=4, seed=5)
        monkeypatch.setenv("SIRUS_THREADS", "2")
        parallel = cv_evaluate(small_data, 0.2, params, k=4, seed=5)
        assert serial.unexplained_variance == parallel.unexplained_variance
        assert serial.stability == parallel.stability
        assert serial.model_size == parallel.model_size

    def test_report_row_schema(self, small_data):
        report = cv_evaluate(
            small_data, 0.2, ForestParams(num_trees=40, seed=1), k=4, seed=3
        )
        row = report.to_row("toy")
        assert list(row) == ["dataset", "p0", "size", "stability", "error", "M", "seed"]
