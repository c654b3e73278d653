import json

import numpy as np
import pytest

from sirus import (
    Dataset,
    ForestParams,
    compute_quantile_grid,
    fit_nn_ridge,
    fit_sirus,
    kfold_split,
    model_from_json,
    model_to_json,
    predict,
    tune_penalty,
)
from sirus.aggregation import (
    RuleDesignMatrix,
    SirusModel,
    build_design,
    default_penalty_grid,
    kkt_violation,
)
from sirus.data import QuantileGrid
from sirus.rules import Rule, path_bounds, rule_from_path, rule_matrix
from oracle_utils import projected_gradient_nn_ridge as projected_gradient_oracle


def random_instance(rng, n=None, c=None):
    n = n or int(rng.integers(5, 51))
    c = c or int(rng.integers(1, 11))
    gamma = rng.normal(size=(n, c))
    y = rng.normal(size=n)
    penalty = float(rng.uniform(0.01, 1.0))
    return RuleDesignMatrix(gamma=gamma, y=y), penalty


class TestFitNNRidge:
    def test_one_dimensional_analytic_solution(self):
        design = RuleDesignMatrix(
            gamma=np.array([[1.0], [-1.0]]), y=np.array([1.0, -1.0])
        )
        weights, intercept = fit_nn_ridge(design, penalty=0.5)
        # beta = g'y / (g'g + n*penalty) = 2 / 3
        assert weights[0] == pytest.approx(2.0 / 3.0, abs=1e-12)
        assert intercept == pytest.approx(0.0, abs=1e-12)

    def test_negative_correlation_hits_the_bound(self):
        design = RuleDesignMatrix(
            gamma=np.array([[1.0], [-1.0], [1.0], [-1.0]]),
            y=np.array([-1.0, 1.0, -2.0, 2.0]),
        )
        weights, intercept = fit_nn_ridge(design, penalty=0.1)
        assert weights[0] == 0.0
        assert intercept == pytest.approx(design.y.mean())

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_projected_gradient_oracle(self, seed):
        rng = np.random.default_rng(seed)
        design, penalty = random_instance(rng, n=8, c=4)
        weights, intercept = fit_nn_ridge(design, penalty)
        ref_weights, ref_intercept = projected_gradient_oracle(
            design.gamma, design.y, penalty
        )
        assert np.max(np.abs(weights - ref_weights)) <= 1e-8
        assert intercept == pytest.approx(ref_intercept, abs=1e-8)

    @pytest.mark.parametrize("seed", range(12))
    def test_kkt_conditions_hold(self, seed):
        rng = np.random.default_rng(seed)
        design, penalty = random_instance(rng)
        weights, intercept = fit_nn_ridge(design, penalty)
        assert kkt_violation(design, penalty, weights, intercept) <= 1e-8

    def test_objective_no_worse_than_zero_vector(self):
        rng = np.random.default_rng(5)
        design, penalty = random_instance(rng)
        weights, intercept = fit_nn_ridge(design, penalty)
        n = len(design.y)

        def objective(w, b):
            return (
                np.sum((design.y - b - design.gamma @ w) ** 2) / n
                + penalty * np.sum(w**2)
            )

        assert objective(weights, intercept) <= objective(
            np.zeros_like(weights), design.y.mean()
        ) + 1e-12

    def test_weight_norm_monotone_in_penalty(self):
        rng = np.random.default_rng(11)
        design, _ = random_instance(rng, n=40, c=6)
        norms = []
        for penalty in np.geomspace(1e-4, 1e2, 12):
            weights, _ = fit_nn_ridge(design, penalty)
            norms.append(float(weights @ weights))
        assert all(a >= b - 1e-10 for a, b in zip(norms, norms[1:]))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            RuleDesignMatrix(gamma=np.array([[np.nan]]), y=np.array([1.0]))


def two_rule_setup():
    """Response built exactly from two grid-cut indicators plus tiny noise."""
    rng = np.random.default_rng(7)
    n = 120
    x = rng.normal(size=(n, 2))
    provisional = Dataset(x=x, y=np.arange(n, dtype=float), feature_names=("a", "b"))
    grid = compute_quantile_grid(provisional, 10)
    cut_a, cut_b = grid.cut_value(0, 5), grid.cut_value(1, 6)
    y = (
        3.0 * (x[:, 0] < cut_a)
        + 1.5 * (x[:, 1] < cut_b)
        + 0.02 * rng.normal(size=n)
    )
    data = Dataset(x=x, y=y, feature_names=("a", "b"))
    paths = [((0, 5, "L"),), ((1, 6, "L"),)]
    rules = [rule_from_path(p, grid, data) for p in paths]
    return data, grid, rules


class TestElseClauseEquivalence:
    def test_indicator_form_fits_identically(self):
        data, grid, rules = two_rule_setup()
        penalty = 0.3
        design = build_design(rules, data)
        weights, intercept = fit_nn_ridge(design, penalty)

        inside = np.column_stack([r.contains(data.x) for r in rules]).astype(float)
        deltas = np.array([r.y_in - r.y_out for r in rules])
        indicator_design = RuleDesignMatrix(gamma=inside * deltas, y=data.y)
        alt_weights, alt_intercept = fit_nn_ridge(indicator_design, penalty)

        assert np.max(np.abs(weights - alt_weights)) <= 1e-8
        # identical predictions once the intercept absorbs the else-values
        outs = np.array([r.y_out for r in rules])
        assert alt_intercept == pytest.approx(
            intercept + float(outs @ weights), abs=1e-8
        )
        pred = intercept + design.gamma @ weights
        alt_pred = alt_intercept + indicator_design.gamma @ alt_weights
        assert np.max(np.abs(pred - alt_pred)) <= 1e-8


class TestTunePenalty:
    def test_pure_noise_prefers_heavy_shrinkage(self):
        # rules keep their real-data outputs; the response is permuted, so
        # any weight only fits noise and shrinkage wins
        data, grid, rules = two_rule_setup()
        rng = np.random.default_rng(0)
        shuffled = Dataset(
            x=data.x, y=rng.permutation(data.y), feature_names=data.feature_names
        )
        folds = kfold_split(shuffled.n, 10, seed=1)
        grid_values = default_penalty_grid(shuffled.y)
        chosen = tune_penalty(rules, shuffled, folds, grid_values)
        assert chosen >= np.median(grid_values)

    def test_rule_explained_signal_prefers_light_shrinkage(self):
        data, grid, rules = two_rule_setup()
        folds = kfold_split(data.n, 10, seed=1)
        grid_values = default_penalty_grid(data.y)
        chosen = tune_penalty(rules, data, folds, grid_values)
        assert chosen <= np.median(grid_values)
        # CV error at the chosen penalty is near zero relative to Var(y)
        design = build_design(rules, data)
        weights, intercept = fit_nn_ridge(design, chosen)
        residual = data.y - intercept - design.gamma @ weights
        assert np.mean(residual**2) < 0.05 * np.var(data.y)

    def test_single_value_grid_returned(self):
        data, _, rules = two_rule_setup()
        folds = kfold_split(data.n, 5, seed=0)
        assert tune_penalty(rules, data, folds, np.array([0.37])) == 0.37


def published_style_model():
    """Hand-built model shaped like a published rule list: five features,
    known cut values, fixed outputs and weights."""
    names = ("vh", "wind", "humidity", "temp", "ibh", "dpg", "ibt", "vis")
    cut_map = {
        0: {5: 5840.0},
        3: {4: 65.0, 6: 70.0},
        4: {3: 2110.0, 5: 2960.0},
        6: {3: 120.0, 5: 189.0, 7: 227.0},
        7: {2: 150.0},
    }
    cuts, ranks = [], []
    for j in range(len(names)):
        entries = sorted(cut_map.get(j, {}).items(), key=lambda kv: kv[1])
        ranks.append(np.array([r for r, _ in entries], dtype=np.int64))
        cuts.append(np.array([v for _, v in entries], dtype=float))
    grid = QuantileGrid(q=10, cuts=tuple(cuts), ranks=tuple(ranks))

    rows = [
        # (path, y_in, y_out, weight, frequency)
        (((3, 4, "L"),), 7.0, 19.0, 0.12, 0.29),
        (((6, 5, "L"),), 7.0, 18.0, 0.07, 0.17),
        (((3, 4, "R"), (7, 2, "L")), 20.0, 7.0, 0.31, 0.063),
        (((0, 5, "L"),), 10.0, 20.0, 0.072, 0.061),
        (((4, 3, "L"),), 16.0, 7.0, 0.14, 0.060),
        (((4, 5, "L"),), 15.0, 6.0, 0.10, 0.058),
        (((3, 4, "R"), (4, 3, "L")), 21.0, 8.0, 0.16, 0.051),
        (((7, 2, "L"),), 14.0, 7.0, 0.18, 0.048),
        (((3, 4, "L"), (6, 3, "L")), 5.0, 15.0, 0.15, 0.043),
        (((3, 6, "L"),), 8.0, 20.0, 0.14, 0.040),
        (((6, 7, "L"),), 9.0, 22.0, 0.21, 0.039),
    ]
    rules = [
        Rule(path=path, bounds=path_bounds(path, grid), y_in=y_in, y_out=y_out,
             n_in=10, n_out=10)
        for path, y_in, y_out, _, _ in rows
    ]
    return SirusModel(
        intercept=-7.8,
        rules=rules,
        weights=np.array([w for _, _, _, w, _ in rows]),
        frequencies=[f for _, _, _, _, f in rows],
        penalty=0.1,
        p0=0.03,
        grid=grid,
        feature_names=names,
        response_name="Ozone",
        response_mean=12.0,
        num_trees=9000,
    )


class TestPredict:
    def test_empty_rule_list_returns_intercept(self):
        grid = QuantileGrid(q=10, cuts=(np.array([]),), ranks=(np.array([], dtype=np.int64),))
        model = SirusModel(
            intercept=4.2, rules=[], weights=np.zeros(0), frequencies=[],
            penalty=1.0, p0=0.5, grid=grid, feature_names=("a",),
            response_name="y", response_mean=4.2, num_trees=10,
        )
        assert predict(model, [123.0]) == 4.2

    def test_published_table_hand_sum(self):
        model = published_style_model()
        # query: vh=5000, temp=60, ibh=3000, ibt=100, vis=200 (others free)
        x = np.array([5000.0, 5.0, 50.0, 60.0, 3000.0, 0.0, 100.0, 200.0])
        # hand evaluation, rule by rule:
        #  1. temp<65: in        -> 7   * 0.12
        #  2. ibt<189: in        -> 7   * 0.07
        #  3. temp>=65&vis<150: out -> 7 * 0.31
        #  4. vh<5840: in        -> 10  * 0.072
        #  5. ibh<2110: out      -> 7   * 0.14
        #  6. ibh<2960: out      -> 6   * 0.10
        #  7. temp>=65&ibh<2110: out -> 8 * 0.16
        #  8. vis<150: out       -> 7   * 0.18
        #  9. temp<65&ibt<120: in -> 5  * 0.15
        # 10. temp<70: in        -> 8   * 0.14
        # 11. ibt<227: in        -> 9   * 0.21
        expected = -7.8 + (
            7 * 0.12 + 7 * 0.07 + 7 * 0.31 + 10 * 0.072 + 7 * 0.14 + 6 * 0.10
            + 8 * 0.16 + 7 * 0.18 + 5 * 0.15 + 8 * 0.14 + 9 * 0.21
        )
        assert predict(model, x) == pytest.approx(expected, abs=1e-12)

    def test_scaling_weights_and_intercept_scales_predictions(self):
        model = published_style_model()
        x = np.array([5000.0, 5.0, 50.0, 60.0, 3000.0, 0.0, 100.0, 200.0])
        doubled = SirusModel(
            intercept=2 * model.intercept,
            rules=model.rules,
            weights=2 * model.weights,
            frequencies=model.frequencies,
            penalty=model.penalty,
            p0=model.p0,
            grid=model.grid,
            feature_names=model.feature_names,
            response_name=model.response_name,
            response_mean=model.response_mean,
            num_trees=model.num_trees,
        )
        assert predict(doubled, x) == pytest.approx(2 * predict(model, x))

    def test_dimension_mismatch(self):
        model = published_style_model()
        with pytest.raises(ValueError):
            model.predict(np.ones((1, 3)))

    def test_all_zero_weights_gives_intercept(self):
        model = published_style_model()
        flat = SirusModel(
            intercept=model.intercept, rules=model.rules,
            weights=np.zeros(len(model.rules)), frequencies=model.frequencies,
            penalty=model.penalty, p0=model.p0, grid=model.grid,
            feature_names=model.feature_names, response_name="Ozone",
            response_mean=model.response_mean, num_trees=model.num_trees,
        )
        assert predict(flat, np.zeros(8)) == model.intercept

    def test_negative_weights_rejected(self):
        model = published_style_model()
        with pytest.raises(ValueError):
            SirusModel(
                intercept=0.0, rules=model.rules,
                weights=-np.ones(len(model.rules)), frequencies=model.frequencies,
                penalty=1.0, p0=0.1, grid=model.grid,
                feature_names=model.feature_names, response_name="y",
                response_mean=0.0, num_trees=1,
            )


class TestPersistence:
    def test_round_trip_is_bit_exact(self, toy_data):
        params = ForestParams(num_trees=150, seed=2)
        model = fit_sirus(toy_data, p0=0.1, params=params)
        assert model.num_rules >= 1
        text = model_to_json(model)
        clone = model_from_json(text)
        queries = toy_data.x
        original = model.predict(queries)
        restored = clone.predict(queries)
        assert original.tolist() == restored.tolist()  # bit-exact
        assert clone.penalty == model.penalty
        assert clone.p0 == model.p0
        assert [r.path for r in clone.rules] == [r.path for r in model.rules]
        assert model_to_json(clone) == text

    def test_schema_fields(self, toy_data):
        model = fit_sirus(toy_data, p0=0.1, params=ForestParams(num_trees=80, seed=4))
        doc = json.loads(model_to_json(model))
        assert {"q", "p0", "lambda", "intercept", "rules"} <= set(doc)
        for rule in doc["rules"]:
            assert {"constraints", "y_in", "y_out", "weight", "frequency"} <= set(rule)
            for constraint in rule["constraints"]:
                assert {"feature", "rank", "cut_value", "side"} <= set(constraint)


class TestFitSirus:
    def test_empty_selection_gives_intercept_model(self, toy_data):
        model = fit_sirus(toy_data, p0=0.999, params=ForestParams(num_trees=30, seed=0))
        assert model.num_rules == 0
        assert model.predict(toy_data.x[:3]).tolist() == [toy_data.y.mean()] * 3

    def test_reuses_supplied_forest(self, toy_data):
        from sirus import grow_forest
        from sirus.forest import grow_forest_call_count

        grid = compute_quantile_grid(toy_data, 10)
        params = ForestParams(num_trees=100, seed=5)
        table = grow_forest(toy_data, grid, params)
        before = grow_forest_call_count()
        model = fit_sirus(toy_data, p0=0.15, params=params, grid=grid, table=table)
        assert grow_forest_call_count() == before
        assert model.num_trees == 100

    def test_kkt_holds_on_fitted_model(self, toy_data):
        model = fit_sirus(toy_data, p0=0.1, params=ForestParams(num_trees=150, seed=2))
        design = build_design(model.rules, toy_data)
        scale = max(1.0, float(np.var(toy_data.y)))
        assert (
            kkt_violation(design, model.penalty, model.weights, model.intercept)
            <= 1e-8 * scale
        )
