"""Stable rule-set regression.

Fits a short, weighted list of if/else rules by extracting the most
frequent node paths of a quantile-discretized random forest, filtering out
linearly dependent rules, and combining the survivors with non-negative
ridge weights.
"""

from .aggregation import (
    SirusModel,
    build_design,
    fit_nn_ridge,
    fit_sirus,
    model_from_json,
    model_to_json,
    predict,
    tune_penalty,
)
from .data import (
    Dataset,
    FoldAssignment,
    QuantileGrid,
    compute_quantile_grid,
    kfold_split,
    load_dataset,
)
from .errors import (
    DataError,
    DegenerateRuleError,
    InvalidPathError,
    SirusError,
    TuningError,
)
from .forest import (
    ForestParams,
    TreePaths,
    cart_variance_reduction,
    full_depth_forest_predict,
    grow_forest,
    grow_tree,
)
from .metrics import (
    EvaluationReport,
    StabilityReport,
    cv_evaluate,
    dice_sorensen,
    unexplained_variance,
)
from .rules import (
    PathFrequencyTable,
    Rule,
    canonicalize_path,
    post_treat,
    rule_eval,
    rule_from_path,
    select_paths,
)
from .tuning import (
    ParetoPoint,
    TuningResult,
    adaptive_num_trees,
    binomial_cdf,
    stopping_epsilon,
    tune_p0,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "QuantileGrid",
    "FoldAssignment",
    "load_dataset",
    "compute_quantile_grid",
    "kfold_split",
    "ForestParams",
    "TreePaths",
    "cart_variance_reduction",
    "grow_tree",
    "grow_forest",
    "full_depth_forest_predict",
    "PathFrequencyTable",
    "Rule",
    "canonicalize_path",
    "select_paths",
    "post_treat",
    "rule_from_path",
    "rule_eval",
    "SirusModel",
    "fit_sirus",
    "fit_nn_ridge",
    "tune_penalty",
    "build_design",
    "predict",
    "model_to_json",
    "model_from_json",
    "dice_sorensen",
    "unexplained_variance",
    "cv_evaluate",
    "EvaluationReport",
    "StabilityReport",
    "binomial_cdf",
    "stopping_epsilon",
    "adaptive_num_trees",
    "tune_p0",
    "TuningResult",
    "ParetoPoint",
    "SirusError",
    "DataError",
    "InvalidPathError",
    "DegenerateRuleError",
    "TuningError",
]
