"""Random Forest meta-learner under Binary Relevance."""

from .evaluation import (
    DEFAULT_GRID,
    SMALL_GRID,
    EvaluationReport,
    Importance,
    TrainingRun,
    accuracy,
    evaluate_model,
    grid_search,
    macro_f1,
    majority_baseline,
    micro_f1,
    permutation_importance,
    random_baseline,
    split,
    train_and_report,
    weighted_f1,
)
from .forest import HyperParams, RandomForest, fit_forest, predict_forest
from .multioutput import (
    OUTPUTS,
    BinaryRelevance,
    MultiOutputModel,
    fit_multi_output,
    predict_multi_output,
)
from .tree import DecisionTree
