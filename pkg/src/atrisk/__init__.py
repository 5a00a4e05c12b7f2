"""Early-semester screening of students at risk of failing a course."""

from .config import DEFAULT_PHASES, PhaseWindow, PipelineConfig, load_config
from .evaluate import (
    ConfusionMatrix,
    EvaluationReport,
    confusion_matrix,
    cross_validate,
    evaluate_predictions,
    roc_auc,
    stratified_holdout_split,
    stratified_kfold,
)
from .exceptions import AtRiskError, AtRiskWarning, ConfigError, DataError, PrivacyError
from .featsel import TopKSelector, forest_importance, rank_by_correlation, select_top_k
from .ingest import (
    FeatureSpec,
    RiskRule,
    RosterSchema,
    derive_at_risk_labels,
    filter_consent,
    load_schema,
    parse_roster,
    pseudonymize,
)
from .models import (
    DecisionTree,
    GaussianNaiveBayes,
    KNearestNeighbors,
    LinearSVM,
    LogisticRegression,
    ModelSpec,
    RandomForest,
    load_model,
    save_model,
    train,
)
from .pipeline import ScreeningModel, phase_predictions, run_pipeline
from .preprocess import FeatureEncoder, FeatureMatrix, MedianModeImputer, Standardizer
from .report import comparison_table, misprediction_rate
from .resample import ADASYN, SMOTE, ResamplerConfig, resample
from .syndata import GeneratorConfig, generate_roster

__version__ = "0.1.0"
