"""Confidence-gated sequential ensembles.

Train a chain of classifiers where each member specializes on the samples
its predecessor classified with low confidence, then answer queries by
cascading through the members until one is confident enough, with
consensus fallbacks and calibration/accuracy reporting.
"""

from .builder import (
    BuildConfig,
    BuildReport,
    build_ensemble,
    member_prediction_arrays,
    member_uncertainty_scores,
    select_next_subset_nested,
    select_next_subset_rebased,
)
from .cascade import (
    CONSENSUS_LAST_MEMBER,
    CONSENSUS_MOST_CONFIDENT,
    CascadeTrace,
    EvaluationRecord,
    RuntimeConfig,
    batch_evaluate,
    cascade_predict,
    consensus_last_member,
    consensus_most_confident,
)
from .classifiers import (
    ClassifierSpec,
    TrainConfig,
    TrainedModel,
    cross_entropy_loss,
    fit,
    init_model,
    predict_logits,
    predict_logits_batch,
)
from .config import (
    DEFAULT_RUNTIME_THRESHOLD_GRID,
    DEFAULT_TRAINING_THRESHOLD_GRID,
    DatasetSource,
    ExperimentConfig,
    load_dataset,
    load_experiment_config,
)
from .datasets import (
    Dataset,
    Sample,
    SubsetView,
    generate_blobs,
    load_csv,
    load_idx,
    materialize,
    save_csv,
)
from .errors import (
    ConfEnsembleError,
    ConfigError,
    DatasetParseError,
    DegenerateSubsetError,
    EmptyTrainingSetError,
    InvalidInputError,
    InvalidViewError,
    ManifestDigestError,
    ManifestVersionError,
)
from .manifest import SELECTION_NESTED, SELECTION_REBASED, EnsembleManifest
from .metrics import (
    CalibrationReport,
    ScoreHistogram,
    expected_calibration_error,
    score_histogram,
    top1_accuracy,
)
from .numerics import (
    Prediction,
    argmax_class,
    distance_to_one,
    distance_to_zero,
    softmax,
    uncertainty,
)
from .persist import load_manifest, manifests_equal, save_manifest

__version__ = "0.1.0"
