"""leakguard: train/test leakage auditing for representation-based ML."""

__version__ = "0.1.0"

from .core import (  # noqa: E402,F401
    BinaryFeatureVector,
    DataFormatError,
    Dataset,
    DatasetValidationError,
    DenseEmbedding,
    Label,
    LeakguardError,
    Sample,
    Schema,
    SchemaMismatchError,
    Timestamp,
    Violation,
    validate_dataset,
)
from .dataio import load_dataset, load_predictions, save_dataset, save_predictions  # noqa: E402,F401
from .leakage import (  # noqa: E402,F401
    LeakageReport,
    LeakMatch,
    ThresholdCalibration,
    calibrate_threshold,
    cosine_similarity,
    duplicate_groups,
    exact_leak_set,
    iou,
    leak_report,
    leakage_decay,
    near_leak_set,
    union_leak,
)
from .metrics import (  # noqa: E402,F401
    ConfusionCounts,
    MetricsReport,
    PartitionedReport,
    average_over_periods,
    confusion,
    evaluate_partitions,
    metrics_from_counts,
    pooled_metrics,
)
from .splitter import (  # noqa: E402,F401
    Batch,
    BatchSpec,
    Window,
    WindowSpec,
    build_batches,
    build_sliding_windows,
    lint_split,
)
from .harness import (  # noqa: E402,F401
    AdditionsSchedule,
    LeakAwareConfig,
    Period,
    PredictionSet,
    TrainingPool,
    baseline_predict,
    ingest_predictions,
    leak_aware_evaluate,
    leak_aware_predict,
    run_continuous_eval,
)
from .synth import (  # noqa: E402,F401
    BinarySpec,
    EmbeddingSpec,
    FixtureError,
    SynthConfig,
    flip_fixture,
    gen_synthetic,
    split_periods,
)
