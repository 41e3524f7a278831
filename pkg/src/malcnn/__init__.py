"""Behavioural malware detection for cloud VMs with convolutional nets.

The pipeline turns per-process performance snapshots of a virtual
machine into fixed-shape 120x45 sample matrices, trains one of seven
CNN architectures to classify them benign/malicious, and evaluates the
result with confusion metrics, ROC/AUC and per-sample detection
latency.  A deterministic testbed simulator generates labeled corpora
when real collector data is not available.
"""

from .encoding import (
    DatasetSplit,
    FeatureStats,
    SampleMatrix,
    TraceEncoder,
    assign_rows,
    encode_sample,
    encode_trace_arrays,
    ingest_external_trace,
    label_sample,
    load_dataset,
    replicate_channels,
    save_dataset,
    split_dataset,
    trace_labels,
)
from .errors import (
    CapacityError,
    ChannelReplicationError,
    CheckpointError,
    ConfigurationError,
    MalcnnError,
    NonFiniteGradientError,
    ShapeMismatchError,
    TraceParseError,
    TrainingDivergedError,
    UndefinedMetricError,
    ValidationError,
)
from .features import DEFAULT_SCHEMA, FeatureSchema, UniqueProcessId
from .metrics import (
    ConfusionCounts,
    DetectionTiming,
    MetricReport,
    MetricValues,
    RocCurve,
    confusion,
    detection_time,
    evaluate_model,
    f1_score,
    metrics,
    roc_and_auc,
)
from .testbed import (
    AutoScalePolicy,
    ExperimentConfig,
    ExperimentTrace,
    MalwareProfile,
    ProcessFootprint,
    ProcessSnapshot,
    TrafficModel,
    generate_corpus,
    profile_variants,
    read_trace,
    sample_pareto_onoff,
    simulate_experiment,
    step_autoscaler,
    write_trace,
)
from .training import (
    AdamState,
    ConvNetClassifier,
    TrainConfig,
    TrainHistory,
    adam_step,
    record_time_to_best,
    train,
)
from .zoo import (
    Checkpoint,
    GraphNet,
    LayerSpec,
    MODEL_NAMES,
    ModelSpec,
    build_densenet,
    build_lenet5,
    build_model,
    build_network,
    build_resnet,
    count_params,
    load_checkpoint,
    save_checkpoint,
)

__version__ = "0.1.0"
