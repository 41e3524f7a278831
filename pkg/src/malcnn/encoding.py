"""Trace-to-tensor encoding and per-experiment dataset splits.

A trace becomes a sequence of fixed-shape 120x45 sample matrices: one
stable row per unique process for the whole experiment (zero-padded
before the process first appears), one column per schema feature,
min-max normalized with statistics learned from the training split
only.  Splitting happens at experiment granularity so no malware ever
contributes samples to more than one split.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import CapacityError, ConfigurationError, ChannelReplicationError, ValidationError
from .features import DEFAULT_SCHEMA, N_FEATURES, FeatureSchema, UniqueProcessId
from .testbed import ExperimentTrace, ProcessSnapshot, read_trace
from .validation import MATRIX_ROWS, check_split_ratios

DATASET_SCHEMA_VERSION = 1

LABEL_BENIGN = "benign"
LABEL_MALICIOUS = "malicious"


def label_sample(timestamp_s: float, injection_time_s: float) -> str:
    """A sample is malicious from the injection instant onwards: the
    malicious process already exists in the snapshot taken at that time."""
    return LABEL_MALICIOUS if timestamp_s >= injection_time_s else LABEL_BENIGN


def assign_rows(trace: ExperimentTrace) -> dict[UniqueProcessId, int]:
    """One stable matrix row per unique process for the whole experiment.

    Rows are ordered by first appearance; simultaneous appearances are
    broken by (pid, command, hash) so re-encoding is deterministic.
    """
    first_seen: dict[UniqueProcessId, float] = {}
    for snap in trace.snapshots:
        for upid, _ in snap.processes:
            first_seen.setdefault(upid, snap.timestamp_s)
    ordered = sorted(first_seen, key=lambda u: (first_seen[u], u.pid, u.command, u.binary_hash))
    if len(ordered) > MATRIX_ROWS:
        raise CapacityError(
            f"trace {trace.name!r} has {len(ordered)} unique processes but the sample "
            f"matrix holds {MATRIX_ROWS}; first overflowing process: {ordered[MATRIX_ROWS]}"
        )
    return {upid: row for row, upid in enumerate(ordered)}


@dataclass(frozen=True)
class FeatureStats:
    """Per-feature min/max learned from training-split samples only."""

    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        if self.minimum.shape != (N_FEATURES,) or self.maximum.shape != (N_FEATURES,):
            raise ValidationError("normalization statistics must cover all 45 features")

    @classmethod
    def from_traces(cls, traces: list[ExperimentTrace]) -> "FeatureStats":
        lo = np.full(N_FEATURES, np.inf)
        hi = np.full(N_FEATURES, -np.inf)
        seen_any = False
        for trace in traces:
            for snap in trace.snapshots:
                for _, vec in snap.processes:
                    np.minimum(lo, vec, out=lo)
                    np.maximum(hi, vec, out=hi)
                    seen_any = True
        if not seen_any:
            raise ValidationError("cannot compute normalization statistics: no process rows")
        return cls(minimum=lo, maximum=hi)

    def normalize(self, values: np.ndarray) -> np.ndarray:
        span = self.maximum - self.minimum
        span = np.where(span > 0.0, span, 1.0)
        return np.clip((values - self.minimum) / span, 0.0, 1.0)

    def to_json(self) -> dict:
        return {"minimum": self.minimum.tolist(), "maximum": self.maximum.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "FeatureStats":
        return cls(
            minimum=np.asarray(data["minimum"], dtype=np.float64),
            maximum=np.asarray(data["maximum"], dtype=np.float64),
        )


@dataclass(frozen=True, eq=False)
class SampleMatrix:
    """One fixed-shape model input: 120 process rows x 45 feature columns."""

    values: np.ndarray
    channels: int = 1
    timestamp_s: float = 0.0
    vm_id: str = ""
    label: str | None = None

    def __post_init__(self):
        expected = (MATRIX_ROWS, N_FEATURES) if self.channels == 1 else (
            self.channels,
            MATRIX_ROWS,
            N_FEATURES,
        )
        if self.channels not in (1, 3):
            raise ValidationError(f"channels must be 1 or 3, got {self.channels}")
        if self.values.shape != expected:
            raise ValidationError(
                f"sample values have shape {self.values.shape}, expected {expected}"
            )
        if self.label not in (None, LABEL_BENIGN, LABEL_MALICIOUS):
            raise ValidationError(f"unknown label {self.label!r}")


def encode_sample(
    snapshot: ProcessSnapshot,
    rows: dict[UniqueProcessId, int],
    schema: FeatureSchema,
    stats: FeatureStats,
    label: str | None = None,
) -> SampleMatrix:
    """Encode one snapshot: present processes land in their assigned row,
    all other rows stay zero."""
    lo, hi = schema.bounds()
    values = np.zeros((MATRIX_ROWS, N_FEATURES), dtype=np.float32)
    for upid, vec in snapshot.processes:
        if upid not in rows:
            raise ValidationError(f"process {upid} has no assigned row")
        if not np.isfinite(vec).all():
            bad = schema.names[int(np.flatnonzero(~np.isfinite(vec))[0])]
            raise ValidationError(f"non-finite value for metric {bad!r} ({upid})")
        out_of_range = (vec < lo) | (vec > hi)
        if out_of_range.any():
            i = int(np.flatnonzero(out_of_range)[0])
            raise ValidationError(
                f"metric {schema.names[i]!r} value {vec[i]} outside valid range "
                f"[{lo[i]}, {hi[i]}] ({upid})"
            )
        values[rows[upid]] = stats.normalize(vec)
    return SampleMatrix(
        values=values,
        channels=1,
        timestamp_s=snapshot.timestamp_s,
        vm_id=snapshot.vm_id,
        label=label,
    )


def replicate_channels(m: SampleMatrix) -> SampleMatrix:
    """Copy the single channel twice more for models expecting depth 3."""
    if m.channels != 1:
        raise ChannelReplicationError(
            f"sample already has {m.channels} channels; replication is not idempotent"
        )
    return SampleMatrix(
        values=np.repeat(m.values[None, :, :], 3, axis=0),
        channels=3,
        timestamp_s=m.timestamp_s,
        vm_id=m.vm_id,
        label=m.label,
    )


def encode_trace_arrays(
    trace: ExperimentTrace,
    schema: FeatureSchema,
    stats: FeatureStats,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Encode a whole trace to ``(X, y, timestamps)`` arrays.

    ``X`` is (n_samples, 120, 45) float32, ``y`` is 0/1 int64 following
    the injection-time labeling rule.
    """
    rows = assign_rows(trace)
    n = len(trace.snapshots)
    X = np.zeros((n, MATRIX_ROWS, N_FEATURES), dtype=np.float32)
    y = np.zeros(n, dtype=np.int64)
    ts = np.zeros(n, dtype=np.float64)
    for i, snap in enumerate(trace.snapshots):
        sample = encode_sample(
            snap, rows, schema, stats, label=label_sample(snap.timestamp_s, trace.injection_time_s)
        )
        X[i] = sample.values
        y[i] = 1 if sample.label == LABEL_MALICIOUS else 0
        ts[i] = snap.timestamp_s
    return X, y, ts


def _largest_remainder_sizes(n: int, ratios: tuple[float, float, float]) -> tuple[int, int, int]:
    exact = [n * r for r in ratios]
    sizes = [int(x) for x in exact]
    # ties on the fractional part go to the later part (validation before
    # test would otherwise starve the test split on symmetric ratios)
    order = sorted(range(3), key=lambda i: (exact[i] - sizes[i], i), reverse=True)
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return tuple(sizes)


@dataclass(eq=False)
class DatasetSplit:
    """Per-experiment 60/20/20 partition with derived flat sample arrays."""

    schema: FeatureSchema
    stats: FeatureStats
    seed: int
    ratios: tuple[float, float, float]
    train_experiments: list[str]
    validation_experiments: list[str]
    test_experiments: list[str]
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    # (experiment name, timestamp) per flat sample, same order as the arrays
    train_index: list[tuple[str, float]] = field(default_factory=list)
    val_index: list[tuple[str, float]] = field(default_factory=list)
    test_index: list[tuple[str, float]] = field(default_factory=list)

    def experiment_partition(self) -> tuple[set[str], set[str], set[str]]:
        return (
            set(self.train_experiments),
            set(self.validation_experiments),
            set(self.test_experiments),
        )


def split_dataset(
    corpus: list[ExperimentTrace],
    ratios=(0.6, 0.2, 0.2),
    seed: int = 0,
    schema: FeatureSchema = DEFAULT_SCHEMA,
) -> DatasetSplit:
    """Partition experiments, learn normalization on the training part,
    and encode everything to flat arrays.

    The training sample order is shuffled with ``seed``; validation and
    test keep chronological (experiment, timestamp) order.
    """
    ratios = check_split_ratios(ratios)
    n = len(corpus)
    if n < 5:
        raise ConfigurationError(f"need at least 5 experiments to split, got {n}")
    names = [t.name for t in corpus]
    if len(set(names)) != n:
        raise ValidationError("experiment names must be unique within a corpus")

    sizes = _largest_remainder_sizes(n, ratios)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    train_idx = sorted(perm[: sizes[0]].tolist())
    val_idx = sorted(perm[sizes[0] : sizes[0] + sizes[1]].tolist())
    test_idx = sorted(perm[sizes[0] + sizes[1] :].tolist())

    stats = FeatureStats.from_traces([corpus[i] for i in train_idx])

    def encode_part(indices):
        xs, ys, index = [], [], []
        for i in indices:
            X, y, ts = encode_trace_arrays(corpus[i], schema, stats)
            xs.append(X)
            ys.append(y)
            index.extend((corpus[i].name, float(t)) for t in ts)
        return np.concatenate(xs), np.concatenate(ys), index

    X_train, y_train, train_index = encode_part(train_idx)
    X_val, y_val, val_index = encode_part(val_idx)
    X_test, y_test, test_index = encode_part(test_idx)

    shuffle = rng.permutation(len(y_train))
    X_train, y_train = X_train[shuffle], y_train[shuffle]
    train_index = [train_index[i] for i in shuffle]

    return DatasetSplit(
        schema=schema,
        stats=stats,
        seed=seed,
        ratios=ratios,
        train_experiments=[names[i] for i in train_idx],
        validation_experiments=[names[i] for i in val_idx],
        test_experiments=[names[i] for i in test_idx],
        X_train=X_train,
        y_train=y_train,
        X_val=X_val,
        y_val=y_val,
        X_test=X_test,
        y_test=y_test,
        train_index=train_index,
        val_index=val_index,
        test_index=test_index,
    )


def ingest_external_trace(path: str | Path) -> ExperimentTrace:
    """Load an externally collected trace from the on-disk format,
    enforcing every trace invariant (snapshot count, sampling grid,
    injection bound, per-snapshot uniqueness)."""
    return read_trace(path)


# ---------------------------------------------------------------------------
# dataset persistence
# ---------------------------------------------------------------------------

_PARTS = (
    ("train", "X_train", "y_train", "train_index"),
    ("validation", "X_val", "y_val", "val_index"),
    ("test", "X_test", "y_test", "test_index"),
)


def save_dataset(split: DatasetSplit, path: str | Path) -> Path:
    """Write the encoded dataset: a manifest plus one tensor/label pair
    per split part.  The manifest is the source of truth for column
    order and normalization."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "schema_version": DATASET_SCHEMA_VERSION,
        "feature_columns": list(split.schema.names),
        "normalization": split.stats.to_json(),
        "seed": split.seed,
        "ratios": list(split.ratios),
        "splits": {
            "train": split.train_experiments,
            "validation": split.validation_experiments,
            "test": split.test_experiments,
        },
        "sample_index": {
            part: [[name, ts] for name, ts in getattr(split, idx_attr)]
            for part, _, _, idx_attr in _PARTS
        },
    }
    (path / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    for part, x_attr, y_attr, _ in _PARTS:
        np.save(path / f"{part}_x.npy", getattr(split, x_attr))
        np.save(path / f"{part}_y.npy", getattr(split, y_attr))
    return path


def load_dataset(path: str | Path) -> DatasetSplit:
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.is_file():
        raise ValidationError(f"{path} is not a dataset directory (missing manifest.json)")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("schema_version") != DATASET_SCHEMA_VERSION:
        raise ValidationError(
            f"dataset schema version {manifest.get('schema_version')!r} not supported"
        )
    if manifest["feature_columns"] != list(DEFAULT_SCHEMA.names):
        raise ValidationError("dataset feature columns do not match the canonical schema")
    arrays = {}
    for part, x_attr, y_attr, _ in _PARTS:
        arrays[x_attr] = np.load(path / f"{part}_x.npy")
        arrays[y_attr] = np.load(path / f"{part}_y.npy")
    index = {
        part: [(name, float(ts)) for name, ts in manifest["sample_index"][part]]
        for part, _, _, _ in _PARTS
    }
    return DatasetSplit(
        schema=DEFAULT_SCHEMA,
        stats=FeatureStats.from_json(manifest["normalization"]),
        seed=manifest["seed"],
        ratios=tuple(manifest["ratios"]),
        train_experiments=manifest["splits"]["train"],
        validation_experiments=manifest["splits"]["validation"],
        test_experiments=manifest["splits"]["test"],
        train_index=index["train"],
        val_index=index["validation"],
        test_index=index["test"],
        **arrays,
    )


class TraceEncoder(BaseEstimator, TransformerMixin):
    """Sklearn-style transformer from experiment traces to sample tensors.

    ``fit`` learns min-max normalization statistics from the given
    (training) traces; ``transform`` encodes traces into a stacked
    ``(n_samples, 120, 45)`` float32 array.  Use :func:`trace_labels`
    for the matching label vector.
    """

    def __init__(self, schema: FeatureSchema = DEFAULT_SCHEMA):
        self.schema = schema

    def fit(self, traces: list[ExperimentTrace], y=None):
        self.stats_ = FeatureStats.from_traces(list(traces))
        return self

    def transform(self, traces: list[ExperimentTrace]) -> np.ndarray:
        if not hasattr(self, "stats_"):
            raise ValidationError("TraceEncoder must be fitted before transform")
        parts = [encode_trace_arrays(t, self.schema, self.stats_)[0] for t in traces]
        return np.concatenate(parts) if parts else np.zeros((0, MATRIX_ROWS, N_FEATURES), np.float32)


def trace_labels(traces: list[ExperimentTrace]) -> np.ndarray:
    """0/1 labels for every snapshot of the given traces, in order."""
    out = []
    for t in traces:
        for snap in t.snapshots:
            out.append(1 if label_sample(snap.timestamp_s, t.injection_time_s) == LABEL_MALICIOUS else 0)
    return np.asarray(out, dtype=np.int64)
