"""Canonical per-process feature schema and process identity.

Every sample row is a 45-value vector describing one process over one
sampling interval.  The column order below is frozen: encoded datasets,
persisted traces and trained models all depend on it.  28 columns are
direct measurements, 11 are first differences against the previous
interval and 6 are second differences, capturing short-term behavioural
change that a single snapshot cannot.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

N_FEATURES = 45

HASH_HEX_LENGTH = 16  # 64-bit content hash, identity only

_INF = math.inf

# name, unit, (valid lo, valid hi). Rates are averaged over the sampling interval.
_BASE_FEATURES = (
    ("cpu_user_pct", "percent", 0.0, 100.0),
    ("cpu_system_pct", "percent", 0.0, 100.0),
    ("cpu_total_pct", "percent", 0.0, 100.0),
    ("mem_rss_bytes", "bytes", 0.0, _INF),
    ("mem_vms_bytes", "bytes", 0.0, _INF),
    ("mem_shared_bytes", "bytes", 0.0, _INF),
    ("mem_pct", "percent", 0.0, 100.0),
    ("minor_faults", "count/s", 0.0, _INF),
    ("major_faults", "count/s", 0.0, _INF),
    ("disk_read_bytes", "bytes/s", 0.0, _INF),
    ("disk_write_bytes", "bytes/s", 0.0, _INF),
    ("disk_read_ops", "ops/s", 0.0, _INF),
    ("disk_write_ops", "ops/s", 0.0, _INF),
    ("io_wait_pct", "percent", 0.0, 100.0),
    ("open_fds", "count", 0.0, _INF),
    ("num_threads", "count", 0.0, _INF),
    ("ctx_switches_voluntary", "count/s", 0.0, _INF),
    ("ctx_switches_involuntary", "count/s", 0.0, _INF),
    ("child_processes", "count", 0.0, _INF),
    ("nice_value", "nice", -20.0, 19.0),
    ("state_running", "flag", 0.0, 1.0),
    ("state_sleeping", "flag", 0.0, 1.0),
    ("state_disk_wait", "flag", 0.0, 1.0),
    ("state_zombie", "flag", 0.0, 1.0),
    ("net_rx_bytes", "bytes/s", 0.0, _INF),
    ("net_tx_bytes", "bytes/s", 0.0, _INF),
    ("net_rx_packets", "packets/s", 0.0, _INF),
    ("net_tx_packets", "packets/s", 0.0, _INF),
)

# heavy hitters tracked as first differences
_DIFF1_FEATURES = (
    "cpu_total_pct",
    "mem_rss_bytes",
    "mem_vms_bytes",
    "minor_faults",
    "disk_read_bytes",
    "disk_write_bytes",
    "net_rx_bytes",
    "net_tx_bytes",
    "open_fds",
    "num_threads",
    "ctx_switches_voluntary",
)

# and the most load-revealing ones also as second differences
_DIFF2_FEATURES = (
    "cpu_total_pct",
    "mem_rss_bytes",
    "disk_read_bytes",
    "disk_write_bytes",
    "net_rx_bytes",
    "net_tx_bytes",
)


@dataclass(frozen=True)
class FeatureDescriptor:
    name: str
    unit: str
    lo: float
    hi: float


def _diff_descriptor(base: FeatureDescriptor, order: int) -> FeatureDescriptor:
    prefix = "d1_" if order == 1 else "d2_"
    if math.isinf(base.hi):
        lo, hi = -_INF, _INF
    else:
        span = (base.hi - base.lo) * order
        lo, hi = -span, span
    return FeatureDescriptor(prefix + base.name, base.unit, lo, hi)


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered, immutable list of the 45 per-process metric columns."""

    descriptors: tuple[FeatureDescriptor, ...]

    def __post_init__(self):
        if len(self.descriptors) != N_FEATURES:
            raise ValidationError(
                f"feature schema must have exactly {N_FEATURES} columns, "
                f"got {len(self.descriptors)}"
            )
        names = [d.name for d in self.descriptors]
        if len(set(names)) != len(names):
            raise ValidationError("feature schema column names must be unique")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.descriptors)

    def index(self, name: str) -> int:
        for i, d in enumerate(self.descriptors):
            if d.name == name:
                return i
        raise KeyError(name)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([d.lo for d in self.descriptors], dtype=np.float64)
        hi = np.array([d.hi for d in self.descriptors], dtype=np.float64)
        return lo, hi

    def __len__(self) -> int:
        return N_FEATURES


def default_schema() -> FeatureSchema:
    base = {name: FeatureDescriptor(name, unit, lo, hi) for name, unit, lo, hi in _BASE_FEATURES}
    columns = list(base.values())
    columns += [_diff_descriptor(base[n], 1) for n in _DIFF1_FEATURES]
    columns += [_diff_descriptor(base[n], 2) for n in _DIFF2_FEATURES]
    return FeatureSchema(tuple(columns))


DEFAULT_SCHEMA = default_schema()

_BASE_NAMES = tuple(name for name, _, _, _ in _BASE_FEATURES)
_D1_IDX = [(_BASE_NAMES.index(n)) for n in _DIFF1_FEATURES]
_D2_IDX = [(_BASE_NAMES.index(n)) for n in _DIFF2_FEATURES]


def base_feature_names() -> tuple[str, ...]:
    return _BASE_NAMES


def assemble_vector(now: np.ndarray, prev1: np.ndarray | None, prev2: np.ndarray | None) -> np.ndarray:
    """Build a full 45-column vector from raw base metrics.

    ``now``/``prev1``/``prev2`` are 28-value base-metric vectors for the
    current and two preceding intervals; a process absent in an earlier
    interval contributes zeros there.
    """
    if prev1 is None:
        prev1 = np.zeros_like(now)
    if prev2 is None:
        prev2 = np.zeros_like(now)
    d1 = now - prev1
    d2 = now - 2.0 * prev1 + prev2
    return np.concatenate([now, d1[_D1_IDX], d2[_D2_IDX]])


def content_hash(seed_text: str) -> str:
    """Stable 64-bit hex digest standing in for a binary content hash."""
    return hashlib.blake2b(seed_text.encode("utf-8"), digest_size=8).hexdigest()


@dataclass(frozen=True, order=True)
class UniqueProcessId:
    """Process identity: pid alone is recyclable, the tuple is not."""

    pid: int
    command: str
    binary_hash: str

    def __post_init__(self):
        if len(self.binary_hash) != HASH_HEX_LENGTH:
            raise ValidationError(
                f"binary_hash must be {HASH_HEX_LENGTH} hex chars, got {self.binary_hash!r}"
            )
        int(self.binary_hash, 16)  # raises ValueError if not hex
