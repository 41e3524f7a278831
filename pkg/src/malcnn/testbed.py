"""Synthetic data-collection testbed for labeled experiment traces.

Replays the collection protocol of a 3-tier auto-scaled web service: an
ON/OFF Pareto traffic source drives a CPU-threshold autoscaler, a target
web-tier VM runs a fixed service skeleton plus load-dependent worker
processes, and a malware behaviour profile is injected partway through
the infected phase.  Every run emits one snapshot of per-process metrics
per sampling interval; with the defaults (1 h, 10 s) that is 360
snapshots, half clean and half infected.

All randomness flows through one seeded generator per experiment, so a
trace is a pure function of its config.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import CapacityError, ConfigurationError, TraceParseError, ValidationError
from .features import (
    DEFAULT_SCHEMA,
    UniqueProcessId,
    assemble_vector,
    base_feature_names,
    content_hash,
)
from .validation import MATRIX_ROWS

TRACE_SCHEMA_VERSION = 1

# service-model constants for the simulated web tier
INSTANCE_CAPACITY_RPS = 40.0   # request rate one instance handles at 100% CPU
WORKER_CAPACITY_RPS = 5.0      # request rate one worker process handles
MIN_WORKERS, MAX_WORKERS = 2, 24
TOTAL_MEM_BYTES = 4 * 1024**3

MALWARE_PID_BASE = 6100

MALWARE_FAMILIES = ("cpu-spinner", "io-flooder", "stealth", "dormant-bursty")


@dataclass(frozen=True)
class TrafficModel:
    """ON/OFF Pareto traffic source parameters."""

    mean_on_ms: float = 500.0
    mean_off_ms: float = 500.0
    pareto_shape: float = 1.5
    peak_rate: float = 200.0  # requests/second while ON

    def __post_init__(self):
        if self.pareto_shape <= 1.0:
            raise ConfigurationError(
                f"pareto_shape must be > 1 for a finite mean, got {self.pareto_shape}"
            )
        for name in ("mean_on_ms", "mean_off_ms", "peak_rate"):
            if getattr(self, name) <= 0.0:
                raise ConfigurationError(f"{name} must be positive")


@dataclass(frozen=True)
class AutoScalePolicy:
    """Scale out above the upper CPU threshold, in below the lower one."""

    scale_out_threshold: float = 0.70
    scale_in_threshold: float = 0.30
    min_instances: int = 2
    max_instances: int = 10

    def __post_init__(self):
        if not 0.0 < self.scale_in_threshold < self.scale_out_threshold < 1.0:
            raise ConfigurationError(
                "thresholds must satisfy 0 < scale_in < scale_out < 1, got "
                f"in={self.scale_in_threshold} out={self.scale_out_threshold}"
            )
        if not 1 <= self.min_instances <= self.max_instances:
            raise ConfigurationError(
                f"need 1 <= min_instances <= max_instances, got "
                f"{self.min_instances}..{self.max_instances}"
            )


def step_autoscaler(avg_cpu: float, current: int, policy: AutoScalePolicy) -> int:
    """One scaling decision: +1 above the out-threshold, -1 below the
    in-threshold, clamped to the instance bounds."""
    if not 0.0 <= avg_cpu <= 1.0:
        raise ValidationError(f"avg_cpu must be a fraction in [0, 1], got {avg_cpu}")
    if not policy.min_instances <= current <= policy.max_instances:
        raise ValidationError(
            f"current instance count {current} outside "
            f"[{policy.min_instances}, {policy.max_instances}]"
        )
    if avg_cpu > policy.scale_out_threshold:
        current += 1
    elif avg_cpu < policy.scale_in_threshold:
        current -= 1
    return min(max(current, policy.min_instances), policy.max_instances)


def pareto_scale(mean: float, shape: float) -> float:
    """Scale x_m such that a Pareto(shape, x_m) has the requested mean."""
    if shape <= 1.0:
        raise ConfigurationError(f"pareto_shape must be > 1 for a finite mean, got {shape}")
    return mean * (shape - 1.0) / shape


def sample_pareto_onoff(
    state: str, traffic: TrafficModel, rng: np.random.Generator
) -> tuple[float, float]:
    """Draw the duration of the next ``"on"``/``"off"`` episode (ms) and
    the request rate emitted during it."""
    if state not in ("on", "off"):
        raise ValidationError(f"state must be 'on' or 'off', got {state!r}")
    mean = traffic.mean_on_ms if state == "on" else traffic.mean_off_ms
    xm = pareto_scale(mean, traffic.pareto_shape)
    u = 1.0 - rng.random()  # in (0, 1]: avoids the u=0 singularity
    duration = xm * u ** (-1.0 / traffic.pareto_shape)
    load = traffic.peak_rate if state == "on" else 0.0
    return duration, load


@dataclass(frozen=True)
class ProcessFootprint:
    """Behaviour of one malicious process, relative to an idle baseline.

    ``pattern`` shapes activity over time since injection: ``steady``
    runs flat out, ``ramp`` builds up over ``ramp_s`` seconds,
    ``burst`` alternates active/dormant with period ``period_s`` and
    active fraction ``duty``.
    """

    command: str
    cpu_pct: float = 0.0
    mem_rss_bytes: float = 0.0
    disk_read_bps: float = 0.0
    disk_write_bps: float = 0.0
    net_rx_bps: float = 0.0
    net_tx_bps: float = 0.0
    pattern: str = "steady"
    period_s: float = 120.0
    duty: float = 1.0
    ramp_s: float = 300.0

    def __post_init__(self):
        if self.pattern not in ("steady", "ramp", "burst"):
            raise ConfigurationError(f"unknown footprint pattern {self.pattern!r}")
        if not 0.0 <= self.cpu_pct <= 100.0:
            raise ConfigurationError(f"cpu_pct must be in [0, 100], got {self.cpu_pct}")
        for name in ("mem_rss_bytes", "disk_read_bps", "disk_write_bps", "net_rx_bps", "net_tx_bps"):
            if getattr(self, name) < 0.0:
                raise ConfigurationError(f"{name} must be non-negative")
        if not 0.0 < self.duty <= 1.0:
            raise ConfigurationError(f"duty must be in (0, 1], got {self.duty}")
        if self.period_s <= 0.0 or self.ramp_s <= 0.0:
            raise ConfigurationError("period_s and ramp_s must be positive")

    def activity(self, t_since_injection: float) -> float:
        if self.pattern == "steady":
            return 1.0
        if self.pattern == "ramp":
            return min(1.0, t_since_injection / self.ramp_s)
        phase = t_since_injection % self.period_s
        return 1.0 if phase < self.duty * self.period_s else 0.02


@dataclass(frozen=True)
class MalwareProfile:
    """A named bundle of malicious process footprints."""

    name: str
    family: str
    footprint: tuple[ProcessFootprint, ...]
    spawn_count: int

    def __post_init__(self):
        if self.family not in MALWARE_FAMILIES:
            raise ConfigurationError(
                f"unknown malware family {self.family!r}; expected one of {MALWARE_FAMILIES}"
            )
        if self.spawn_count < 1:
            raise ConfigurationError("spawn_count must be >= 1")
        if len(self.footprint) != self.spawn_count:
            raise ConfigurationError(
                f"profile {self.name!r}: {len(self.footprint)} footprints for "
                f"spawn_count {self.spawn_count}"
            )

    def commands(self) -> frozenset[str]:
        return frozenset(fp.command for fp in self.footprint)


def profile_variants(
    n: int, seed: int, families: tuple[str, ...] = MALWARE_FAMILIES
) -> list[MalwareProfile]:
    """Jittered malware profiles cycling through the requested families.

    Stands in for a library of real samples: each variant differs in
    process count, intensity and temporal pattern so a detector has to
    generalize across behaviours rather than memorize one signature.
    """
    if n < 1:
        raise ConfigurationError("need at least one profile")
    for fam in families:
        if fam not in MALWARE_FAMILIES:
            raise ConfigurationError(f"unknown malware family {fam!r}")
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        family = families[i % len(families)]
        name = f"{family}-{i:03d}"
        if family == "cpu-spinner":
            spawn = int(rng.integers(1, 4))
            cmd = rng.choice(["cpuminer", "xmrig-worker", "hashcruncher"])
            pattern = "ramp" if rng.random() < 0.3 else "steady"
            fps = tuple(
                ProcessFootprint(
                    command=f"{cmd}-{j}",
                    cpu_pct=float(rng.uniform(60.0, 95.0)),
                    mem_rss_bytes=float(rng.uniform(8, 64) * 2**20),
                    net_tx_bps=float(rng.uniform(1e3, 2e4)),
                    pattern=pattern,
                    ramp_s=float(rng.uniform(60.0, 600.0)),
                )
                for j in range(spawn)
            )
        elif family == "io-flooder":
            spawn = int(rng.integers(1, 3))
            cmd = rng.choice(["fsflood", "scratchd", "ddwriter"])
            fps = tuple(
                ProcessFootprint(
                    command=f"{cmd}-{j}",
                    cpu_pct=float(rng.uniform(5.0, 20.0)),
                    mem_rss_bytes=float(rng.uniform(16, 128) * 2**20),
                    disk_read_bps=float(rng.uniform(5, 40) * 2**20),
                    disk_write_bps=float(rng.uniform(10, 80) * 2**20),
                )
                for j in range(spawn)
            )
        elif family == "stealth":
            spawn = 1
            cmd = rng.choice(["kworker/u9:1", ".sshd", "systemd-helper"])
            fps = (
                ProcessFootprint(
                    command=str(cmd),
                    cpu_pct=float(rng.uniform(0.4, 2.0)),
                    mem_rss_bytes=float(rng.uniform(2, 12) * 2**20),
                    net_tx_bps=float(rng.uniform(500.0, 5e3)),
                ),
            )
        else:  # dormant-bursty
            spawn = int(rng.integers(1, 3))
            cmd = rng.choice(["updater", "telemetryd", "syncagent"])
            fps = tuple(
                ProcessFootprint(
                    command=f"{cmd}-{j}",
                    cpu_pct=float(rng.uniform(40.0, 85.0)),
                    mem_rss_bytes=float(rng.uniform(8, 48) * 2**20),
                    net_tx_bps=float(rng.uniform(1e4, 1e6)),
                    pattern="burst",
                    period_s=float(rng.uniform(60.0, 300.0)),
                    duty=float(rng.uniform(0.15, 0.5)),
                )
                for j in range(spawn)
            )
        out.append(MalwareProfile(name=name, family=family, footprint=fps, spawn_count=len(fps)))
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """One data-collection run: timing, traffic, scaling policy, malware."""

    malware: MalwareProfile
    total_duration_s: int = 3600
    clean_phase_s: int = 1800
    sample_interval_s: int = 10
    traffic: TrafficModel = field(default_factory=TrafficModel)
    policy: AutoScalePolicy = field(default_factory=AutoScalePolicy)
    injection_window: tuple[float, float] = (0.0, 900.0)  # offsets into the infected phase
    rng_seed: int = 0

    def __post_init__(self):
        if self.sample_interval_s <= 0:
            raise ConfigurationError("sample_interval_s must be positive")
        if not 0 < self.clean_phase_s < self.total_duration_s:
            raise ConfigurationError(
                f"need 0 < clean_phase_s < total_duration_s, got "
                f"{self.clean_phase_s}/{self.total_duration_s}"
            )
        if self.total_duration_s % self.sample_interval_s != 0:
            raise ConfigurationError(
                f"total_duration_s ({self.total_duration_s}) must be a multiple of "
                f"sample_interval_s ({self.sample_interval_s})"
            )
        lo, hi = self.injection_window
        if not 0.0 <= lo <= hi <= self.total_duration_s - self.clean_phase_s:
            raise ConfigurationError(
                f"injection_window offsets {self.injection_window} must lie inside the "
                f"infected phase [0, {self.total_duration_s - self.clean_phase_s}]"
            )

    @property
    def n_samples(self) -> int:
        return self.total_duration_s // self.sample_interval_s


@dataclass(frozen=True, eq=False)
class ProcessSnapshot:
    """All active processes of one VM at one sampling instant."""

    timestamp_s: float
    vm_id: str
    processes: tuple[tuple[UniqueProcessId, np.ndarray], ...]

    def __post_init__(self):
        seen = set()
        for upid, vec in self.processes:
            if upid in seen:
                raise ValidationError(
                    f"process {upid} appears twice in snapshot t={self.timestamp_s}"
                )
            seen.add(upid)
            if vec.shape != (len(DEFAULT_SCHEMA),):
                raise ValidationError(
                    f"feature vector for {upid} has shape {vec.shape}, expected "
                    f"({len(DEFAULT_SCHEMA)},)"
                )


@dataclass(frozen=True, eq=False)
class ExperimentTrace:
    """360 snapshots of the target VM plus the ground-truth injection time."""

    config: ExperimentConfig
    snapshots: tuple[ProcessSnapshot, ...]
    injection_time_s: float
    name: str = "exp-000"
    vm_id: str = "web-1"

    def __post_init__(self):
        cfg = self.config
        if len(self.snapshots) != cfg.n_samples:
            raise ValidationError(
                f"trace {self.name!r} has {len(self.snapshots)} snapshots, expected "
                f"{cfg.n_samples}"
            )
        if self.injection_time_s < cfg.clean_phase_s:
            raise ValidationError(
                f"injection_time_s {self.injection_time_s} precedes the infected phase "
                f"({cfg.clean_phase_s} s)"
            )
        malicious_cmds = cfg.malware.commands()
        for i, snap in enumerate(self.snapshots):
            expected_ts = float(i * cfg.sample_interval_s)
            if snap.timestamp_s != expected_ts:
                raise ValidationError(
                    f"snapshot {i} has timestamp {snap.timestamp_s}, expected {expected_ts}"
                )
            if snap.timestamp_s < self.injection_time_s:
                for upid, _ in snap.processes:
                    if upid.command in malicious_cmds:
                        raise ValidationError(
                            f"malicious process {upid.command!r} present at "
                            f"t={snap.timestamp_s} before injection at {self.injection_time_s}"
                        )

    def unique_processes(self) -> list[UniqueProcessId]:
        seen: dict[UniqueProcessId, None] = {}
        for snap in self.snapshots:
            for upid, _ in snap.processes:
                seen.setdefault(upid)
        return list(seen)


def traces_equal(a: ExperimentTrace, b: ExperimentTrace) -> bool:
    """Value equality for traces (dataclass ``==`` would choke on the arrays)."""
    if (a.config, a.injection_time_s, a.name, a.vm_id) != (
        b.config,
        b.injection_time_s,
        b.name,
        b.vm_id,
    ):
        return False
    if len(a.snapshots) != len(b.snapshots):
        return False
    for sa, sb in zip(a.snapshots, b.snapshots):
        if sa.timestamp_s != sb.timestamp_s or len(sa.processes) != len(sb.processes):
            return False
        for (ua, va), (ub, vb) in zip(sa.processes, sb.processes):
            if ua != ub or not np.array_equal(va, vb):
                return False
    return True


# ---------------------------------------------------------------------------
# benign population model
# ---------------------------------------------------------------------------

_IDX = {name: i for i, name in enumerate(base_feature_names())}


def _metric_vector(
    rng,
    *,
    cpu=0.0,
    sys_frac=0.3,
    mem=8 * 2**20,
    disk_read=0.0,
    disk_write=0.0,
    net_rx=0.0,
    net_tx=0.0,
    fds=16.0,
    threads=1.0,
    children=0.0,
    nice=0.0,
    jitter=0.08,
) -> np.ndarray:
    """One 28-value base-metric vector with correlated secondary metrics."""
    v = np.zeros(len(_IDX))
    j = lambda x: max(0.0, x * (1.0 + jitter * rng.standard_normal())) if x else 0.0
    cpu = min(100.0, j(cpu))
    mem = j(mem)
    disk_read, disk_write = j(disk_read), j(disk_write)
    net_rx, net_tx = j(net_rx), j(net_tx)
    v[_IDX["cpu_total_pct"]] = cpu
    v[_IDX["cpu_user_pct"]] = cpu * (1.0 - sys_frac)
    v[_IDX["cpu_system_pct"]] = cpu * sys_frac
    v[_IDX["mem_rss_bytes"]] = mem
    v[_IDX["mem_vms_bytes"]] = mem * 2.2
    v[_IDX["mem_shared_bytes"]] = mem * 0.15
    v[_IDX["mem_pct"]] = min(100.0, 100.0 * mem / TOTAL_MEM_BYTES)
    v[_IDX["minor_faults"]] = j(5.0 + cpu * 4.0)
    v[_IDX["major_faults"]] = j(0.02 * (disk_read > 0))
    v[_IDX["disk_read_bytes"]] = disk_read
    v[_IDX["disk_write_bytes"]] = disk_write
    v[_IDX["disk_read_ops"]] = disk_read / 16384.0
    v[_IDX["disk_write_ops"]] = disk_write / 16384.0
    v[_IDX["io_wait_pct"]] = min(100.0, (disk_read + disk_write) / (4 * 2**20))
    v[_IDX["open_fds"]] = j(fds)
    v[_IDX["num_threads"]] = max(1.0, j(threads))
    v[_IDX["ctx_switches_voluntary"]] = j(20.0 + cpu * 15.0)
    v[_IDX["ctx_switches_involuntary"]] = j(cpu * 5.0)
    v[_IDX["child_processes"]] = children
    v[_IDX["nice_value"]] = nice
    running = 1.0 if cpu > 15.0 else 0.0
    disk_wait = 1.0 if v[_IDX["io_wait_pct"]] > 20.0 and not running else 0.0
    v[_IDX["state_running"]] = running
    v[_IDX["state_disk_wait"]] = disk_wait
    v[_IDX["state_sleeping"]] = 1.0 - max(running, disk_wait)
    v[_IDX["net_rx_bytes"]] = net_rx
    v[_IDX["net_tx_bytes"]] = net_tx
    v[_IDX["net_rx_packets"]] = net_rx / 900.0
    v[_IDX["net_tx_packets"]] = net_tx / 900.0
    return v


def _skeleton_processes() -> list[tuple[UniqueProcessId, dict]]:
    """Always-on service skeleton of the target web-tier VM.

    The dict parameters feed ``_metric_vector``; ``load_cpu``/``load_net``
    scale with VM utilization at snapshot time.
    """

    def proc(pid, command, **params):
        return (UniqueProcessId(pid, command, content_hash(command)), params)

    return [
        proc(1, "systemd", cpu=0.2, mem=11 * 2**20, fds=140, threads=1, children=9),
        proc(2, "kthreadd", cpu=0.05, mem=0.0, fds=0, threads=1, nice=-20.0),
        proc(35, "kworker/u4:2", cpu=0.3, mem=0.0, fds=0, load_cpu=2.0, nice=-20.0),
        proc(60, "systemd-journald", cpu=0.3, mem=14 * 2**20, disk_write=30e3, fds=36),
        proc(88, "sshd", cpu=0.05, mem=6 * 2**20, net_rx=200.0, net_tx=300.0, fds=8),
        proc(90, "cron", cpu=0.05, mem=3 * 2**20, fds=6),
        proc(92, "rsyslogd", cpu=0.2, mem=5 * 2**20, disk_write=12e3, fds=12, threads=4),
        proc(95, "metrics-agent", cpu=1.0, mem=28 * 2**20, net_tx=4e3, fds=22, threads=6),
        proc(100, "nginx: master", cpu=0.4, mem=9 * 2**20, fds=64, children=MIN_WORKERS),
        proc(210, "app-gateway", cpu=1.5, mem=48 * 2**20, load_cpu=12.0,
             load_net=40e3, fds=80, threads=8),
    ]


def _simulate_load(config: ExperimentConfig, rng) -> tuple[np.ndarray, np.ndarray]:
    """Per-interval offered load (req/s) and web-tier instance counts."""
    interval_ms = config.sample_interval_s * 1000.0
    total_ms = config.total_duration_s * 1000.0
    on_ms = np.zeros(config.n_samples)
    t, state = 0.0, "on"
    while t < total_ms:
        duration, load = sample_pareto_onoff(state, config.traffic, rng)
        if load > 0.0:
            # spread this ON episode over the sampling buckets it covers
            start, end = t, min(t + duration, total_ms)
            b = int(start // interval_ms)
            while start < end:
                bucket_end = (b + 1) * interval_ms
                on_ms[b] += min(end, bucket_end) - start
                start, b = bucket_end, b + 1
        t += duration
        state = "off" if state == "on" else "on"
    load_rps = config.traffic.peak_rate * on_ms / interval_ms

    instances = np.zeros(config.n_samples, dtype=np.int64)
    current = config.policy.min_instances
    for i in range(config.n_samples):
        instances[i] = current
        util = min(1.0, load_rps[i] / (current * INSTANCE_CAPACITY_RPS))
        avg_cpu = min(1.0, max(0.0, util * (1.0 + 0.05 * rng.standard_normal())))
        current = step_autoscaler(avg_cpu, current, config.policy)
    return load_rps, instances


def simulate_experiment(
    config: ExperimentConfig, name: str = "exp-000", vm_id: str = "web-1"
) -> ExperimentTrace:
    """Run one experiment deterministically from ``config.rng_seed``."""
    rng = np.random.default_rng(config.rng_seed)
    lo, hi = config.injection_window
    injection_time = float(config.clean_phase_s + rng.uniform(lo, hi))

    skeleton = _skeleton_processes()
    workers = [
        (UniqueProcessId(300 + i, "nginx: worker", content_hash("nginx: worker")), i)
        for i in range(MAX_WORKERS)
    ]
    cron_period = 300
    cron_jobs = {
        float(k * cron_period): UniqueProcessId(
            900 + k,
            "logrotate" if k % 2 else "apt-daily",
            content_hash(f"cronjob-{'logrotate' if k % 2 else 'apt-daily'}"),
        )
        for k in range(1, config.total_duration_s // cron_period)
    }
    malware_procs = [
        (
            UniqueProcessId(
                MALWARE_PID_BASE + j,
                fp.command,
                content_hash(f"{config.malware.name}/{fp.command}/{j}"),
            ),
            fp,
        )
        for j, fp in enumerate(config.malware.footprint)
    ]

    n_unique = len(skeleton) + len(workers) + len(cron_jobs) + len(malware_procs)
    if n_unique > MATRIX_ROWS:
        overflow = malware_procs[-1][0] if malware_procs else workers[-1][0]
        raise CapacityError(
            f"experiment would produce {n_unique} unique processes "
            f"(> {MATRIX_ROWS}); first overflowing process: {overflow}"
        )

    load_rps, instances = _simulate_load(config, rng)

    prev1: dict[UniqueProcessId, np.ndarray] = {}
    snapshots = []
    prev2: dict[UniqueProcessId, np.ndarray] = {}
    for i in range(config.n_samples):
        ts = float(i * config.sample_interval_s)
        vm_load = load_rps[i] / instances[i]
        util = min(1.0, vm_load / INSTANCE_CAPACITY_RPS)
        n_workers = min(MAX_WORKERS, max(MIN_WORKERS, math.ceil(vm_load / WORKER_CAPACITY_RPS)))

        active: list[tuple[UniqueProcessId, np.ndarray]] = []
        for upid, params in skeleton:
            p = dict(params)
            cpu = p.pop("cpu", 0.0) + p.pop("load_cpu", 0.0) * util
            net_extra = p.pop("load_net", 0.0) * util
            p["net_rx"] = p.get("net_rx", 0.0) + net_extra
            p["net_tx"] = p.get("net_tx", 0.0) + net_extra
            if upid.command == "nginx: master":
                p["children"] = float(n_workers)
            active.append((upid, _metric_vector(rng, cpu=cpu, **p)))

        share = vm_load / n_workers
        for upid, w in workers[:n_workers]:
            cpu = 1.5 + 45.0 * share / WORKER_CAPACITY_RPS
            active.append(
                (
                    upid,
                    _metric_vector(
                        rng,
                        cpu=cpu,
                        mem=16 * 2**20,
                        net_rx=share * 2200.0,
                        net_tx=share * 9200.0,
                        disk_read=share * 5e3,
                        fds=24,
                    ),
                )
            )

        if ts in cron_jobs:
            active.append(
                (
                    cron_jobs[ts],
                    _metric_vector(rng, cpu=4.0, mem=6 * 2**20, disk_read=2e5, disk_write=5e4, fds=9),
                )
            )

        if ts >= injection_time:
            t_since = ts - injection_time
            for upid, fp in malware_procs:
                act = fp.activity(t_since)
                active.append(
                    (
                        upid,
                        _metric_vector(
                            rng,
                            cpu=fp.cpu_pct * act,
                            mem=fp.mem_rss_bytes * (0.5 + 0.5 * act),
                            disk_read=fp.disk_read_bps * act,
                            disk_write=fp.disk_write_bps * act,
                            net_rx=fp.net_rx_bps * act,
                            net_tx=fp.net_tx_bps * act,
                            fds=8,
                            threads=2,
                            jitter=0.05,
                        ),
                    )
                )

        active.sort(key=lambda item: item[0])
        rows = tuple(
            (upid, assemble_vector(base, prev1.get(upid), prev2.get(upid)))
            for upid, base in active
        )
        snapshots.append(ProcessSnapshot(timestamp_s=ts, vm_id=vm_id, processes=rows))
        prev2 = prev1
        prev1 = {upid: base for upid, base in active}

    return ExperimentTrace(
        config=config,
        snapshots=tuple(snapshots),
        injection_time_s=injection_time,
        name=name,
        vm_id=vm_id,
    )


def generate_corpus(
    n_experiments: int,
    profiles: list[MalwareProfile],
    base_seed: int,
    template: ExperimentConfig | None = None,
) -> list[ExperimentTrace]:
    """Simulate ``n_experiments`` runs, one malware profile per run.

    Per-experiment seeds are derived from ``base_seed`` so the corpus is
    a pure function of (template, profiles, base_seed).
    """
    if not profiles:
        raise ConfigurationError("profile list is empty")
    if n_experiments < 1:
        raise ConfigurationError("n_experiments must be >= 1")
    if n_experiments > len(profiles):
        raise ConfigurationError(
            f"{n_experiments} experiments requested but only {len(profiles)} profiles given"
        )
    seeds = np.random.SeedSequence(base_seed).generate_state(n_experiments, dtype=np.uint64)
    traces = []
    for i in range(n_experiments):
        if template is None:
            cfg = ExperimentConfig(malware=profiles[i], rng_seed=int(seeds[i]))
        else:
            cfg = replace(template, malware=profiles[i], rng_seed=int(seeds[i]))
        traces.append(simulate_experiment(cfg, name=f"exp-{i:03d}"))
    return traces


# ---------------------------------------------------------------------------
# trace persistence
# ---------------------------------------------------------------------------

_CSV_PREFIX = ("timestamp_s", "pid", "command", "binary_hash")


def _fmt(x: float) -> str:
    return repr(float(x))


def _profile_to_json(profile: MalwareProfile) -> dict:
    return {
        "name": profile.name,
        "family": profile.family,
        "spawn_count": profile.spawn_count,
        "footprint": [
            {
                "command": fp.command,
                "cpu_pct": fp.cpu_pct,
                "mem_rss_bytes": fp.mem_rss_bytes,
                "disk_read_bps": fp.disk_read_bps,
                "disk_write_bps": fp.disk_write_bps,
                "net_rx_bps": fp.net_rx_bps,
                "net_tx_bps": fp.net_tx_bps,
                "pattern": fp.pattern,
                "period_s": fp.period_s,
                "duty": fp.duty,
                "ramp_s": fp.ramp_s,
            }
            for fp in profile.footprint
        ],
    }


def _profile_from_json(data: dict) -> MalwareProfile:
    return MalwareProfile(
        name=data["name"],
        family=data["family"],
        spawn_count=data["spawn_count"],
        footprint=tuple(ProcessFootprint(**fp) for fp in data["footprint"]),
    )


def write_trace(trace: ExperimentTrace, path: str | Path) -> Path:
    """Persist one experiment as ``meta.json`` + ``snapshots.csv``.

    The writer is byte-deterministic: write -> read -> write yields
    identical files.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    cfg = trace.config
    meta = {
        "schema_version": TRACE_SCHEMA_VERSION,
        "name": trace.name,
        "vm_id": trace.vm_id,
        "injection_time_s": trace.injection_time_s,
        "profile_name": cfg.malware.name,
        "n_snapshots": len(trace.snapshots),
        "n_rows": sum(len(s.processes) for s in trace.snapshots),
        "feature_columns": list(DEFAULT_SCHEMA.names),
        "config": {
            "total_duration_s": cfg.total_duration_s,
            "clean_phase_s": cfg.clean_phase_s,
            "sample_interval_s": cfg.sample_interval_s,
            "rng_seed": cfg.rng_seed,
            "injection_window": list(cfg.injection_window),
            "traffic": {
                "mean_on_ms": cfg.traffic.mean_on_ms,
                "mean_off_ms": cfg.traffic.mean_off_ms,
                "pareto_shape": cfg.traffic.pareto_shape,
                "peak_rate": cfg.traffic.peak_rate,
            },
            "policy": {
                "scale_out_threshold": cfg.policy.scale_out_threshold,
                "scale_in_threshold": cfg.policy.scale_in_threshold,
                "min_instances": cfg.policy.min_instances,
                "max_instances": cfg.policy.max_instances,
            },
            "malware": _profile_to_json(cfg.malware),
        },
    }
    (path / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    with open(path / "snapshots.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(_CSV_PREFIX) + list(DEFAULT_SCHEMA.names))
        for snap in trace.snapshots:
            for upid, vec in snap.processes:
                writer.writerow(
                    [_fmt(snap.timestamp_s), str(upid.pid), upid.command, upid.binary_hash]
                    + [_fmt(x) for x in vec]
                )
    return path


def read_trace(path: str | Path) -> ExperimentTrace:
    """Load a persisted experiment, validating format and invariants."""
    path = Path(path)
    meta_path, csv_path = path / "meta.json", path / "snapshots.csv"
    if not meta_path.is_file() or not csv_path.is_file():
        raise TraceParseError(f"{path} is not a trace directory (missing meta.json/snapshots.csv)")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise TraceParseError(f"meta.json is not valid JSON: {exc}") from exc
    version = meta.get("schema_version")
    if version != TRACE_SCHEMA_VERSION:
        raise TraceParseError(
            f"trace schema version {version!r} not supported (expected {TRACE_SCHEMA_VERSION})"
        )
    expected_cols = list(DEFAULT_SCHEMA.names)
    if meta.get("feature_columns") != expected_cols:
        got = meta.get("feature_columns") or []
        missing = [c for c in expected_cols if c not in got]
        extra = [c for c in got if c not in expected_cols]
        raise TraceParseError(
            f"feature columns do not match the canonical schema "
            f"(missing: {missing or 'none'}, unexpected: {extra or 'none'})"
        )
    cfg_m = meta["config"]
    config = ExperimentConfig(
        malware=_profile_from_json(cfg_m["malware"]),
        total_duration_s=cfg_m["total_duration_s"],
        clean_phase_s=cfg_m["clean_phase_s"],
        sample_interval_s=cfg_m["sample_interval_s"],
        traffic=TrafficModel(**cfg_m["traffic"]),
        policy=AutoScalePolicy(**cfg_m["policy"]),
        injection_window=tuple(cfg_m["injection_window"]),
        rng_seed=cfg_m["rng_seed"],
    )

    n_cols = len(_CSV_PREFIX) + len(DEFAULT_SCHEMA)
    groups: dict[float, list[tuple[UniqueProcessId, np.ndarray]]] = {}
    seen: set[tuple[float, UniqueProcessId]] = set()
    last_ts = -math.inf
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceParseError("snapshots.csv is empty", line=1) from None
        if header != list(_CSV_PREFIX) + expected_cols:
            missing = [c for c in list(_CSV_PREFIX) + expected_cols if c not in header]
            raise TraceParseError(
                f"csv header does not match the schema (missing columns: {missing or 'none'})",
                line=1,
            )
        for lineno, row in enumerate(reader, start=2):
            if len(row) != n_cols:
                raise TraceParseError(f"expected {n_cols} columns, got {len(row)}", line=lineno)
            try:
                ts = float(row[0])
                pid = int(row[1])
                upid = UniqueProcessId(pid, row[2], row[3])
                vec = np.array([float(x) for x in row[4:]], dtype=np.float64)
            except (ValueError, ValidationError) as exc:
                raise TraceParseError(str(exc), line=lineno) from exc
            if ts % config.sample_interval_s != 0.0 or not 0.0 <= ts < config.total_duration_s:
                raise TraceParseError(
                    f"timestamp {ts} not on the {config.sample_interval_s} s sampling grid",
                    line=lineno,
                )
            if ts < last_ts:
                raise TraceParseError(f"timestamp {ts} out of order", line=lineno)
            if (ts, upid) in seen:
                raise TraceParseError(f"duplicate process {upid} at t={ts}", line=lineno)
            seen.add((ts, upid))
            groups.setdefault(ts, []).append((upid, vec))
            last_ts = ts

    n_rows = sum(len(g) for g in groups.values())
    if n_rows != meta.get("n_rows"):
        raise TraceParseError(
            f"snapshots.csv has {n_rows} process rows but meta.json declares "
            f"{meta.get('n_rows')} (truncated or padded file)"
        )
    if meta.get("n_snapshots") != config.n_samples:
        raise TraceParseError(
            f"meta.json declares {meta.get('n_snapshots')} snapshots but the config "
            f"requires {config.n_samples}"
        )

    snapshots = tuple(
        ProcessSnapshot(
            timestamp_s=float(i * config.sample_interval_s),
            vm_id=meta["vm_id"],
            processes=tuple(groups.get(float(i * config.sample_interval_s), [])),
        )
        for i in range(config.n_samples)
    )
    try:
        return ExperimentTrace(
            config=config,
            snapshots=snapshots,
            injection_time_s=meta["injection_time_s"],
            name=meta["name"],
            vm_id=meta["vm_id"],
        )
    except ValidationError as exc:
        raise TraceParseError(str(exc)) from exc
