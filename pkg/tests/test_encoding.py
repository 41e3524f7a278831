import numpy as np
import pytest

from malcnn import (
    CapacityError,
    ChannelReplicationError,
    ConfigurationError,
    DEFAULT_SCHEMA,
    FeatureStats,
    SampleMatrix,
    TraceEncoder,
    UniqueProcessId,
    ValidationError,
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
    write_trace,
)
from malcnn.encoding import _largest_remainder_sizes
from malcnn.features import content_hash
from malcnn.testbed import ProcessSnapshot

from conftest import short_template


def _upid(pid, command="proc"):
    return UniqueProcessId(pid, command, content_hash(f"{command}-{pid}"))


def _snapshot(ts, upids, value=1.0):
    vecs = tuple((u, np.full(45, 0.0) + value * 0) for u in upids)  # zeros, in range
    return ProcessSnapshot(timestamp_s=ts, vm_id="vm", processes=vecs)


class TestLabelRule:
    def test_before_injection_is_benign(self):
        assert label_sample(1790.0, 1800.0) == "benign"

    def test_boundary_is_malicious(self):
        assert label_sample(1800.0, 1800.0) == "malicious"

    def test_late_sample_is_malicious(self):
        assert label_sample(3590.0, 2400.0) == "malicious"

    def test_trace_labels_match_rule(self, corpus6):
        trace = corpus6[0]
        y = trace_labels([trace])
        for snap, label in zip(trace.snapshots, y):
            assert label == (1 if snap.timestamp_s >= trace.injection_time_s else 0)


class TestRowAssignment:
    def test_first_appearance_order(self, corpus6):
        trace = corpus6[0]
        rows = assign_rows(trace)
        first_seen = {}
        for snap in trace.snapshots:
            for u, _ in snap.processes:
                first_seen.setdefault(u, snap.timestamp_s)
        ordered = sorted(rows, key=rows.get)
        times = [first_seen[u] for u in ordered]
        assert times == sorted(times)

    def test_rows_stable_across_samples(self, corpus6):
        # the same map serves every snapshot, so re-deriving it per prefix
        # of the trace must give consistent indices for seen processes
        trace = corpus6[1]
        rows = assign_rows(trace)
        assert sorted(rows.values()) == list(range(len(rows)))

    def test_tie_break_deterministic(self, corpus6):
        trace = corpus6[2]
        assert assign_rows(trace) == assign_rows(trace)

    def test_simultaneous_appearance_sorted_by_identity(self):
        a, b = _upid(5, "bbb"), _upid(3, "aaa")
        snaps = tuple(
            _snapshot(float(t * 10), [a, b]) for t in range(60)
        )
        trace_cfg = short_template(__import__("malcnn").profile_variants(1, seed=0)[0])
        from malcnn import ExperimentTrace

        trace = ExperimentTrace(config=trace_cfg, snapshots=snaps, injection_time_s=300.0)
        rows = assign_rows(trace)
        assert rows[b] == 0 and rows[a] == 1  # pid 3 before pid 5

    def test_capacity_error_names_overflow(self):
        upids = [_upid(i) for i in range(121)]
        snaps = tuple(_snapshot(float(t * 10), upids) for t in range(60))
        from malcnn import ExperimentTrace

        cfg = short_template(__import__("malcnn").profile_variants(1, seed=0)[0])
        trace = ExperimentTrace(config=cfg, snapshots=snaps, injection_time_s=300.0)
        with pytest.raises(CapacityError, match="pid=120"):
            assign_rows(trace)

    def test_late_process_appended_after_initial_pair(self):
        from malcnn import ExperimentTrace

        a, b, c = _upid(10, "aa"), _upid(11, "bb"), _upid(12, "cc")
        snaps = [_snapshot(0.0, [a, b])] + [_snapshot(float(t * 10), [a, b, c]) for t in range(1, 60)]
        cfg = short_template(__import__("malcnn").profile_variants(1, seed=0)[0])
        trace = ExperimentTrace(config=cfg, snapshots=tuple(snaps), injection_time_s=300.0)
        assert assign_rows(trace) == {a: 0, b: 1, c: 2}


@pytest.fixture(scope="module")
def fitted(corpus6):
    trace = corpus6[0]
    return trace, assign_rows(trace), FeatureStats.from_traces([trace])


class TestEncodeSample:

    def test_empty_snapshot_is_all_zero(self, fitted):
        trace, rows, stats = fitted
        empty = ProcessSnapshot(timestamp_s=0.0, vm_id="vm", processes=())
        m = encode_sample(empty, rows, DEFAULT_SCHEMA, stats)
        assert m.values.shape == (120, 45)
        assert not m.values.any()

    def test_values_normalized_to_unit_interval(self, fitted):
        trace, rows, stats = fitted
        for snap in trace.snapshots[:20]:
            m = encode_sample(snap, rows, DEFAULT_SCHEMA, stats)
            assert m.values.min() >= 0.0 and m.values.max() <= 1.0

    def test_present_processes_fill_their_rows(self, fitted):
        trace, rows, stats = fitted
        snap = trace.snapshots[30]
        m = encode_sample(snap, rows, DEFAULT_SCHEMA, stats)
        present = {rows[u] for u, _ in snap.processes}
        nonzero = set(np.flatnonzero(m.values.any(axis=1)).tolist())
        assert nonzero <= present

    def test_row_zero_before_first_appearance(self, fitted):
        trace, rows, stats = fitted
        first_seen = {}
        for snap in trace.snapshots:
            for u, _ in snap.processes:
                first_seen.setdefault(u, snap.timestamp_s)
        X, _, ts = encode_trace_arrays(trace, DEFAULT_SCHEMA, stats)
        for u, row in rows.items():
            before = X[ts < first_seen[u], row, :]
            assert not before.any()

    def test_full_occupancy_has_no_zero_row(self):
        rng = np.random.default_rng(8)
        upids = [_upid(i) for i in range(120)]
        vecs = tuple((u, rng.uniform(0.01, 1.0, 45)) for u in upids)  # inside every range
        snap = ProcessSnapshot(timestamp_s=0.0, vm_id="vm", processes=vecs)
        rows = {u: i for i, u in enumerate(upids)}
        stats = FeatureStats(minimum=np.zeros(45), maximum=np.ones(45))
        m = encode_sample(snap, rows, DEFAULT_SCHEMA, stats)
        assert m.values.any(axis=1).all()

    def test_out_of_range_metric_named(self, fitted):
        trace, rows, stats = fitted
        u = next(iter(rows))
        vec = np.zeros(45)
        vec[DEFAULT_SCHEMA.index("cpu_total_pct")] = 150.0
        snap = ProcessSnapshot(timestamp_s=0.0, vm_id="vm", processes=((u, vec),))
        with pytest.raises(ValidationError, match="cpu_total_pct"):
            encode_sample(snap, rows, DEFAULT_SCHEMA, stats)

    def test_unknown_process_rejected(self, fitted):
        trace, rows, stats = fitted
        stranger = _upid(9999, "ghost")
        snap = ProcessSnapshot(timestamp_s=0.0, vm_id="vm", processes=((stranger, np.zeros(45)),))
        with pytest.raises(ValidationError, match="no assigned row"):
            encode_sample(snap, rows, DEFAULT_SCHEMA, stats)

    def test_reencoding_persisted_trace_identical(self, corpus6, tmp_path):
        trace = corpus6[3]
        stats = FeatureStats.from_traces([trace])
        X1, y1, _ = encode_trace_arrays(trace, DEFAULT_SCHEMA, stats)
        loaded = ingest_external_trace(write_trace(trace, tmp_path / "t"))
        X2, y2, _ = encode_trace_arrays(loaded, DEFAULT_SCHEMA, stats)
        assert np.array_equal(X1, X2) and np.array_equal(y1, y2)


class TestReplicateChannels:
    def test_three_identical_channels(self):
        rng = np.random.default_rng(0)
        m = SampleMatrix(values=rng.random((120, 45), dtype=np.float32).astype(np.float32))
        r = replicate_channels(m)
        assert r.channels == 3 and r.values.shape == (3, 120, 45)
        assert np.array_equal(r.values[0], r.values[1])
        assert np.array_equal(r.values[0], r.values[2])
        assert np.array_equal(r.values[0], m.values)

    def test_zero_matrix_stays_zero(self):
        r = replicate_channels(SampleMatrix(values=np.zeros((120, 45), dtype=np.float32)))
        assert not r.values.any()

    def test_sum_triples(self):
        rng = np.random.default_rng(1)
        m = SampleMatrix(values=rng.random((120, 45)).astype(np.float32))
        r = replicate_channels(m)
        assert r.values.sum() == pytest.approx(3.0 * m.values.sum(), rel=1e-6)

    def test_double_replication_rejected(self):
        m = SampleMatrix(values=np.zeros((120, 45), dtype=np.float32))
        with pytest.raises(ChannelReplicationError):
            replicate_channels(replicate_channels(m))


class TestSplit:
    def test_largest_remainder_113(self):
        assert _largest_remainder_sizes(113, (0.6, 0.2, 0.2)) == (68, 22, 23)

    def test_largest_remainder_minimal(self):
        assert _largest_remainder_sizes(5, (0.6, 0.2, 0.2)) == (3, 1, 1)

    def test_partition_is_disjoint_and_complete(self, corpus6, split6):
        train, val, test = split6.experiment_partition()
        assert not (train & val) and not (train & test) and not (val & test)
        assert train | val | test == {t.name for t in corpus6}

    def test_deterministic(self, corpus6, split6):
        again = split_dataset(corpus6, ratios=(0.6, 0.2, 0.2), seed=11)
        assert again.train_experiments == split6.train_experiments
        assert np.array_equal(again.X_train, split6.X_train)
        assert np.array_equal(again.y_train, split6.y_train)
        assert [t for t, _ in again.train_index] == [t for t, _ in split6.train_index]

    def test_val_test_chronological(self, split6):
        for index in (split6.val_index, split6.test_index):
            assert index == sorted(index)

    def test_train_order_shuffled(self, split6):
        assert split6.train_index != sorted(split6.train_index)

    def test_stats_ignore_test_experiments(self, corpus6):
        split_a = split_dataset(corpus6, seed=11)
        # tamper with one *test* experiment: statistics must not move
        tampered = list(corpus6)
        victim = next(i for i, t in enumerate(corpus6) if t.name in split_a.test_experiments)
        from dataclasses import replace as dc_replace

        trace = tampered[victim]
        snaps = list(trace.snapshots)
        boosted = tuple(
            (u, v * 0.5) for u, v in snaps[5].processes  # stays inside valid ranges
        )
        snaps[5] = ProcessSnapshot(
            timestamp_s=snaps[5].timestamp_s, vm_id=snaps[5].vm_id, processes=boosted
        )
        tampered[victim] = dc_replace(trace, snapshots=tuple(snaps))
        split_b = split_dataset(tampered, seed=11)
        assert np.array_equal(split_a.stats.minimum, split_b.stats.minimum)
        assert np.array_equal(split_a.stats.maximum, split_b.stats.maximum)

    def test_too_few_experiments_rejected(self, corpus6):
        with pytest.raises(ConfigurationError):
            split_dataset(corpus6[:4])

    def test_degenerate_ratios_rejected(self, corpus6):
        with pytest.raises(ValidationError):
            split_dataset(corpus6, ratios=(1.0, 0.0, 0.0))
        with pytest.raises(ValidationError):
            split_dataset(corpus6, ratios=(0.5, 0.2, 0.2))

    def test_labels_follow_injection_rule(self, corpus6, split6):
        by_name = {t.name: t for t in corpus6}
        for (name, ts), label in zip(split6.test_index, split6.y_test):
            assert label == (1 if ts >= by_name[name].injection_time_s else 0)


class TestDatasetPersistence:
    def test_roundtrip(self, split6, tmp_path):
        save_dataset(split6, tmp_path / "ds")
        loaded = load_dataset(tmp_path / "ds")
        assert loaded.train_experiments == split6.train_experiments
        assert np.array_equal(loaded.X_train, split6.X_train)
        assert np.array_equal(loaded.y_test, split6.y_test)
        assert np.array_equal(loaded.stats.minimum, split6.stats.minimum)
        assert loaded.test_index == split6.test_index

    def test_rewrite_is_bit_identical(self, split6, tmp_path):
        a = save_dataset(split6, tmp_path / "a")
        b = save_dataset(load_dataset(a), tmp_path / "b")
        for name in ("manifest.json", "train_x.npy", "validation_y.npy", "test_x.npy"):
            assert (a / name).read_bytes() == (b / name).read_bytes()


class TestExternalIngest:
    def test_hand_written_trace_ingests(self, tmp_path):
        # a minimal externally collected trace: nothing simulator-made
        import json

        from malcnn.features import content_hash

        n_feats = len(DEFAULT_SCHEMA)
        meta = {
            "schema_version": 1,
            "name": "field-run-01",
            "vm_id": "prod-web-7",
            "injection_time_s": 40.0,
            "profile_name": "seen-in-the-wild",
            "n_snapshots": 6,
            "n_rows": 8,
            "feature_columns": list(DEFAULT_SCHEMA.names),
            "config": {
                "total_duration_s": 60,
                "clean_phase_s": 30,
                "sample_interval_s": 10,
                "rng_seed": 0,
                "injection_window": [0.0, 30.0],
                "traffic": {"mean_on_ms": 500.0, "mean_off_ms": 500.0,
                            "pareto_shape": 1.5, "peak_rate": 10.0},
                "policy": {"scale_out_threshold": 0.7, "scale_in_threshold": 0.3,
                           "min_instances": 2, "max_instances": 10},
                "malware": {
                    "name": "seen-in-the-wild",
                    "family": "cpu-spinner",
                    "spawn_count": 1,
                    "footprint": [{"command": "evilproc"}],
                },
            },
        }
        d = tmp_path / "field-run-01"
        d.mkdir()
        (d / "meta.json").write_text(json.dumps(meta))
        benign_hash = content_hash("nginx")
        evil_hash = content_hash("evilproc")
        rows = ["timestamp_s,pid,command,binary_hash," + ",".join(DEFAULT_SCHEMA.names)]
        zeros = ",".join(["0.5"] * n_feats)
        for i in range(6):
            ts = float(i * 10)
            rows.append(f"{ts!r},100,nginx,{benign_hash},{zeros}")
            if ts >= 40.0:
                rows.append(f"{ts!r},6000,evilproc,{evil_hash},{zeros}")
        (d / "snapshots.csv").write_text("\n".join(rows) + "\n")

        trace = ingest_external_trace(d)
        assert trace.name == "field-run-01"
        assert len(trace.snapshots) == 6
        assert len(trace.unique_processes()) == 2
        stats = FeatureStats(minimum=np.zeros(45), maximum=np.ones(45))
        X, y, _ = encode_trace_arrays(trace, DEFAULT_SCHEMA, stats)
        assert y.tolist() == [0, 0, 0, 0, 1, 1]

    def test_premature_malware_rejected_on_ingest(self, corpus6, tmp_path):
        trace = corpus6[0]
        d = write_trace(trace, tmp_path / "t")
        csv_path = d / "snapshots.csv"
        lines = csv_path.read_text().splitlines()
        # copy a malicious row (post-injection pid range) to the first snapshot
        evil = next(l for l in lines[1:] if int(l.split(",")[1]) >= 6000)
        parts = evil.split(",")
        parts[0] = "0.0"
        lines.insert(1, ",".join(parts))
        csv_path.write_text("\n".join(lines) + "\n")
        meta = (d / "meta.json").read_text()
        import json as _json

        m = _json.loads(meta)
        m["n_rows"] += 1
        (d / "meta.json").write_text(_json.dumps(m))
        from malcnn import TraceParseError

        with pytest.raises(TraceParseError, match="before injection"):
            ingest_external_trace(d)


class TestTraceEncoderEstimator:
    def test_fit_transform_shapes(self, corpus6):
        enc = TraceEncoder().fit(corpus6[:4])
        X = enc.transform(corpus6[4:])
        assert X.shape == (2 * 60, 120, 45)
        assert X.dtype == np.float32

    def test_get_params_roundtrip(self):
        enc = TraceEncoder()
        params = enc.get_params()
        assert "schema" in params
        assert type(enc)(**params).get_params().keys() == params.keys()

    def test_transform_before_fit_rejected(self, corpus6):
        with pytest.raises(ValidationError):
            TraceEncoder().transform(corpus6[:1])
