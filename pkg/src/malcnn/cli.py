"""Command-line pipeline: simulate | encode | train | evaluate | benchmark | report.

Exit codes: 0 success, 2 configuration/validation problems, 1 runtime
failures.  ``MALCNN_OUT`` redirects relative output paths under a
common root.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import RunManifest, config_digest, write_manifest
from .config import load_config, simulation_plan, train_config
from .encoding import load_dataset, save_dataset, split_dataset
from .errors import (
    CapacityError,
    CheckpointError,
    ConfigurationError,
    MalcnnError,
    TraceParseError,
    ValidationError,
)
from .metrics import detection_time, evaluate_model
from .testbed import generate_corpus, read_trace, write_trace
from .training import load_history, record_time_to_best, save_history, train
from .validation import MATRIX_ROWS
from .zoo import MODEL_NAMES, build_network, load_checkpoint, network_from_checkpoint, save_checkpoint

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _out_path(raw: str) -> Path:
    root = os.environ.get("MALCNN_OUT")
    path = Path(raw)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _rel_files(out_dir: Path, paths) -> list[str]:
    return sorted(p.relative_to(out_dir).as_posix() for p in paths)


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    if args.experiments is not None:
        config["simulate"]["experiments"] = args.experiments
    if args.seed is not None:
        config["simulate"]["base_seed"] = args.seed
    profiles, template, base_seed = simulation_plan(config)
    out = _out_path(args.out)
    n = config["simulate"]["experiments"]
    print(f"simulating {n} experiments (base seed {base_seed}) -> {out}")
    traces = generate_corpus(n, profiles, base_seed, template=template)
    written = []
    for trace in traces:
        trace_dir = write_trace(trace, out / trace.name)
        written += [trace_dir / "meta.json", trace_dir / "snapshots.csv"]
    write_manifest(
        out,
        RunManifest(
            tool_version=__version__,
            command="simulate",
            config_digest=config_digest(config["simulate"]),
            seeds={"corpus": base_seed, "profiles": config["simulate"]["profile_seed"]},
            inputs=[],
            files=_rel_files(out, written),
        ),
    )
    print(f"wrote {len(traces)} traces ({sum(t.config.n_samples for t in traces)} samples)")
    return EXIT_OK


def _load_corpus(corpus_dir: Path):
    trace_dirs = sorted(p for p in corpus_dir.iterdir() if (p / "meta.json").is_file())
    if not trace_dirs:
        raise ValidationError(f"{corpus_dir} contains no trace directories")
    return [read_trace(p) for p in trace_dirs]


def cmd_encode(args) -> int:
    config = load_config(args.config)
    if args.ratios is not None:
        config["encode"]["ratios"] = args.ratios
    if args.seed is not None:
        config["encode"]["seed"] = args.seed
    corpus = _load_corpus(Path(args.corpus))
    overflowing = [t.name for t in corpus if len(t.unique_processes()) > MATRIX_ROWS]
    if overflowing:
        raise CapacityError(
            f"{len(overflowing)} experiment(s) exceed the {MATRIX_ROWS}-process budget: "
            f"{', '.join(overflowing)}"
        )
    split = split_dataset(
        corpus, ratios=tuple(config["encode"]["ratios"]), seed=config["encode"]["seed"]
    )
    out = _out_path(args.out)
    save_dataset(split, out)
    files = [out / "manifest.json"]  # dataset manifest, distinct from the run manifest
    files += [out / f"{part}_{suffix}.npy" for part in ("train", "validation", "test") for suffix in ("x", "y")]
    write_manifest(
        out,
        RunManifest(
            tool_version=__version__,
            command="encode",
            config_digest=config_digest(config["encode"]),
            seeds={"split": config["encode"]["seed"]},
            inputs=[str(Path(args.corpus))],
            files=_rel_files(out, files),
        ),
    )
    print(
        f"encoded {len(corpus)} experiments -> "
        f"{len(split.train_experiments)}/{len(split.validation_experiments)}/"
        f"{len(split.test_experiments)} split at {out}"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    config = load_config(args.config)
    if args.model is not None:
        config["train"]["model"] = args.model
    if args.epochs is not None:
        config["train"]["epochs"] = args.epochs
    if args.seed is not None:
        config["train"]["seed"] = args.seed
    if args.init_seed is not None:
        config["train"]["init_seed"] = args.init_seed
    model = config["train"]["model"]
    if model not in MODEL_NAMES:
        raise ConfigurationError(f"unknown model {model!r}; choose one of {MODEL_NAMES}")
    split = load_dataset(Path(args.dataset))
    cfg = train_config(config)
    net = build_network(model, seed=config["train"]["init_seed"])
    print(f"training {model} for {cfg.epochs} epochs (batch {cfg.batch_size})")
    ckpt, history = train(net, split, cfg, verbose=args.verbose)
    out = _out_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = save_checkpoint(ckpt, out / "model.ckpt")
    hist_path = save_history(history, out / "history.csv")
    write_manifest(
        out,
        RunManifest(
            tool_version=__version__,
            command="train",
            config_digest=config_digest(config["train"]),
            seeds={"shuffle": cfg.seed, "init": config["train"]["init_seed"]},
            inputs=[str(Path(args.dataset))],
            files=_rel_files(out, [ckpt_path, hist_path]),
        ),
    )
    best_acc, best_epoch, elapsed = record_time_to_best(history)
    print(f"{model}: best_val_acc={best_acc:.4f} best_epoch={best_epoch} elapsed_s={elapsed:.1f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = load_config(args.config)
    ckpt = load_checkpoint(Path(args.checkpoint))
    split = load_dataset(Path(args.dataset))
    report = evaluate_model(
        ckpt, split.X_test, split.y_test, batch_size=config["evaluate"]["batch_size"]
    )
    out = _out_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"metrics_{report.model_name}.json"
    path.write_text(json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n")
    write_manifest(
        out,
        RunManifest(
            tool_version=__version__,
            command="evaluate",
            config_digest=config_digest(config["evaluate"]),
            seeds={},
            inputs=[str(Path(args.checkpoint)), str(Path(args.dataset))],
            files=_rel_files(out, [path]),
        ),
    )
    print(
        f"{report.model_name}: accuracy={report.accuracy:.4f} precision={report.precision:.4f} "
        f"recall={report.recall:.4f} f1={report.f1:.4f} auc={report.auc:.4f}"
    )
    return EXIT_OK


def _benchmark_samples(dataset: str | None) -> np.ndarray:
    if dataset is not None:
        split = load_dataset(Path(dataset))
        return split.X_test[:8]
    rng = np.random.default_rng(0)
    return rng.random((8, MATRIX_ROWS, 45), dtype=np.float32)


def cmd_benchmark(args) -> int:
    config = load_config(args.config)
    reps = args.repetitions or config["benchmark"]["repetitions"]
    warmup = args.warmup or config["benchmark"]["warmup"]
    nets = []
    for run_dir in args.runs or []:
        ckpt = load_checkpoint(Path(run_dir) / "model.ckpt")
        nets.append(network_from_checkpoint(ckpt))
    for name in args.models or []:
        if name not in MODEL_NAMES:
            raise ConfigurationError(f"unknown model {name!r}; choose one of {MODEL_NAMES}")
        nets.append(build_network(name, seed=0))
    if not nets:
        raise ConfigurationError("nothing to benchmark: pass --runs and/or --models")
    results = {}
    for net in nets:
        samples = _benchmark_samples(args.dataset)
        timing = detection_time(net, samples, repetitions=reps, warmup=warmup)
        results[net.spec.name] = {
            "median_ms": timing.median_ms,
            "mean_ms": timing.mean_ms,
            "repetitions": timing.repetitions,
            "warmup": timing.warmup,
        }
        print(f"{net.spec.name}: median {timing.median_ms:.2f} ms, mean {timing.mean_ms:.2f} ms")
    out = _out_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "benchmark.json"
    path.write_text(json.dumps(results, sort_keys=True, indent=2) + "\n")
    write_manifest(
        out,
        RunManifest(
            tool_version=__version__,
            command="benchmark",
            config_digest=config_digest(config["benchmark"]),
            seeds={},
            inputs=[str(Path(d)) for d in (args.runs or [])] + ([str(Path(args.dataset))] if args.dataset else []),
            files=_rel_files(out, [path]),
        ),
    )
    return EXIT_OK


def _write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def cmd_report(args) -> int:
    config = load_config(args.config)
    split = load_dataset(Path(args.dataset))
    bench = {}
    if args.benchmark:
        bench = json.loads(Path(args.benchmark).read_text())
    out = _out_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    metric_rows, time_rows, bar_rows = [], [], []
    for run_dir in args.runs:
        run_dir = Path(run_dir)
        ckpt = load_checkpoint(run_dir / "model.ckpt")
        report = evaluate_model(
            ckpt, split.X_test, split.y_test, batch_size=config["evaluate"]["batch_size"]
        )
        name = report.model_name
        dt = bench.get(name, {}).get("median_ms")
        metric_rows.append(
            [
                name,
                f"{100 * report.accuracy:.1f}",
                f"{100 * report.precision:.1f}",
                f"{100 * report.recall:.1f}",
                f"{100 * report.f1:.1f}",
                "" if dt is None else f"{dt:.0f}",
            ]
        )
        for metric in ("accuracy", "precision", "recall", "f1"):
            bar_rows.append([name, metric, repr(getattr(report, metric))])
        written.append(
            _write_csv(
                out / f"roc_{name}.csv",
                ["fpr", "tpr"],
                [[repr(fpr), repr(tpr)] for fpr, tpr in report.roc.points],
            )
        )
        report_path = out / f"metrics_{name}.json"
        report_path.write_text(json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n")
        written.append(report_path)

        history_path = run_dir / "history.csv"
        if history_path.is_file():
            history = load_history(history_path)
            best_acc, best_epoch, elapsed = record_time_to_best(history)
            time_rows.append([name, f"{100 * best_acc:.1f}", str(best_epoch), f"{elapsed:.0f}"])
            written.append(
                _write_csv(
                    out / f"loss_{name}.csv",
                    ["epoch", "train_loss", "val_loss"],
                    [[str(r.epoch), repr(r.train_loss), repr(r.val_loss)] for r in history.records],
                )
            )
        else:
            print(f"warning: {history_path} missing, loss curve and time-to-best omitted for {name}",
                  file=sys.stderr)
    written.append(
        _write_csv(
            out / "table_metrics.csv",
            ["model", "accuracy", "precision", "recall", "f1", "detection_time_ms"],
            metric_rows,
        )
    )
    written.append(
        _write_csv(
            out / "table_time_to_best.csv",
            ["model", "validation_accuracy", "epoch_reached", "time_elapsed_s"],
            time_rows,
        )
    )
    written.append(_write_csv(out / "metrics_bar.csv", ["model", "metric", "value"], bar_rows))
    write_manifest(
        out,
        RunManifest(
            tool_version=__version__,
            command="report",
            config_digest=config_digest(config["evaluate"]),
            seeds={},
            inputs=[str(Path(d)) for d in args.runs] + [str(Path(args.dataset))],
            files=_rel_files(out, written),
        ),
    )
    print(f"report for {len(args.runs)} run(s) written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="malcnn",
        description="behavioural malware detection pipeline: simulate, encode, train, evaluate",
    )
    parser.add_argument("--version", action="version", version=f"malcnn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a labeled experiment corpus")
    p.add_argument("-c", "--config", default=None, help="pipeline config YAML")
    p.add_argument("-o", "--out", required=True, help="corpus output directory")
    p.add_argument("--experiments", type=int, default=None, help="override experiment count")
    p.add_argument("--seed", type=int, default=None, help="override the corpus base seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("encode", help="encode a corpus into dataset tensors")
    p.add_argument("corpus", help="corpus directory from the simulate step")
    p.add_argument("-c", "--config", default=None)
    p.add_argument("-o", "--out", required=True, help="dataset output directory")
    p.add_argument("--ratios", type=float, nargs=3, default=None, metavar=("TRAIN", "VAL", "TEST"))
    p.add_argument("--seed", type=int, default=None, help="override the split seed")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train", help="train one model on an encoded dataset")
    p.add_argument("dataset", help="dataset directory from the encode step")
    p.add_argument("-m", "--model", default=None, choices=MODEL_NAMES)
    p.add_argument("-c", "--config", default=None)
    p.add_argument("-o", "--out", required=True, help="run output directory")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="override the shuffle seed")
    p.add_argument("--init-seed", type=int, default=None, help="override the weight init seed")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on the test split")
    p.add_argument("checkpoint", help="checkpoint file")
    p.add_argument("dataset", help="dataset directory")
    p.add_argument("-c", "--config", default=None)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="measure single-sample detection latency")
    p.add_argument("--runs", nargs="*", default=None, help="run directories with model.ckpt")
    p.add_argument("--models", nargs="*", default=None,
                   help="architecture names to benchmark with fresh weights")
    p.add_argument("--dataset", default=None, help="dataset directory for realistic samples")
    p.add_argument("-c", "--config", default=None)
    p.add_argument("-o", "--out", required=True)
    p.add_argument("-r", "--repetitions", type=int, default=None)
    p.add_argument("-w", "--warmup", type=int, default=None)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("report", help="roll-up tables and plot data for trained runs")
    p.add_argument("--runs", nargs="+", required=True, help="run directories from the train step")
    p.add_argument("--dataset", required=True, help="dataset directory")
    p.add_argument("--benchmark", default=None, help="benchmark.json for detection-time columns")
    p.add_argument("-c", "--config", default=None)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ValidationError, TraceParseError, CheckpointError, CapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MalcnnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
