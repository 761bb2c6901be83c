"""Command-line experiment harness.

Subcommands: gen, attack, reliability-study, ber, sweep, oracle-check.
Every run is driven by a flat key-value config file plus per-key
override flags, writes CSV (and JSON for attack reports) into the
output directory, and renders a PNG next to each CSV unless
``report.figures`` is off. Exit codes: 0 success, 1 validation error,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__
from .attack import AttackResult, train, write_training_log
from .checks import run_all_checks
from .config import (
    KEYS,
    ConfigError,
    ExperimentConfig,
    load_config,
)
from .crp import (
    Dataset,
    DatasetFormatError,
    MeasurementConfig,
    bit_error_rate,
    dataset_fingerprint,
    generate_dataset,
    read_dataset,
    write_dataset,
)
from .nn import NumericsError, save_checkpoint
from .puf import build_model, descriptor_to_dict
from .reliability import puf_reliability, mean_reliability_difference
from .rng import Rng, STREAM_TRAIN, derive_seed

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _dataset_name(config: ExperimentConfig, seed: int) -> str:
    return f"dataset_{config.descriptor(seed).label()}_{seed}.txt"


def _apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> None:
    for key in KEYS:
        value = getattr(args, key.replace(".", "__"), None)
        if value is not None:
            config.set(key, value)
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        config.set(key.strip(), value.strip())


def _load_experiment(args: argparse.Namespace) -> ExperimentConfig:
    if getattr(args, "config", None):
        config = load_config(args.config)
    else:
        config = ExperimentConfig()
    _apply_overrides(config, args)
    config.validate()
    return config


def _ensure_outdir(config: ExperimentConfig) -> str:
    outdir = config.output_dir()
    os.makedirs(outdir, exist_ok=True)
    return outdir


def _check_dataset_matches(
    config: ExperimentConfig, dataset: Dataset, path: str
) -> None:
    expected = config.descriptor(dataset.puf.seed)
    if descriptor_to_dict(dataset.puf) != descriptor_to_dict(expected):
        raise ConfigError(
            f"{path}: dataset PUF {dataset.puf.label()} (seed {dataset.puf.seed}) "
            f"does not match the configured descriptor"
        )
    if dataset.config != config.measurement():
        raise ConfigError(
            f"{path}: dataset measurement {dataset.config} does not match "
            f"the configured {config.measurement()}"
        )
    if (dataset.lcg_a, dataset.lcg_g) != (config["lcg.a"], config["lcg.g"]):
        raise ConfigError(f"{path}: dataset LCG constants do not match the config")


def cmd_gen(args: argparse.Namespace) -> int:
    config = _load_experiment(args)
    outdir = _ensure_outdir(config)
    count = config["instances.count"]
    base_seed = config["instances.base_seed"]
    paths = []
    for i in range(count):
        seed = base_seed + i
        path = os.path.join(outdir, _dataset_name(config, seed))
        if os.path.exists(path):
            print(f"warning: overwriting {path}", file=sys.stderr)
        dataset = generate_dataset(
            config.descriptor(seed),
            config.measurement(),
            seed=seed,
            lcg_a=config["lcg.a"],
            lcg_g=config["lcg.g"],
            workers=args.workers,
        )
        write_dataset(dataset, path)
        paths.append(path)
        print(f"wrote {path} ({len(dataset)} records)")
    return EXIT_OK


def _dataset_paths(config: ExperimentConfig, args: argparse.Namespace) -> list[str]:
    if args.datasets:
        return list(args.datasets)
    outdir = config.output_dir()
    base_seed = config["instances.base_seed"]
    return [
        os.path.join(outdir, _dataset_name(config, base_seed + i))
        for i in range(config["instances.count"])
    ]


def _run_attacks(
    config: ExperimentConfig, datasets: list[tuple[str, Dataset]], outdir: str
) -> dict:
    mode = config["attack.mode"]
    rows = []
    for path, dataset in datasets:
        seed = dataset.seed
        train_seed = derive_seed(seed, STREAM_TRAIN)
        train_config = config.train_config(train_seed)
        spec, params, result = train(
            dataset,
            mode,
            train_config,
            k=config["measure.k_ldhf"],
            raw_challenges=config["attack.raw_inputs"],
            activation=config["attack.activation"],
        )
        label = dataset.puf.label()
        checkpoint = os.path.join(outdir, f"checkpoint_{label}_{seed}.json")
        save_checkpoint(checkpoint, spec, params, train_config,
                        dataset_fingerprint(dataset))
        log_path = os.path.join(outdir, f"train_{label}_{seed}.csv")
        write_training_log(log_path, result)
        status = "success" if result.success else (
            "failed (timeout)" if result.timed_out else "failed"
        )
        rows.append({
            "seed": seed,
            "dataset": path,
            "accuracy": result.test_accuracy,
            "success": result.success,
            "status": status,
            "epochs_run": result.epochs_run,
            "wall_seconds": result.wall_seconds,
            "checkpoint": checkpoint,
            "training_log": log_path,
        })
        print(f"instance seed={seed}: accuracy={result.test_accuracy:.4f} {status}")
    successes = sum(1 for row in rows if row["success"])
    report = {
        "version": __version__,
        "mode": mode,
        "config": config.as_lines(),
        "success_threshold": 0.85,
        "success_rate_denominator": "instances, one attack each",
        "instances": rows,
        "success_rate": successes / len(rows),
        "mean_accuracy": float(np.mean([row["accuracy"] for row in rows])),
        "environment": {
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
    }
    return report


def _write_attack_report(report: dict, outdir: str, config: ExperimentConfig,
                         stem: str = "report_attack") -> None:
    json_path = os.path.join(outdir, f"{stem}.json")
    with open(json_path, "w", encoding="ascii") as handle:
        json.dump(report, handle, indent=2, sort_keys=True)
        handle.write("\n")
    csv_path = os.path.join(outdir, f"{stem}.csv")
    with open(csv_path, "w", encoding="ascii", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["instance_seed", "accuracy", "success", "status",
                         "epochs_run", "wall_seconds"])
        for row in report["instances"]:
            writer.writerow([
                row["seed"], f"{row['accuracy']:.6f}", int(row["success"]),
                row["status"], row["epochs_run"], f"{row['wall_seconds']:.2f}",
            ])
    print(f"success rate {report['success_rate']:.2f}, "
          f"mean accuracy {report['mean_accuracy']:.4f}")
    print(f"wrote {json_path} and {csv_path}")
    if config["report.figures"]:
        from . import figures

        png = os.path.join(outdir, f"{stem}.png")
        figures.render_attack_accuracies(
            [row["accuracy"] for row in report["instances"]],
            png,
            title=f"{report['mode']} attack",
        )
        print(f"wrote {png}")


def cmd_attack(args: argparse.Namespace) -> int:
    config = _load_experiment(args)
    outdir = _ensure_outdir(config)
    paths = _dataset_paths(config, args)
    if not paths:
        raise ConfigError("no datasets given")
    datasets = []
    for path in paths:
        dataset = read_dataset(path)
        _check_dataset_matches(config, dataset, path)
        datasets.append((path, dataset))
    report = _run_attacks(config, datasets, outdir)
    _write_attack_report(report, outdir, config)
    return EXIT_OK


def cmd_reliability_study(args: argparse.Namespace) -> int:
    config = _load_experiment(args)
    m_list = sorted(config["study.m_list"])
    if len(m_list) < 2:
        raise ConfigError("study.m_list: need at least two repeat counts "
                          "for the difference column")
    outdir = _ensure_outdir(config)
    m_max = m_list[-1]
    rows = []
    curves: dict[int, list[float]] = {m: [] for m in m_list}
    for i in range(config["instances.count"]):
        seed = config["instances.base_seed"] + i
        descriptor = config.descriptor(seed)
        full = generate_dataset(
            descriptor,
            MeasurementConfig(
                num_mv=config["measure.num_mv"],
                m_repeats=m_max,
                n_challenges=config["measure.n_challenges"],
            ),
            seed=seed,
            lcg_a=config["lcg.a"],
            lcg_g=config["lcg.g"],
            workers=args.workers,
        )
        reference = full
        for m in m_list:
            sliced = full.truncated(m)
            r_m = puf_reliability(sliced)
            diff = mean_reliability_difference(sliced, reference)
            rows.append((descriptor.label(), seed, m, r_m, diff))
            curves[m].append(r_m)
    csv_path = os.path.join(outdir, "report_reliability.csv")
    with open(csv_path, "w", encoding="ascii", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["puf", "instance_seed", "m", "R_m", "mean_diff_vs_max"])
        for label, seed, m, r_m, diff in rows:
            writer.writerow([label, seed, m, f"{r_m:.6f}", f"{diff:.6f}"])
    print(f"wrote {csv_path}")
    for m in m_list:
        print(f"m={m}: mean R_m = {float(np.mean(curves[m])):.4f}")
    if config["report.figures"]:
        from . import figures

        png = os.path.join(outdir, "report_reliability.png")
        figures.render_reliability_curve(
            m_list,
            [float(np.mean(curves[m])) for m in m_list],
            png,
            title=config.descriptor(config["instances.base_seed"]).label(),
        )
        print(f"wrote {png}")
    return EXIT_OK


def cmd_ber(args: argparse.Namespace) -> int:
    config = _load_experiment(args)
    mv_list = list(config["ber.num_mv_list"])
    if not mv_list:
        raise ConfigError("ber.num_mv_list: need at least one vote count")
    outdir = _ensure_outdir(config)
    rows = []
    for i in range(config["instances.count"]):
        seed = config["instances.base_seed"] + i
        descriptor = config.descriptor(seed)
        model = build_model(descriptor)
        for num_mv in mv_list:
            measurement = MeasurementConfig(
                num_mv=num_mv,
                m_repeats=1,
                n_challenges=config["measure.n_challenges"],
            )
            ber = bit_error_rate(
                model,
                measurement,
                config["ber.reference"],
                Rng(derive_seed(seed, num_mv)),
                lcg_a=config["lcg.a"],
                lcg_g=config["lcg.g"],
            )
            rows.append((descriptor.label(), seed, num_mv, ber))
    csv_path = os.path.join(outdir, "report_ber.csv")
    with open(csv_path, "w", encoding="ascii", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["puf", "instance_seed", "num_mv", "ber"])
        for label, seed, num_mv, ber in rows:
            writer.writerow([label, seed, num_mv, f"{ber:.6f}"])
    print(f"wrote {csv_path}")
    means = [
        float(np.mean([r[3] for r in rows if r[2] == num_mv])) for num_mv in mv_list
    ]
    for num_mv, ber in zip(mv_list, means):
        print(f"num_mv={num_mv}: mean BER = {ber:.5f}")
    if len(mv_list) > 1:
        ordered = sorted(range(len(mv_list)), key=lambda j: mv_list[j])
        decreasing = all(
            means[ordered[j]] > means[ordered[j + 1]]
            for j in range(len(ordered) - 1)
        )
        print(f"strictly decreasing with num_mv: {'yes' if decreasing else 'no'}")
    if config["report.figures"]:
        from . import figures

        png = os.path.join(outdir, "report_ber.png")
        pairs = sorted(zip(mv_list, means))
        figures.render_ber_curve(
            [p[0] for p in pairs],
            [p[1] for p in pairs],
            png,
            title=config.descriptor(config["instances.base_seed"]).label(),
        )
        print(f"wrote {png}")
    return EXIT_OK


_SWEEP_KEY = {
    "k_ldhf": "measure.k_ldhf",
    "num_mv": "measure.num_mv",
    "crp_budget": "measure.n_challenges",
    "m": "measure.m",
}


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _load_experiment(args)
    axis = config["sweep.axis"]
    values = config["sweep.values"]
    if axis is None:
        raise ConfigError("sweep.axis: required for the sweep command")
    if not values:
        raise ConfigError("sweep.values: need at least one value")
    outdir = _ensure_outdir(config)
    summary = []
    all_rows = []
    for value in sorted(values):
        point = ExperimentConfig(dict(config.values))
        point.set(_SWEEP_KEY[axis], str(value))
        point.validate()
        point_dir = os.path.join(outdir, f"sweep_{axis}_{value}")
        os.makedirs(point_dir, exist_ok=True)
        datasets = []
        for i in range(point["instances.count"]):
            seed = point["instances.base_seed"] + i
            dataset = generate_dataset(
                point.descriptor(seed),
                point.measurement(),
                seed=seed,
                lcg_a=point["lcg.a"],
                lcg_g=point["lcg.g"],
                workers=args.workers,
            )
            path = os.path.join(point_dir, _dataset_name(point, seed))
            write_dataset(dataset, path)
            datasets.append((path, dataset))
        report = _run_attacks(point, datasets, point_dir)
        _write_attack_report(report, point_dir, point)
        summary.append((value, report["mean_accuracy"], report["success_rate"]))
        for row in report["instances"]:
            all_rows.append((value, row["seed"], row["accuracy"],
                             int(row["success"]), row["status"]))
    csv_path = os.path.join(outdir, f"report_sweep_{axis}.csv")
    with open(csv_path, "w", encoding="ascii", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([axis, "instance_seed", "accuracy", "success", "status"])
        for row in all_rows:
            writer.writerow([row[0], row[1], f"{row[2]:.6f}", row[3], row[4]])
    print(f"wrote {csv_path}")
    for value, mean_accuracy, success_rate in summary:
        print(f"{axis}={value}: mean accuracy {mean_accuracy:.4f}, "
              f"success rate {success_rate:.2f}")
    if config["report.figures"]:
        from . import figures

        png = os.path.join(outdir, f"report_sweep_{axis}.png")
        figures.render_sweep(
            axis,
            [s[0] for s in summary],
            [s[1] for s in summary],
            [s[2] for s in summary],
            png,
        )
        print(f"wrote {png}")
    return EXIT_OK


def cmd_oracle_check(args: argparse.Namespace) -> int:
    reports = run_all_checks(seed=args.seed)
    failed = False
    for report in reports:
        flag = "PASS" if report.passed else "FAIL"
        print(f"{flag} {report.name}: {report.detail}")
        failed = failed or not report.passed
    return EXIT_RUNTIME if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pufrel",
        description="Simulate delay PUFs, generate CRP datasets, and run "
                    "reliability-assisted modeling attacks.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, workers: bool = False):
        p.add_argument("--config", help="flat key-value configuration file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one configuration key (repeatable)")
        for key in sorted(KEYS):
            p.add_argument(f"--{key}", dest=key.replace(".", "__"),
                           metavar="V", help=argparse.SUPPRESS)
        if workers:
            p.add_argument("--workers", type=int, default=1,
                           help="generation worker threads (output identical)")

    p_gen = sub.add_parser("gen", help="generate CRP dataset files")
    add_common(p_gen, workers=True)
    p_gen.set_defaults(func=cmd_gen)

    p_attack = sub.add_parser("attack", help="train attacks on datasets")
    add_common(p_attack)
    p_attack.add_argument("--datasets", nargs="*",
                          help="dataset files (default: the gen layout)")
    p_attack.set_defaults(func=cmd_attack)

    p_rel = sub.add_parser("reliability-study",
                           help="reliability vs repeat count")
    add_common(p_rel, workers=True)
    p_rel.set_defaults(func=cmd_reliability_study)

    p_ber = sub.add_parser("ber", help="bit error rate vs majority votes")
    add_common(p_ber, workers=True)
    p_ber.set_defaults(func=cmd_ber)

    p_sweep = sub.add_parser("sweep", help="repeat the attack across one axis")
    add_common(p_sweep, workers=True)
    p_sweep.set_defaults(func=cmd_sweep)

    p_check = sub.add_parser("oracle-check",
                             help="analytic-vs-sampled and gradient checks")
    p_check.add_argument("--seed", type=int, default=0)
    p_check.set_defaults(func=cmd_oracle_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericsError, OSError, RuntimeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
