"""Command-line entry point.

Subcommands: `train` (one model, saved as a versioned artifact), `predict`
(apply a saved model to a CSV), `benchmark` (repeated-split protocol),
`ablate` (paired full-model vs frozen-random-bank comparison), and
`selfcheck` (built-in numerical property suite).

Exit codes: 0 success; 2 configuration error; 3 numerical abort during a
single run; 4 benchmark finished with some failed repeats; 1 selfcheck
found a failing property.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

from .errors import (ConfigError, DataError, DomainError, NumericsError,
                     SplitError, UsageError)
from .experiment import (ExperimentConfig, apply_overrides, grid_cells,
                         load_artifact, load_experiment_dataset,
                         parse_config_file, report_to_dict, run_ablation,
                         run_benchmark, run_prediction, run_selfcheck,
                         run_training, save_artifact, write_results,
                         _write_json)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICS = 3
EXIT_PARTIAL = 4


# ---------------------------------------------------------------------------
# Console table
# ---------------------------------------------------------------------------

def _cell(value) -> str:
    """Render one table cell; floats use repr so the console shows exactly
    the numbers stored in the results file."""
    if value is None:
        return "-"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_results_table(rows) -> str:
    header = ["dataset", "mode", "layers", "width", "metric", "mean", "std",
              "baseline", "repeats_ok", "seconds"]
    body = []
    for row in rows:
        n_total = len(row.per_repeat)
        n_ok = n_total - row.n_failed
        body.append([
            row.dataset, row.mode, str(row.layers), str(row.hidden_width),
            row.metric_name, _cell(row.mean), _cell(row.std),
            _cell(row.baseline_mean), f"{n_ok}/{n_total}",
            _cell(row.wall_clock_seconds),
        ])
    widths = [max(len(header[i]), *(len(r[i]) for r in body)) if body
              else len(header[i]) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for r in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines)


def _print_failures(rows) -> None:
    for row in rows:
        for repeat, message in row.failures:
            print(f"  [failed] {row.dataset}/{row.mode} repeat {repeat}: "
                  f"{message}", file=sys.stderr)


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def _load_config(args) -> ExperimentConfig:
    cfg = parse_config_file(args.config)
    return apply_overrides(
        cfg,
        seed=getattr(args, "seed", None),
        out=getattr(args, "out", None),
        mode=getattr(args, "mode", None),
        repeats=getattr(args, "repeats", None))


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    artifact, report, metrics = run_training(cfg, repeat=args.repeat)
    model_path = os.path.join(cfg.output_dir, "model.json")
    report_path = os.path.join(cfg.output_dir, "train_report.json")
    save_artifact(model_path, artifact)
    _write_json(report_path, {"format_version": 1,
                              "report": report_to_dict(report),
                              "metrics": metrics})
    print(f"model written to {model_path}")
    print(f"report written to {report_path}")
    print(f"test {metrics['metric']}: {_cell(metrics['test'])} "
          f"(constant-predictor baseline {_cell(metrics['baseline'])})")
    return EXIT_OK


def _cmd_predict(args) -> int:
    artifact = load_artifact(args.model)
    result = run_prediction(artifact, args.data, args.schema,
                            rounds=args.rounds, seed=args.seed or 0)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "predictions.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if result["kind"] == "classification":
            names = artifact.label_names or [
                str(i) for i in range(len(result["probabilities"][0]))]
            writer.writerow(["label_index", "label"]
                            + [f"prob_{n}" for n in names])
            for idx, name, probs in zip(result["labels"],
                                        result["label_names"],
                                        result["probabilities"]):
                writer.writerow([idx, name] + [repr(p) for p in probs])
            metric_line = (f"misclassification: "
                           f"{_cell(result['misclassification'])}")
        else:
            writer.writerow(["prediction", "prediction_standardized"])
            for raw, std in zip(result["predictions"],
                                result["predictions_standardized"]):
                writer.writerow([repr(raw), repr(std)])
            metric_line = (f"standardized rmse: "
                           f"{_cell(result['rmse_standardized'])}")
    json_path = os.path.join(out_dir, "predictions.json")
    _write_json(json_path, {"format_version": 1, **result})
    print(f"predictions written to {csv_path} and {json_path}")
    print(metric_line)
    return EXIT_OK


def _cmd_benchmark(args) -> int:
    cfg = _load_config(args)
    if args.grid:
        ds = load_experiment_dataset(cfg)
        rows = []
        for layer_count, width in grid_cells(cfg, ds.n_features):
            cell_cfg = replace(cfg, layers=layer_count, hidden_width=width)
            rows.append(run_benchmark(cell_cfg, jobs=args.jobs, dataset=ds))
    else:
        rows = [run_benchmark(cfg, jobs=args.jobs)]
    results_path = os.path.join(cfg.output_dir, "results.json")
    write_results(results_path, rows)
    print(format_results_table(rows))
    print(f"results written to {results_path}")
    _print_failures(rows)
    return EXIT_PARTIAL if any(row.failures for row in rows) else EXIT_OK


def _cmd_ablate(args) -> int:
    cfg = _load_config(args)
    rows = run_ablation(cfg, jobs=args.jobs)
    hashes_match = rows[0].split_hashes == rows[1].split_hashes
    results_path = os.path.join(cfg.output_dir, "ablation.json")
    write_results(results_path, rows,
                  extra={"paired": True, "split_hashes_match": hashes_match})
    print(format_results_table(rows))
    print(f"paired splits identical: {hashes_match}")
    print(f"results written to {results_path}")
    _print_failures(rows)
    return EXIT_PARTIAL if any(row.failures for row in rows) else EXIT_OK


def _cmd_selfcheck(args) -> int:
    checks = run_selfcheck(fast=not args.thorough)
    all_ok = True
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        all_ok = all_ok and ok
    return EXIT_OK if all_ok else 1


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsinks",
        description=("Heavy-tailed variational networks of random "
                     "trigonometric features: train, predict, benchmark."))
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True,
                           help="path to an experiment config (JSON)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the experiment seed")
        p.add_argument("--out", default=None,
                       help="override the output directory")

    p_train = sub.add_parser("train", help="train one model and save it")
    common(p_train)
    p_train.add_argument("--mode", choices=["dtbks", "rks-prior"],
                         default=None, help="override the model mode")
    p_train.add_argument("--repeat", type=int, default=0,
                         help="which split repeat to train on (default 0)")
    p_train.set_defaults(handler=_cmd_train)

    p_pred = sub.add_parser("predict", help="apply a saved model to a CSV")
    p_pred.add_argument("--model", required=True,
                        help="path to a saved model artifact")
    p_pred.add_argument("--data", required=True, help="CSV file to score")
    p_pred.add_argument("--schema", required=True,
                        help="schema descriptor for the CSV")
    p_pred.add_argument("--rounds", type=int, default=50,
                        help="posterior-sample rounds to average (default 50)")
    common(p_pred, config=False)
    p_pred.set_defaults(handler=_cmd_predict)

    p_bench = sub.add_parser("benchmark",
                             help="run the repeated-split protocol")
    common(p_bench)
    p_bench.add_argument("--mode", choices=["dtbks", "rks-prior"],
                         default=None, help="override the model mode")
    p_bench.add_argument("--repeats", type=int, default=None,
                         help="override the number of repeats")
    p_bench.add_argument("--jobs", type=int, default=1,
                         help="worker processes for repeats (default 1)")
    p_bench.add_argument("--grid", action="store_true",
                         help="sweep the (layer count, width) selection grid")
    p_bench.set_defaults(handler=_cmd_benchmark)

    p_abl = sub.add_parser("ablate",
                           help="paired comparison vs frozen random banks")
    common(p_abl)
    p_abl.add_argument("--repeats", type=int, default=None,
                       help="override the number of repeats")
    p_abl.add_argument("--jobs", type=int, default=1,
                       help="worker processes for repeats (default 1)")
    p_abl.set_defaults(handler=_cmd_ablate)

    p_check = sub.add_parser("selfcheck",
                             help="run the built-in numerical property suite")
    p_check.add_argument("--thorough", action="store_true",
                         help="larger sample sizes and tighter tolerances")
    p_check.set_defaults(handler=_cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, UsageError, DomainError, SplitError) as exc:
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericsError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICS


if __name__ == "__main__":
    sys.exit(main())
