"""Command line entry point: ``bprlab <command> --config experiment.ini``.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, content_hash
from .data import (
    InteractionLog,
    LogFormat,
    SplitBundle,
    dataset_stats,
    filter_min_interactions,
    ingest,
    read_split,
    split_temporal,
    split_user_based,
    subsample_users,
    synthetic_log,
    write_log,
    write_split,
)
from .errors import AlignmentError, BPRLabError, ConfigError, DataError
from .eval.baselines import fit_ease, fit_itempop
from .eval.metrics import MetricsReport, evaluate
from .eval.significance import significance_matrix
from .model import load_checkpoint
from .optim import MomentumTelemetry
from .rng import subseed
from .train import (
    RunRecord,
    append_record,
    cell_key,
    hyperparameter_search,
    read_records,
    run_ablation_grid,
    train,
)

logger = logging.getLogger("bprlab")


# ---------------------------------------------------------------------------
# helpers


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _dump(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")
    return path


class Manifest:
    """``manifest.json`` of one command run; frozen once marked complete."""

    def __init__(self, directory: Path, command: str, cfg: ExperimentConfig, inputs: list[Path]):
        self.path = directory / "manifest.json"
        self.data = {
            "command": command,
            "version": __version__,
            "config_hash": cfg.config_hash(),
            "config": cfg.canonical(),
            "input_hash": content_hash(inputs) if inputs else None,
            "inputs": [str(p) for p in inputs],
            "started": _now(),
            "finished": None,
            "artifacts": {},
            "status": "running",
        }
        _dump(self.path, self.data)

    def complete(self, artifacts: dict[str, Path]) -> None:
        self.data["artifacts"] = {
            k: {"path": str(p), "sha256": content_hash([p])} for k, p in sorted(artifacts.items()) if Path(p).is_file()
        }
        self.data["finished"] = _now()
        self.data["status"] = "complete"
        _dump(self.path, self.data)


def load_log(cfg: ExperimentConfig) -> InteractionLog:
    path = cfg.data_path
    d = cfg.raw["data"]
    if path is None:
        log = synthetic_log(int(d["synthetic_users"]), int(d["synthetic_items"]), seed=cfg.seed)
    else:
        log = ingest(path, cfg.format)
    if d["subsample_events"].strip():
        log = subsample_users(log, int(d["subsample_events"]), subseed(cfg.seed, "split", 1))
    return filter_min_interactions(log, int(d["min_user"]), int(d["min_item"]))


def make_split(cfg: ExperimentConfig, log: InteractionLog) -> SplitBundle:
    sp = cfg.split_params()
    if sp["protocol"] == "user-based":
        return split_user_based(log, sp["n_heldout_users"], sp["fold_in_fraction"], subseed(cfg.seed, "split"))
    return split_temporal(log, sp["test_window"], sp["val_window"])


def _split_dir(cfg: ExperimentConfig) -> Path:
    return cfg.output_dir / "split"


def load_bundle(cfg: ExperimentConfig) -> SplitBundle:
    d = _split_dir(cfg)
    if not (d / "split.json").exists():
        raise DataError(f"no split artifacts under {d}; run `bprlab preprocess` first")
    return read_split(d)


def _split_inputs(cfg: ExperimentConfig) -> list[Path]:
    d = _split_dir(cfg)
    return [d / n for n in ("train.tsv", "validation.tsv", "test.tsv", "split.json")]


def _report_artifacts(report: MetricsReport, directory: Path, stem: str) -> dict[str, Path]:
    directory.mkdir(parents=True, exist_ok=True)
    j, c = directory / f"{stem}.json", directory / f"{stem}.per_user.csv"
    report.write_json(j)
    report.write_per_user_csv(c)
    return {f"{stem}_json": j, f"{stem}_per_user": c}


# ---------------------------------------------------------------------------
# commands


def cmd_preprocess(cfg: ExperimentConfig, args) -> dict:
    out = cfg.output_dir
    inputs = [cfg.data_path] if cfg.data_path else []
    man = Manifest(out / "preprocess", "preprocess", cfg, inputs)
    log = load_log(cfg)
    bundle = make_split(cfg, log)
    sidecar = write_split(bundle, _split_dir(cfg))
    stats = dataset_stats(bundle.train).to_dict()
    stats_path = _dump(out / "stats.json", stats)
    man.complete({**{p.name: p for p in _split_inputs(cfg)}, "stats": stats_path})
    return {"stats": stats, "split": sidecar}


def cmd_stats(cfg: ExperimentConfig, args) -> dict:
    if args.input:
        fmt = LogFormat(
            delimiter=args.delimiter.encode().decode("unicode_escape"),
            columns=tuple(c.strip() for c in args.columns.split(",")),
            header=args.header,
        )
        log = ingest(args.input, fmt)
    else:
        log = load_log(cfg)
    stats = dataset_stats(log).to_dict()
    if args.out:
        _dump(Path(args.out), stats)
    return stats


def cmd_train(cfg: ExperimentConfig, args) -> dict:
    bundle = load_bundle(cfg)
    tc = cfg.train_config()
    d = cfg.output_dir / "train"
    man = Manifest(d, "train", cfg, _split_inputs(cfg))
    tel = MomentumTelemetry(window=tc.telemetry_window) if tc.telemetry or args.plot else None
    params, rec = train(bundle, tc, evaluate_test=False, telemetry=tel, checkpoint=d / "model.bin", name="train")
    report = evaluate(params, bundle.test, ks=cfg.ks, with_auc="auc" in cfg.metrics, name="bpr")
    rec.test_metrics = report.aggregates
    artifacts = {"checkpoint": d / "model.bin", **_report_artifacts(report, d, "test")}
    if tel is not None:
        rec.telemetry_path = str(tel.to_csv(d / "telemetry.csv"))
        artifacts["telemetry"] = d / "telemetry.csv"
        if args.plot:
            from .report import plot_momentum

            artifacts["momentum_png"] = plot_momentum({tc.label(): tel}, d / "momentum.png")
    records = d / "records.jsonl"
    records.unlink(missing_ok=True)
    append_record(records, rec)
    artifacts["records"] = records
    man.complete(artifacts)
    return {"best_epoch": rec.best_epoch, "best_validation": rec.best_metric,
            "initial_validation": rec.initial_metric, "test": rec.test_metrics}


def cmd_ablate(cfg: ExperimentConfig, args) -> dict:
    bundle = load_bundle(cfg)
    grid = cfg.ablation_grid()
    d = cfg.output_dir / "ablate"
    man = Manifest(d, "ablate", cfg, _split_inputs(cfg))
    records_path = d / "records.jsonl"
    grid_path = d / "grid.json"
    completed = {}
    if grid_path.exists():
        prev = json.loads(grid_path.read_text())
        if prev.get("config_hash") == cfg.config_hash():
            completed = {cell_key(r): r for r in read_records(records_path) if r.status == "ok"}
            logger.info("resuming ablation: %d completed cells", len(completed))
    if not completed:
        records_path.unlink(missing_ok=True)
    state = {"config_hash": cfg.config_hash(), "planned": grid.planned_size(), "completed": sorted(completed)}
    _dump(grid_path, state)

    def on_record(key, rec):
        append_record(records_path, rec)
        state["completed"].append(key)
        _dump(grid_path, state)

    space = cfg.search_space() if cfg.ablation_search else None
    records = run_ablation_grid(bundle, cfg.train_config(), grid, space, cfg.seed, completed, on_record)
    state["status"] = "complete"
    _dump(grid_path, state)
    from .report import ablation_table, plot_ablation

    table = ablation_table(records, d / "ablation.csv")
    fig = plot_ablation(records, d / "ablation.png", cfg.train_config().monitor)
    summary = d / "summary.jsonl"
    summary.write_text("".join(r.to_json() + "\n" for r in records))
    man.complete({"records": summary, "grid": grid_path, "table": table, "figure": fig})
    return {"records": len(records), "cells": [(r.name, r.status, r.test_metrics.get(cfg.train_config().monitor))
                                               for r in records]}


def cmd_search(cfg: ExperimentConfig, args) -> dict:
    bundle = load_bundle(cfg)
    d = cfg.output_dir / "search"
    man = Manifest(d, "search", cfg, _split_inputs(cfg))
    records = d / "records.jsonl"
    records.unlink(missing_ok=True)

    def sink(rec: RunRecord):
        flat = RunRecord.from_dict(rec.to_dict())
        flat.trials = []
        append_record(records, flat)

    final = hyperparameter_search(bundle, cfg.search_space(), cfg.seed, cfg.train_config(),
                                  on_record=sink, checkpoint=d / "model.bin")
    man.complete({"records": records, "checkpoint": d / "model.bin"})
    return {"trials": len(final.trials), "best_config": final.config, "test": final.test_metrics}


def _model_from_spec(spec: str, bundle: SplitBundle):
    if spec == "itempop":
        return "itempop", fit_itempop(bundle.train)
    if spec.startswith("ease"):
        l2 = float(spec.split(":", 1)[1]) if ":" in spec else 500.0
        return f"ease-{l2:g}", fit_ease(bundle.train, l2)
    path = Path(spec)
    if not path.exists():
        raise ConfigError(f"model {spec!r} is neither itempop, ease[:l2] nor an existing checkpoint")
    params = load_checkpoint(path)
    if params.user_count != bundle.train.user_count or params.item_count != bundle.train.item_count:
        raise AlignmentError(
            f"checkpoint {path} has {params.user_count} x {params.item_count} factors, "
            f"split has {bundle.train.user_count} x {bundle.train.item_count}"
        )
    return path.stem, params


def cmd_evaluate(cfg: ExperimentConfig, args) -> dict:
    bundle = load_bundle(cfg)
    d = cfg.output_dir / "evaluate"
    man = Manifest(d, "evaluate", cfg, _split_inputs(cfg))
    specs = [args.model or str(cfg.output_dir / "train" / "model.bin")] + list(args.against)
    reports, artifacts, seen = [], {}, {}
    for spec in specs:
        name, model = _model_from_spec(spec, bundle)
        if name in seen:
            seen[name] += 1
            name = f"{name}-{seen[name]}"
        else:
            seen[name] = 0
        rep = evaluate(model, bundle.test, ks=cfg.ks, with_auc="auc" in cfg.metrics, name=name)
        reports.append(rep)
        artifacts.update(_report_artifacts(rep, d, name))
    out = {"reports": {r.name: r.aggregates for r in reports}}
    if len(reports) > 1:
        sig = significance_matrix(reports, args.comparisons)
        artifacts["significance"] = _dump(d / "significance.json", sig)
        out["significance"] = sig
    man.complete(artifacts)
    return out


def cmd_significance(cfg: ExperimentConfig, args) -> dict:
    reports = [MetricsReport.read_per_user_csv(p) for p in args.reports]
    if len(reports) < 2:
        raise ConfigError("significance needs a reference report and at least one other")
    sig = significance_matrix(reports, args.comparisons, args.alpha)
    if args.out:
        _dump(Path(args.out), sig)
    return sig


def cmd_report(cfg: ExperimentConfig, args) -> dict:
    from .report import ablation_table, plot_ablation, plot_momentum

    out = Path(args.out) if args.out else cfg.output_dir / "report"
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    if args.telemetry:
        series = {}
        for item in args.telemetry:
            label, _, path = item.rpartition("=")
            series[label or Path(path).stem] = MomentumTelemetry.from_csv(path)
        written["momentum"] = str(plot_momentum(series, out / "momentum.png", args.max_iteration))
        with open(out / "momentum_summary.csv", "w") as fh:
            fh.write("label,windows,mean_abs_m\n")
            for label, tel in series.items():
                vals = [v for i, v in zip(tel.iterations, tel.values)
                        if args.max_iteration is None or i <= args.max_iteration]
                fh.write(f"{label},{len(vals)},{sum(vals) / max(len(vals), 1)!r}\n")
        written["momentum_summary"] = str(out / "momentum_summary.csv")
    if args.records:
        recs = read_records(args.records)
        written["table"] = str(ablation_table(recs, out / "ablation.csv"))
        written["figure"] = str(plot_ablation(recs, out / "ablation.png", args.metric))
    if not written:
        raise ConfigError("report needs --telemetry and/or --records")
    return written


def cmd_synth(cfg: ExperimentConfig, args) -> dict:
    log = synthetic_log(args.users, args.items, seed=args.seed)
    write_log(log, args.out, LogFormat())
    return dataset_stats(log).to_dict()


COMMANDS = {
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "ablate": cmd_ablate,
    "search": cmd_search,
    "evaluate": cmd_evaluate,
    "significance": cmd_significance,
    "stats": cmd_stats,
    "report": cmd_report,
    "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", help="INI experiment file")
    common.add_argument("--set", "-s", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable)")
    common.add_argument("--output", "-o", help="output directory (overrides output.dir and $BPRLAB_OUTPUT)")
    common.add_argument("--verbose", "-v", action="store_true")

    p = argparse.ArgumentParser(prog="bprlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"bprlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("preprocess", parents=[common], help="ingest, filter and split a log")
    s = sub.add_parser("train", parents=[common], help="train one BPR model")
    s.add_argument("--plot", action="store_true", help="render the momentum telemetry figure")
    sub.add_parser("ablate", parents=[common], help="run the sequential feature ablation")
    sub.add_parser("search", parents=[common], help="two-stage random hyperparameter search")
    s = sub.add_parser("evaluate", parents=[common], help="evaluate models on the test split")
    s.add_argument("--model", help="checkpoint, 'itempop' or 'ease[:l2]' (default: trained model)")
    s.add_argument("--against", nargs="*", default=[], help="models to compare against")
    s.add_argument("--comparisons", type=int, default=None, help="Bonferroni factor (default: number of pairs)")
    s = sub.add_parser("significance", parents=[common], help="paired t-tests on per-user CSVs")
    s.add_argument("reports", nargs="+", help="reference per-user CSV first")
    s.add_argument("--comparisons", type=int, required=True)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--out")
    s = sub.add_parser("stats", parents=[common], help="dataset statistics")
    s.add_argument("--input", help="log file (default: the configured data)")
    s.add_argument("--delimiter", default="\\t")
    s.add_argument("--columns", default="user,item,rating,timestamp")
    s.add_argument("--header", action="store_true")
    s.add_argument("--out")
    s = sub.add_parser("report", parents=[common], help="render figures and tables")
    s.add_argument("--telemetry", nargs="*", default=[], metavar="LABEL=CSV")
    s.add_argument("--records", help="RunRecord JSON-lines file")
    s.add_argument("--metric", default="ndcg@100")
    s.add_argument("--max-iteration", type=int, default=None)
    s.add_argument("--out")
    s = sub.add_parser("synth", parents=[common], help="write a synthetic log")
    s.add_argument("--out", required=True)
    s.add_argument("--users", type=int, default=943)
    s.add_argument("--items", type=int, default=1682)
    s.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        overrides = list(args.set)
        if args.output:
            overrides.append(f"output.dir={args.output}")
        cfg = ExperimentConfig.load(args.config, overrides)
        result = COMMANDS[args.command](cfg, args)
    except BPRLabError as exc:
        print(f"bprlab {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"bprlab {args.command}: DataError: {exc}", file=sys.stderr)
        return DataError.exit_code
    json.dump(result, sys.stdout, indent=2, sort_keys=True, default=str)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
