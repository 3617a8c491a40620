"""Command-line entry point: ``glucosindy <command> [--config FILE] [--key value ...]``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import asdict
from datetime import date
from typing import Optional, Sequence

from . import __version__
from .config import SCHEMA, ConfigError, RunConfig, load_config
from .ingest import (IngestError, PatientDataset, dataset_to_csv, format_timestamp, parse_events_csv,
                     parse_ohio_xml, parse_timestamp)
from .pipeline import (REPORT_COLUMNS, GridSearchRecord, PipelineError, ShiftSelection, evaluate_test,
                       grid_search_shifts, select_best_model, _fit, _prepare)
from .sindy import SparseModel
from .svg import line_chart
from .synthetic import SynthesisError, synthesize_dataset
from .timeseries import IncompleteDayError, Segmentation, ShiftConfig, segment_days

COMMANDS = ("ingest", "synth", "gridsearch", "fit", "simulate", "evaluate", "report", "pipeline")
RECORD_COLUMNS = ("train_day", "train_bolus_steps", "train_carb_steps", "eval_day", "eval_bolus_steps",
                  "eval_carb_steps", "mae", "diverged", "failed")


class CommandError(RuntimeError):
    """A diagnosable failure: missing input, missing artifact, unusable data."""


# artifact helpers

def _out(cfg: RunConfig, name: str) -> str:
    return os.path.join(cfg["output.dir"], name)


def _write(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _read(path: str, hint: str = "") -> str:
    if not os.path.exists(path):
        raise CommandError(f"missing {os.path.basename(path)} ({path}){hint}")
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _json(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def _csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# data loading

def _dataset_path(cfg: RunConfig) -> str:
    return cfg["data.path"] or _out(cfg, "dataset.csv")


def load_dataset(cfg: RunConfig) -> PatientDataset:
    path = _dataset_path(cfg)
    hint = "" if cfg["data.path"] else "; run 'synth' or 'ingest' first or set data.path"
    text = _read(path, hint)
    fmt = cfg["data.format"]
    if fmt == "auto":
        fmt = "xml" if path.lower().endswith(".xml") else "csv"
    try:
        if fmt == "xml":
            return parse_ohio_xml(text, cfg["data.tz"])
        return parse_events_csv(text, os.path.splitext(os.path.basename(path))[0])
    except IngestError as exc:
        raise CommandError(f"{path}: {exc}") from None


def load_days(cfg: RunConfig) -> Segmentation:
    ds = load_dataset(cfg)
    try:
        return segment_days(ds.glucose, ds.basal, ds.bolus, ds.meals, cfg["data.tz"],
                            max_gap=cfg["data.max_gap_minutes"] * 60.0)
    except IncompleteDayError as exc:
        raise CommandError(str(exc)) from None


def split_days(cfg: RunConfig):
    seg = load_days(cfg)
    n = cfg["split.train"]
    if n > len(seg.days):
        raise CommandError(f"split.train = {n} but only {len(seg.days)} complete days are available")
    return seg.days[:n], seg.days[n:]


# artifact formats

def records_to_csv(records: Sequence[GridSearchRecord]) -> str:
    rows = [(r.train_day.isoformat(), r.train_shifts.bolus_steps, r.train_shifts.carb_steps,
             r.eval_day.isoformat(), r.eval_shifts.bolus_steps, r.eval_shifts.carb_steps,
             repr(float(r.mae)), int(r.diverged), int(r.failed)) for r in records]
    return _csv_text(RECORD_COLUMNS, rows)


def records_from_csv(text: str) -> list[GridSearchRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != RECORD_COLUMNS:
        raise CommandError(f"gridsearch_records.csv has columns {reader.fieldnames}, expected {RECORD_COLUMNS}")
    return [GridSearchRecord(date.fromisoformat(row["train_day"]),
                             ShiftConfig(int(row["train_bolus_steps"]), int(row["train_carb_steps"])),
                             date.fromisoformat(row["eval_day"]),
                             ShiftConfig(int(row["eval_bolus_steps"]), int(row["eval_carb_steps"])),
                             float(row["mae"]), row["diverged"] == "1", row["failed"] == "1")
            for row in reader]


def selection_to_json(sel: ShiftSelection, train_days) -> str:
    return _json({
        "chosen": {"bolus_steps": sel.chosen.bolus_steps, "carb_steps": sel.chosen.carb_steps},
        "train_days": [d.date.isoformat() for d in train_days],
        "summary": [{"bolus_steps": s.bolus_steps, "carb_steps": s.carb_steps, "mean_mae": sel.summary[s],
                     "kept_models": [d.isoformat() for d in sel.kept[s]]} for s in sorted(sel.summary)],
    })


def load_chosen(cfg: RunConfig) -> tuple[ShiftConfig, list[str]]:
    doc = json.loads(_read(_out(cfg, "shift_selection.json"), "; run 'gridsearch' first"))
    c = doc["chosen"]
    return ShiftConfig(c["bolus_steps"], c["carb_steps"]), doc["train_days"]


def load_model(cfg: RunConfig) -> SparseModel:
    return SparseModel.from_json(_read(_out(cfg, "model.json"), "; run 'fit' first"))


# commands

def cmd_ingest(cfg: RunConfig) -> str:
    if not cfg["data.path"]:
        raise CommandError("ingest needs data.path")
    ds = load_dataset(cfg)
    target = _out(cfg, "dataset.csv")
    if os.path.exists(target) and os.path.samefile(target, cfg["data.path"]):
        raise CommandError(f"ingest would overwrite its input {target}; choose another output.dir")
    seg = segment_days(ds.glucose, ds.basal, ds.bolus, ds.meals, cfg["data.tz"],
                       max_gap=cfg["data.max_gap_minutes"] * 60.0)
    _write(target, dataset_to_csv(ds))
    _write(_out(cfg, "days.json"), _json({
        "complete": [d.date.isoformat() for d in seg.days],
        "incomplete": [{"date": d.date.isoformat(), "reason": d.reason} for d in seg.incomplete],
        "warnings": list(ds.warnings),
    }))
    return (f"ingested {len(ds.glucose)} glucose samples, {len(ds.bolus)} boluses, {len(ds.meals)} meals; "
            f"{len(seg.days)} complete and {len(seg.incomplete)} incomplete days")


def cmd_synth(cfg: RunConfig) -> str:
    spec = cfg.synth_spec()
    try:
        ds, truth = synthesize_dataset(spec)
    except SynthesisError as exc:
        raise CommandError(str(exc)) from None
    _write(_out(cfg, "dataset.csv"), dataset_to_csv(ds))
    doc = {
        "model": json.loads(truth.model.to_json()),
        "shifts": {"bolus_steps": truth.shifts.bolus_steps, "carb_steps": truth.shifts.carb_steps},
        "berger_bolus": asdict(truth.berger_bolus),
        "berger_carbs": asdict(truth.berger_carbs),
        "noise_sd": spec.noise_sd,
        "seed": spec.seed,
        "g0": {d.isoformat(): g for d, g in sorted(truth.g0.items())},
    }
    _write(_out(cfg, "ground_truth.json"), _json(doc))
    return f"synthesized {spec.n_days} days (seed {spec.seed}, noise sd {spec.noise_sd}) into {_out(cfg, 'dataset.csv')}"


def cmd_gridsearch(cfg: RunConfig) -> str:
    train, _ = split_days(cfg)
    sel = grid_search_shifts(train, cfg.shift_grid(), cfg.settings())
    _write(_out(cfg, "gridsearch_records.csv"), records_to_csv(sel.records))
    _write(_out(cfg, "shift_selection.json"), selection_to_json(sel, train))
    return (f"grid search over {len(train)} days and {len(sel.summary)} shifts: chose {sel.chosen} "
            f"(mean MAE {sel.summary[sel.chosen]:.3f} mg/dL)")


def cmd_fit(cfg: RunConfig) -> str:
    chosen, train_dates = load_chosen(cfg)
    records = records_from_csv(_read(_out(cfg, "gridsearch_records.csv"), "; run 'gridsearch' first"))
    train, _ = split_days(cfg)
    if [d.date.isoformat() for d in train] != train_dates:
        raise CommandError("training days differ from those in shift_selection.json; rerun 'gridsearch'")
    settings = cfg.settings()
    days = _prepare(train, settings)
    models = {(d.date, chosen): _fit(d, chosen, settings) for d in days}
    sel = ShiftSelection(chosen, {}, records, models)
    model = select_best_model(train, chosen, cfg.shift_grid(), settings, sel)
    _write(_out(cfg, "model.json"), model.to_json())
    return f"selected model from {model.provenance['train_day']}: {model}"


def _test_days(cfg: RunConfig, model: SparseModel):
    _, test = split_days(cfg)
    if not test:
        raise CommandError("no test days: every complete day is used for training")
    return test


def cmd_simulate(cfg: RunConfig) -> str:
    model = load_model(cfg)
    chosen, _ = load_chosen(cfg)
    report = evaluate_test(model, chosen, _test_days(cfg, model), cfg.settings())
    for ev in report.days:
        traj = ev.simulation.trajectory
        rows = [(format_timestamp(t), repr(float(p)), repr(float(a)))
                for t, p, a in zip(traj.times, traj.values, ev.actual)]
        _write(_out(cfg, f"trajectory_{ev.date.isoformat()}.csv"),
               _csv_text(("timestamp", "predicted", "actual"), rows))
    diverged = sum(ev.simulation.diverged for ev in report.days)
    return f"simulated {len(report.days)} test days ({diverged} diverged)"


def cmd_evaluate(cfg: RunConfig) -> str:
    model = load_model(cfg)
    chosen, _ = load_chosen(cfg)
    report = evaluate_test(model, chosen, _test_days(cfg, model), cfg.settings())
    rows = report.rows()
    _write(_out(cfg, "report.csv"), _csv_text(
        REPORT_COLUMNS + ("cm_unbeatable",),
        [[r["day"]] + [_num(r[c]) for c in REPORT_COLUMNS[1:]]
         + ([int(ev.cm_unbeatable)] if ev is not None else [""])
         for r, ev in zip(rows, list(report.days) + [None])]))
    avg = rows[-1]
    return (f"test average over {len(report.days)} days: MAE {avg['mae_sindy']:.3f} (model) vs "
            f"{avg['mae_cm']:.3f} (constant), RMSE {avg['rmse_sindy']:.3f} vs {avg['rmse_cm']:.3f}")


def cmd_report(cfg: RunConfig) -> str:
    out_dir = cfg["output.dir"]
    names = sorted(n for n in (os.listdir(out_dir) if os.path.isdir(out_dir) else [])
                   if n.startswith("trajectory_") and n.endswith(".csv"))
    if not names:
        raise CommandError(f"missing trajectory_<date>.csv in {out_dir}; run 'simulate' first")
    for name in names:
        day = name[len("trajectory_"):-len(".csv")]
        reader = csv.DictReader(io.StringIO(_read(os.path.join(out_dir, name))))
        rows = list(reader)
        if not rows:
            raise CommandError(f"{name} is empty")
        t0 = parse_timestamp(rows[0]["timestamp"])
        hours = [(parse_timestamp(r["timestamp"]) - t0).total_seconds() / 3600 for r in rows]
        actual = [float(r["actual"]) for r in rows]
        series = {"measured": actual, "model": [float(r["predicted"]) for r in rows],
                  "constant": [actual[0]] * len(actual)}
        _write(os.path.join(out_dir, f"plot_{day}.svg"),
               line_chart(hours, series, title=f"Glucose on {day}", x_label="hours since midnight",
                          y_label="glucose [mg/dL]"))
    return f"rendered {len(names)} plots into {out_dir}"


def cmd_pipeline(cfg: RunConfig) -> str:
    lines = [fn(cfg) for fn in (cmd_gridsearch, cmd_fit, cmd_simulate, cmd_evaluate, cmd_report)]
    return "\n".join(lines)


HANDLERS = {"ingest": cmd_ingest, "synth": cmd_synth, "gridsearch": cmd_gridsearch, "fit": cmd_fit,
            "simulate": cmd_simulate, "evaluate": cmd_evaluate, "report": cmd_report,
            "pipeline": cmd_pipeline}


def _overrides(tokens: Sequence[str]) -> list[tuple[str, str]]:
    pairs, i = [], 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or tok == "--":
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"option --{key} needs a value")
            value = tokens[i + 1]
            i += 2
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        pairs.append((key, value))
    return pairs


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="glucosindy",
        description="Sparse glucose-dynamics identification: data ingestion, shift search, fitting, "
                    "simulation and evaluation.",
        epilog="Any config key can be overridden with --key value, e.g. --sindy.threshold 2. "
               "Use 'glucosindy config' to print every key with its default.")
    p.add_argument("command", choices=COMMANDS + ("config",))
    p.add_argument("--config", help="config file (key = value lines) or a run_meta.json")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _parser()
    args, rest = parser.parse_known_args(argv)
    try:
        cfg = load_config(args.config, _overrides(rest))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.command == "config":
        sys.stdout.write(cfg.to_text())
        return 0
    try:
        summary = HANDLERS[args.command](cfg)
    except (CommandError, PipelineError, IngestError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _write(_out(cfg, "run_meta.json"), _json({"command": args.command, "version": __version__,
                                              "config": cfg.as_dict()}))
    print(summary)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
