"""Three-step protocol: robust shift search, cross-day model selection, test evaluation.

Step 1 fits one model per (training day, shift) and simulates every model on
every *other* training day under every shift. Each model is summarised by the
median of its MAEs; per training shift the best ``ceil(10%)`` models are kept,
and the shift wins whose kept models have the lowest mean MAE on the other
days preprocessed with that same shift.
Step 2 picks, among the models fitted under the winning shift, the one with the
lowest mean MAE over its evaluation records. Step 3 simulates held-out days
from their first glucose value and compares with the constant baseline.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import date
from typing import Optional, Sequence

import numpy as np

from .absorption import BergerParams, bergerize
from .metrics import MetricsRecord, compute_metrics, mean_absolute_error, median_error
from .simulate import DEFAULT_GUARD, SimulationResult, constant_model, simulate_day, simulate_many
from .sindy import FitError, SindyHyper, SparseModel, fit_day
from .timeseries import (DEFAULT_TIME_UNIT_MINUTES, DaySegment, ShiftConfig, shift_series,
                         step_in_time_units)

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    pass


@dataclass(frozen=True)
class Settings:
    """Everything the protocol needs besides the data."""

    berger_bolus: BergerParams = BergerParams()
    berger_carbs: BergerParams = BergerParams()
    hyper: SindyHyper = SindyHyper()
    substeps: int = 4
    guard: tuple = DEFAULT_GUARD
    time_unit_minutes: float = DEFAULT_TIME_UNIT_MINUTES
    top_fraction: float = 0.10
    jobs: int = 1

    @property
    def failure_mae(self) -> float:
        """Error charged to a cell whose model could not be fitted."""
        return float(self.guard[1] - self.guard[0])


@dataclass(frozen=True)
class GridSearchRecord:
    train_day: date
    train_shifts: ShiftConfig
    eval_day: date
    eval_shifts: ShiftConfig
    mae: float
    diverged: bool = False
    failed: bool = False

    def __post_init__(self):
        if self.train_day == self.eval_day:
            raise ValueError("a model is never scored on its own training day")

    @property
    def sort_key(self) -> tuple:
        return (self.train_day, self.train_shifts, self.eval_day, self.eval_shifts)


@dataclass
class ShiftSelection:
    chosen: ShiftConfig
    summary: dict            # ShiftConfig -> mean matched-shift MAE of the kept models
    records: list            # sorted GridSearchRecords
    models: dict = field(default_factory=dict)   # (date, ShiftConfig) -> SparseModel | None
    kept: dict = field(default_factory=dict)     # ShiftConfig -> kept training dates


def absorb_day(day: DaySegment, settings: Settings = Settings()) -> DaySegment:
    """Attach unshifted absorbed bolus and carb channels to a day."""
    g = day.glucose
    bolus = bergerize(day.bolus_raw, settings.berger_bolus, g.start, len(g), g.step,
                      settings.time_unit_minutes, settings.substeps)
    carbs = bergerize(day.carbs_raw, settings.berger_carbs, g.start, len(g), g.step,
                      settings.time_unit_minutes, settings.substeps)
    return replace(day, bolus_abs=bolus, carbs_abs=carbs, shifts=ShiftConfig(0, 0))


def _base(day: DaySegment, settings: Settings) -> DaySegment:
    if day.preprocessed:
        if day.shifts not in (None, ShiftConfig(0, 0)):
            raise ValueError(f"day {day.date} must be unshifted, got {day.shifts}")
        return day
    return absorb_day(day, settings)


def _cell(day: DaySegment, shifts: ShiftConfig) -> dict:
    return {"C": shift_series(day.carbs_abs, shifts.carb_steps).values,
            "B": shift_series(day.bolus_abs, shifts.bolus_steps).values,
            "b": day.basal.values}


def _fit(day: DaySegment, shifts: ShiftConfig, settings: Settings) -> Optional[SparseModel]:
    try:
        return fit_day(day, shifts, settings.hyper, settings.time_unit_minutes)
    except FitError as exc:
        log.info("%s", exc)
        return None


def _score_models(models: Sequence[Optional[SparseModel]], eval_days: Sequence[DaySegment],
                  shifts: Sequence[ShiftConfig], settings: Settings):
    """MAE and divergence flags, shape ``(n_models, n_days, n_shifts)``."""
    n_m, n_d, n_s = len(models), len(eval_days), len(shifts)
    mae = np.full((n_m, n_d, n_s), settings.failure_mae)
    div = np.ones((n_m, n_d, n_s), dtype=bool)
    live = [i for i, m in enumerate(models) if m is not None]
    if not live or not eval_days:
        return mae, div
    by_length: dict[int, list[int]] = {}
    for j, d in enumerate(eval_days):
        by_length.setdefault(len(d), []).append(j)
    for length, idx in sorted(by_length.items()):
        days = [eval_days[j] for j in idx]
        cells = [_cell(d, s) for d in days for s in shifts]
        g0 = [d.glucose.values[0] for d in days for _ in shifts]
        dt = step_in_time_units(days[0].glucose.step, settings.time_unit_minutes)
        traj, diverged_at = simulate_many([models[i] for i in live], cells, g0, dt,
                                          settings.substeps, settings.guard)
        actual = np.stack([d.glucose.values for d in days for _ in shifts])
        err = mean_absolute_error(traj, actual[None], axis=-1)
        for k, i in enumerate(live):
            mae[i, idx] = err[k].reshape(len(days), n_s)
            div[i, idx] = (diverged_at[k] >= 0).reshape(len(days), n_s)
    return mae, div


def _train_day_task(args):
    """Fit every shift on one training day and score the models on all other days."""
    k, days, shifts, settings = args
    train = days[k]
    others = [d for j, d in enumerate(days) if j != k]
    models = [_fit(train, s, settings) for s in shifts]
    mae, div = _score_models(models, others, shifts, settings)
    records = []
    for i, ts in enumerate(shifts):
        for j, ev in enumerate(others):
            for l, es in enumerate(shifts):
                records.append(GridSearchRecord(train.date, ts, ev.date, es, float(mae[i, j, l]),
                                                bool(div[i, j, l]), models[i] is None))
    return train.date, models, records


def _map(fn, tasks, jobs: int):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _prepare(days: Sequence[DaySegment], settings: Settings) -> list[DaySegment]:
    days = sorted((_base(d, settings) for d in days), key=lambda d: d.date)
    dates = [d.date for d in days]
    if len(set(dates)) != len(dates):
        raise PipelineError("duplicate day dates")
    return days


def grid_search_shifts(train_days: Sequence[DaySegment], shift_grid: Sequence[ShiftConfig],
                       settings: Settings = Settings()) -> ShiftSelection:
    """Step 1: choose the shift whose best-ranked models generalise best across days."""
    if len(train_days) < 2:
        raise PipelineError("the shift grid search needs at least 2 training days")
    shifts = sorted(set(shift_grid))
    if not shifts:
        raise PipelineError("empty shift grid")
    days = _prepare(train_days, settings)

    tasks = [(k, days, shifts, settings) for k in range(len(days))]
    results = _map(_train_day_task, tasks, settings.jobs)
    models, records = {}, []
    for d, day_models, day_records in results:
        for s, m in zip(shifts, day_models):
            models[(d, s)] = m
        records.extend(day_records)
    records.sort(key=lambda r: r.sort_key)
    if all(r.failed for r in records):
        raise PipelineError("every model fit failed; nothing to rank")

    per_model: dict[tuple, list[float]] = {}
    matched: dict[tuple, list[float]] = {}
    for r in records:
        per_model.setdefault((r.train_day, r.train_shifts), []).append(r.mae)
        if r.eval_shifts == r.train_shifts:
            matched.setdefault((r.train_day, r.train_shifts), []).append(r.mae)

    summary, kept = {}, {}
    for s in shifts:
        ranked = sorted((median_error(per_model[(d.date, s)]), d.date) for d in days)
        n_keep = max(1, math.ceil(settings.top_fraction * len(ranked) - 1e-9))
        chosen_days = [d for _, d in ranked[:n_keep]]
        kept[s] = chosen_days
        summary[s] = float(np.mean([e for d in chosen_days for e in matched[(d, s)]]))
    chosen = min(shifts, key=lambda s: (summary[s], s))
    return ShiftSelection(chosen, summary, records, models, kept)


def select_best_model(train_days: Sequence[DaySegment], chosen: ShiftConfig,
                      shift_grid: Sequence[ShiftConfig], settings: Settings = Settings(),
                      selection: Optional[ShiftSelection] = None) -> SparseModel:
    """Step 2: among models fitted under ``chosen``, pick the lowest mean error on the other days.

    Reuses the models and records of ``selection`` when given. Ties go to the
    earlier date.
    """
    days = _prepare(train_days, settings)
    shifts = sorted(set(shift_grid))
    if selection is not None:
        models = {d.date: selection.models.get((d.date, chosen)) for d in days}
        scores: dict[date, list[float]] = {d.date: [] for d in days}
        for r in selection.records:
            if r.train_shifts == chosen and r.train_day in scores:
                scores[r.train_day].append(r.mae)
        missing = [d for d, v in scores.items() if not v]
        if missing:
            raise PipelineError(f"selection has no records for days {missing} under {chosen}")
    else:
        models, scores = {}, {}
        for k, train in enumerate(days):
            others = [d for j, d in enumerate(days) if j != k]
            m = _fit(train, chosen, settings)
            mae, _ = _score_models([m], others, shifts, settings)
            models[train.date] = m
            scores[train.date] = list(mae.ravel())

    candidates = [(float(np.mean(scores[d])), d) for d in sorted(scores) if models[d] is not None]
    if not candidates:
        raise PipelineError(f"no model could be fitted under shifts {chosen}")
    best_score, best_day = min(candidates)
    if best_score >= settings.failure_mae:
        raise PipelineError("every candidate model diverges on every validation cell")
    model = models[best_day]
    return replace(model, provenance={**model.provenance, "validation_mae": best_score,
                                      "train_days": [d.isoformat() for d in sorted(scores)]})


@dataclass
class DayEvaluation:
    date: date
    sindy: MetricsRecord
    cm: MetricsRecord
    simulation: SimulationResult
    actual: np.ndarray

    @property
    def cm_unbeatable(self) -> bool:
        """The constant model is exact on this day."""
        return self.cm.mae == 0.0 and self.cm.rmse == 0.0


@dataclass
class EvaluationReport:
    days: list[DayEvaluation]

    def average(self) -> dict:
        return average_rows([report_row(d) for d in self.days])

    def rows(self) -> list[dict]:
        return [report_row(d) for d in self.days] + [self.average()]


REPORT_COLUMNS = ("day", "rmse_sindy", "rmse_cm", "mae_sindy", "mae_cm", "r2_sindy")


def report_row(ev: DayEvaluation) -> dict:
    return {"day": ev.date.isoformat(), "rmse_sindy": ev.sindy.rmse, "rmse_cm": ev.cm.rmse,
            "mae_sindy": ev.sindy.mae, "mae_cm": ev.cm.mae, "r2_sindy": ev.sindy.r2}


def average_rows(rows: Sequence[dict]) -> dict:
    """Per-column mean over day rows; undefined R² values are skipped."""
    out = {"day": "Average"}
    for col in REPORT_COLUMNS[1:]:
        vals = [r[col] for r in rows if r[col] is not None]
        out[col] = float(np.mean(vals)) if vals else None
    return out


def evaluate_test(model: SparseModel, chosen: ShiftConfig, test_days: Sequence[DaySegment],
                  settings: Settings = Settings()) -> EvaluationReport:
    """Step 3: simulate each held-out day from its first glucose value."""
    if not test_days:
        raise PipelineError("empty test set")
    trained_on = set(model.provenance.get("train_days", []))
    if "train_day" in model.provenance:
        trained_on.add(model.provenance["train_day"])
    out = []
    for day in sorted(test_days, key=lambda d: d.date):
        if day.date.isoformat() in trained_on:
            raise PipelineError(f"test day {day.date} was used for training")
        shifted = _base(day, settings).with_shifts(chosen)
        g = shifted.glucose
        sim = simulate_day(model, float(g.values[0]), shifted.carbs_abs, shifted.bolus_abs,
                           shifted.basal, settings.substeps, settings.guard, settings.time_unit_minutes)
        cm = constant_model(g.values[0], len(g), g.start, g.step)
        out.append(DayEvaluation(day.date, compute_metrics(sim.trajectory, g),
                                 compute_metrics(cm, g), sim, g.values))
    return EvaluationReport(out)
