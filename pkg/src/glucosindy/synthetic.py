"""Synthetic patient datasets with a planted glucose model and planted shifts."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Optional

import numpy as np

from .absorption import BergerParams, bergerize
from .ingest import EventList, PatientDataset
from .simulate import DEFAULT_GUARD, simulate_many
from .sindy import SparseModel
from .timeseries import (DEFAULT_STEP, DEFAULT_TIME_UNIT_MINUTES, ShiftConfig, day_bounds,
                         shift_series, step_in_time_units)

#: Planted model used by default: constant glucose production, carbs raise
#: glucose, basal and absorbed bolus insulin clear it in proportion to glucose.
DEFAULT_TRUE_MODEL = SparseModel.from_dict({"1": 12.0, "C": 30.0, "B·G": -0.5, "G·b": -0.12},
                                           provenance={"source": "planted"})

#: Absorption used for synthetic data: the affine half-absorption time gives
#: meal and bolus curves that peak within hours.
SYNTHETIC_BERGER = BergerParams(t50_form="affine")

#: Threshold suited to the default planted model (normalized coefficient space).
SYNTHETIC_THRESHOLD = 2.0

# (hour, minutes of jitter) for main meals and optional snacks
MAIN_MEALS = ((7.5, 45), (12.5, 45), (18.5, 45))
SNACKS = ((10.0, 40), (15.5, 40), (21.0, 40))
BASAL_HOURS = (0, 3, 6, 9, 12, 15, 18, 21)
BASAL_PROFILE = (0.7, 0.8, 1.1, 1.0, 0.9, 0.9, 1.0, 0.8)  # U/h


class SynthesisError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    n_days: int = 17
    true_model: SparseModel = DEFAULT_TRUE_MODEL
    true_shifts: ShiftConfig = ShiftConfig(6, 1)
    noise_sd: float = 0.0
    seed: int = 0
    g0: float = 120.0
    start_date: date = date(2027, 5, 1)
    meals_per_day: tuple = (3, 5)
    carbs_range: tuple = (20.0, 80.0)      # grams per meal
    carb_ratio: float = 10.0                # grams per bolus unit
    bolus_jitter: float = 0.3               # relative dose noise
    bolus_offset: tuple = (-20.0, 15.0)     # minutes relative to the meal
    correction_prob: float = 0.3            # chance of an extra bolus per day
    basal_jitter: float = 0.15             # day-level relative scaling
    basal_segment_jitter: float = 0.4      # per-segment relative variation
    berger_bolus: BergerParams = SYNTHETIC_BERGER
    berger_carbs: BergerParams = SYNTHETIC_BERGER
    time_unit_minutes: float = DEFAULT_TIME_UNIT_MINUTES
    step: float = DEFAULT_STEP
    substeps: int = 4
    guard: tuple = DEFAULT_GUARD
    tz: str = "UTC"

    def __post_init__(self):
        if self.n_days < 1:
            raise ValueError("n_days must be >= 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if any(t.powers.get("G", 0) > 0 and t.func for t in self.true_model.terms):
            raise ValueError("true_model must be a model of G")


@dataclass
class GroundTruth:
    model: SparseModel
    shifts: ShiftConfig
    berger_bolus: BergerParams
    berger_carbs: BergerParams
    clean_glucose: dict = field(default_factory=dict)   # date -> noiseless values
    g0: dict = field(default_factory=dict)              # date -> start value


def _day_schedule(rng: np.random.Generator, spec: SynthSpec, day_start):
    n_meals = int(rng.integers(spec.meals_per_day[0], spec.meals_per_day[1] + 1))
    n_snacks = max(n_meals - len(MAIN_MEALS), 0)
    snacks = sorted(rng.choice(len(SNACKS), size=n_snacks, replace=False)) if n_snacks else []
    slots = sorted(list(MAIN_MEALS[:n_meals]) + [SNACKS[i] for i in snacks])
    meals, boluses = [], []
    for hour, jitter in slots:
        minute = int(round(hour * 60 + rng.uniform(-jitter, jitter)))
        grams = float(round(rng.uniform(*spec.carbs_range)))
        meals.append((day_start + timedelta(minutes=minute), grams))
        dose = round(grams / spec.carb_ratio * rng.uniform(1 - spec.bolus_jitter, 1 + spec.bolus_jitter), 1)
        offset = int(round(rng.uniform(*spec.bolus_offset)))
        if dose > 0:
            boluses.append((day_start + timedelta(minutes=minute + offset), dose))
    if rng.random() < spec.correction_prob:
        minute = int(rng.integers(60, 23 * 60))
        boluses.append((day_start + timedelta(minutes=minute), float(round(rng.uniform(0.5, 3.0), 1))))
    level = 1.0 + rng.uniform(-spec.basal_jitter, spec.basal_jitter)
    basal = [(day_start + timedelta(hours=h), round(r * level * rng.uniform(1 - spec.basal_segment_jitter, 1 + spec.basal_segment_jitter), 3))
             for h, r in zip(BASAL_HOURS, BASAL_PROFILE)]

    def dedupe(events):
        out = {}
        for t, v in sorted(events):
            while t in out:
                t += timedelta(minutes=1)
            out[t] = v
        return sorted(out.items())

    return dedupe(meals), dedupe(boluses), basal


def synthesize_dataset(spec: SynthSpec) -> tuple[PatientDataset, GroundTruth]:
    """Generate ``spec.n_days`` days of raw data from the planted model.

    Per day: draw meals, boluses and a basal profile; absorb the day's own
    events, delay them by the planted shifts, integrate the planted model from
    the previous day's last glucose value, and add Gaussian noise. The emitted
    dataset holds raw events, not absorbed series.
    """
    from zoneinfo import ZoneInfo

    rng = np.random.default_rng(spec.seed)
    zone = ZoneInfo(spec.tz)
    dt = step_in_time_units(spec.step, spec.time_unit_minutes)
    truth = GroundTruth(spec.true_model, spec.true_shifts, spec.berger_bolus, spec.berger_carbs)
    glucose, basal_changes, all_meals, all_boluses = [], [], [], []
    g0 = spec.g0
    for k in range(spec.n_days):
        d = spec.start_date + timedelta(days=k)
        start, end = day_bounds(d, zone)
        length = int(round((end - start).total_seconds() / spec.step))
        meals, boluses, basal = _day_schedule(rng, spec, start)
        # noise drawn here so the stream does not depend on model behaviour
        noise = rng.normal(0.0, spec.noise_sd, size=length) if spec.noise_sd > 0 else np.zeros(length)

        carbs_abs = bergerize(EventList("meal", meals), spec.berger_carbs, start, length, spec.step,
                              spec.time_unit_minutes, spec.substeps)
        bolus_abs = bergerize(EventList("bolus", boluses), spec.berger_bolus, start, length, spec.step,
                              spec.time_unit_minutes, spec.substeps)
        carbs_abs = shift_series(carbs_abs, spec.true_shifts.carb_steps)
        bolus_abs = shift_series(bolus_abs, spec.true_shifts.bolus_steps)
        levels = np.array([v for _, v in basal])
        idx = np.searchsorted([(t - start).total_seconds() for t, _ in basal],
                              np.arange(length) * spec.step, side="right") - 1
        cell = {"C": carbs_abs.values, "B": bolus_abs.values, "b": levels[idx]}
        traj, div = simulate_many([spec.true_model], [cell], [g0], dt, spec.substeps, spec.guard)
        if div[0, 0] >= 0:
            raise SynthesisError(f"planted model left the guard band on day {k + 1} ({d}); "
                                 "use a more stable model or gentler inputs")
        clean = traj[0, 0]
        truth.clean_glucose[d] = clean
        truth.g0[d] = g0
        observed = clean + noise
        glucose += [(start + timedelta(seconds=spec.step * i), float(v)) for i, v in enumerate(observed)]
        basal_changes += basal
        all_meals += meals
        all_boluses += boluses
        g0 = float(clean[-1])

    ds = PatientDataset(f"synthetic-{spec.seed}", glucose, basal_changes,
                        EventList("bolus", all_boluses), EventList("meal", all_meals))
    return ds, truth
