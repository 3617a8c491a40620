"""Uniform 5-minute grid series, shifting, differentiation and day segmentation."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta, timezone
from typing import TYPE_CHECKING, Iterable, Optional, Sequence
from zoneinfo import ZoneInfo

import numpy as np

if TYPE_CHECKING:
    from .ingest import EventList

DEFAULT_STEP = 300.0
DEFAULT_MAX_GAP = 1800.0
DEFAULT_TIME_UNIT_MINUTES = 5.0


class IncompleteDayError(ValueError):
    """Raised when a gap on the grid is too long to be repaired."""

    def __init__(self, message: str, gaps: Sequence[tuple[datetime, datetime]] = ()):
        super().__init__(message)
        self.gaps = list(gaps)


@dataclass(frozen=True, eq=False)
class UniformSeries:
    """Values sampled on a fixed grid starting at ``start`` with spacing ``step`` seconds."""

    start: datetime
    values: np.ndarray
    step: float = DEFAULT_STEP

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step}")
        values = np.array(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("values must be one-dimensional")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    @property
    def times(self) -> list[datetime]:
        return [self.start + timedelta(seconds=self.step * i) for i in range(len(self))]

    @property
    def end(self) -> datetime:
        """Timestamp of the last grid point."""
        return self.start + timedelta(seconds=self.step * (len(self) - 1))

    def with_values(self, values) -> "UniformSeries":
        return UniformSeries(self.start, values, self.step)

    def aligned_with(self, other: "UniformSeries") -> bool:
        return self.start == other.start and self.step == other.step and len(self) == len(other)


@dataclass(frozen=True, order=True)
class ShiftConfig:
    """Delay applied to the absorbed bolus and carbohydrate channels, in grid steps."""

    bolus_steps: int
    carb_steps: int

    def __post_init__(self):
        if self.bolus_steps < 0 or self.carb_steps < 0:
            raise ValueError(f"shifts must be non-negative: {self}")

    def __str__(self) -> str:
        return f"(bolus={self.bolus_steps}, carbs={self.carb_steps})"


def shift_grid(bolus_steps: Iterable[int] = range(1, 7),
               carb_steps: Iterable[int] = range(1, 7)) -> list[ShiftConfig]:
    """All (bolus, carb) shift combinations, sorted lexicographically."""
    return sorted(ShiftConfig(b, c) for b, c in itertools.product(set(bolus_steps), set(carb_steps)))


def _to_utc(t: datetime) -> datetime:
    if t.tzinfo is None:
        raise ValueError(f"timestamp {t.isoformat()} has no timezone")
    return t.astimezone(timezone.utc)


def resample_to_grid(samples: Sequence[tuple[datetime, float]], start: datetime, length: int,
                     step: float = DEFAULT_STEP, max_gap: float = DEFAULT_MAX_GAP,
                     strict: bool = True) -> UniformSeries:
    """Map raw samples onto a uniform grid.

    Each sample goes to its nearest grid point (ties go to the earlier point);
    points sharing a grid point are averaged and samples outside the grid are
    dropped. Missing points are linearly interpolated between observed
    neighbours when the neighbours are at most ``max_gap`` seconds apart.
    Missing points before the first or after the last observation are held at
    that observation's value under the same limit. With ``strict`` any longer
    gap raises :class:`IncompleteDayError`; otherwise it is interpolated anyway.
    """
    if length < 1:
        raise ValueError("grid length must be >= 1")
    times = [t for t, _ in samples]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("samples must be sorted by timestamp")

    sums = np.zeros(length)
    counts = np.zeros(length, dtype=int)
    for t, v in samples:
        pos = (t - start).total_seconds() / step
        idx = math.ceil(pos - 0.5)
        if 0 <= idx < length:
            sums[idx] += v
            counts[idx] += 1

    grid_at = lambda i: start + timedelta(seconds=step * i)
    observed = np.flatnonzero(counts)
    if observed.size == 0:
        if strict:
            raise IncompleteDayError(
                f"no samples on grid {grid_at(0).isoformat()} .. {grid_at(length - 1).isoformat()}",
                [(grid_at(0), grid_at(length - 1))])
        return UniformSeries(start, np.zeros(length), step)

    values = np.full(length, np.nan)
    values[observed] = sums[observed] / counts[observed]

    # Leading/trailing runs measure from the grid edge; interior gaps between observations.
    spans = [(0, observed[0])] if observed[0] > 0 else []
    spans += [(a, b) for a, b in zip(observed[:-1], observed[1:]) if b - a > 1]
    if observed[-1] < length - 1:
        spans.append((observed[-1], length - 1))
    too_long = [(grid_at(a), grid_at(b)) for a, b in spans if (b - a) * step > max_gap]
    if too_long and strict:
        desc = ", ".join(f"{a.isoformat()} .. {b.isoformat()}" for a, b in too_long)
        raise IncompleteDayError(f"gap longer than {max_gap:g} s: {desc}", too_long)

    idx = np.arange(length)
    values = np.interp(idx, observed, values[observed])
    return UniformSeries(start, values, step)


def hold_to_grid(changes: Sequence[tuple[datetime, float]], start: datetime, length: int,
                 step: float = DEFAULT_STEP) -> UniformSeries:
    """Sample a step function (value changes at event times) with zero-order hold.

    Grid points before the first change take the first value.
    """
    if not changes:
        return UniformSeries(start, np.zeros(length), step)
    offsets = np.array([(t - start).total_seconds() for t, _ in changes])
    levels = np.array([v for _, v in changes], dtype=float)
    grid = np.arange(length) * step
    idx = np.searchsorted(offsets, grid, side="right") - 1
    return UniformSeries(start, levels[np.clip(idx, 0, None)], step)


def shift_series(s: UniformSeries, steps: int) -> UniformSeries:
    """Delay a series by ``steps`` grid points, zero-filling the head."""
    if steps < 0:
        raise ValueError("shift must be non-negative")
    if steps >= len(s):
        raise ValueError(f"shift of {steps} steps does not fit a series of length {len(s)}")
    out = np.zeros(len(s))
    out[steps:] = s.values[:len(s) - steps]
    return s.with_values(out)


def step_in_time_units(step: float, time_unit_minutes: float = DEFAULT_TIME_UNIT_MINUTES) -> float:
    return step / 60.0 / time_unit_minutes


def differentiate(s: UniformSeries, time_unit_minutes: float = DEFAULT_TIME_UNIT_MINUTES) -> UniformSeries:
    """Central differences inside, first-order one-sided differences at both ends.

    The derivative is per model time unit (``time_unit_minutes`` minutes).
    """
    if len(s) < 3:
        raise ValueError("differentiate needs at least 3 points")
    dt = step_in_time_units(s.step, time_unit_minutes)
    return s.with_values(np.gradient(s.values, dt, edge_order=1))


@dataclass(frozen=True, eq=False)
class DaySegment:
    """One calendar day of aligned channels.

    ``bolus_abs``/``carbs_abs`` hold the absorbed (and shifted, per ``shifts``)
    insulin and carbohydrate levels; they are ``None`` until preprocessing.
    """

    date: date
    glucose: UniformSeries
    basal: UniformSeries
    bolus_raw: "EventList"
    carbs_raw: "EventList"
    bolus_abs: Optional[UniformSeries] = None
    carbs_abs: Optional[UniformSeries] = None
    shifts: Optional[ShiftConfig] = None

    def __post_init__(self):
        for name in ("basal", "bolus_abs", "carbs_abs"):
            other = getattr(self, name)
            if other is not None and not self.glucose.aligned_with(other):
                raise ValueError(f"{name} is not aligned with glucose on {self.date}")

    def __len__(self) -> int:
        return len(self.glucose)

    @property
    def preprocessed(self) -> bool:
        return self.bolus_abs is not None and self.carbs_abs is not None

    def require_preprocessed(self) -> None:
        if not self.preprocessed:
            raise ValueError(f"day {self.date} has no absorbed bolus/carb channels; preprocess it first")

    def inputs(self) -> dict[str, np.ndarray]:
        """Channel arrays keyed by model variable name."""
        self.require_preprocessed()
        return {"B": self.bolus_abs.values, "C": self.carbs_abs.values,
                "G": self.glucose.values, "b": self.basal.values}

    def with_shifts(self, shifts: ShiftConfig) -> "DaySegment":
        """Apply shifts to unshifted absorbed channels."""
        self.require_preprocessed()
        if self.shifts not in (None, ShiftConfig(0, 0)):
            raise ValueError(f"day {self.date} is already shifted by {self.shifts}")
        return replace(self, bolus_abs=shift_series(self.bolus_abs, shifts.bolus_steps),
                       carbs_abs=shift_series(self.carbs_abs, shifts.carb_steps), shifts=shifts)


@dataclass
class IncompleteDay:
    date: date
    reason: str
    gaps: list = field(default_factory=list)


@dataclass
class Segmentation:
    days: list[DaySegment]
    incomplete: list[IncompleteDay]

    def split(self, n_train: int) -> tuple[list[DaySegment], list[DaySegment]]:
        """First ``n_train`` complete days for training, the rest for testing."""
        if not 0 < n_train <= len(self.days):
            raise ValueError(f"cannot take {n_train} training days from {len(self.days)} complete days")
        return self.days[:n_train], self.days[n_train:]


def day_bounds(d: date, tz: ZoneInfo) -> tuple[datetime, datetime]:
    start = datetime(d.year, d.month, d.day, tzinfo=tz)
    nxt = d + timedelta(days=1)
    end = datetime(nxt.year, nxt.month, nxt.day, tzinfo=tz)
    return start.astimezone(timezone.utc), end.astimezone(timezone.utc)


def segment_days(glucose: Sequence[tuple[datetime, float]], basal: Sequence[tuple[datetime, float]],
                 bolus: "EventList", meals: "EventList", tz: str = "UTC",
                 step: float = DEFAULT_STEP, max_gap: float = DEFAULT_MAX_GAP) -> Segmentation:
    """Cut the channels into calendar days at local midnight.

    A day is complete when its glucose can be gridded without a gap longer
    than ``max_gap``; other days are reported in ``incomplete``. Every glucose
    sample belongs to the day of its local calendar date. Basal is held from
    its most recent change, so it can carry across midnight.
    """
    zone = ZoneInfo(tz)
    glucose = sorted(glucose, key=lambda sv: sv[0])
    basal = sorted(basal, key=lambda sv: sv[0])
    by_date: dict[date, list] = {}
    for t, v in glucose:
        by_date.setdefault(_to_utc(t).astimezone(zone).date(), []).append((_to_utc(t), v))
    dates = set(by_date)
    for ev in (bolus, meals):
        dates.update(_to_utc(t).astimezone(zone).date() for t, _ in ev.events)

    days, incomplete = [], []
    for d in sorted(dates):
        start, end = day_bounds(d, zone)
        length = int(round((end - start).total_seconds() / step))
        samples = by_date.get(d, [])
        try:
            g = resample_to_grid(samples, start, length, step, max_gap, strict=True)
        except IncompleteDayError as exc:
            incomplete.append(IncompleteDay(d, str(exc), exc.gaps))
            continue
        b = hold_to_grid(basal, start, length, step)
        days.append(DaySegment(d, g, b, bolus.between(start, end), meals.between(start, end)))

    if not days:
        raise IncompleteDayError("no complete days in dataset",
                                 [gap for inc in incomplete for gap in inc.gaps])
    if len(days) == 1:
        warnings.warn("only one complete day; the shift grid search needs at least two", stacklevel=2)
    return Segmentation(days, incomplete)
