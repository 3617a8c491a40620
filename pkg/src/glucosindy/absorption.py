"""Berger absorption of impulse doses into smooth plasma-level series.

A dose ``D`` given at time ``t_j`` is released at the rate

    r(t) = s * t**s * T50**s * D / (t * (T50**s + t**s)**2),   t = minutes since dose,

which is the time derivative of the cumulative absorption
``D * t**s / (T50**s + t**s)``. The plasma level follows

    dA/dt = sum_j r_j(t) - k * A

with ``A = 0`` at the first grid point.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from datetime import datetime
from typing import TYPE_CHECKING

import numpy as np
from scipy.signal import lfilter

from .timeseries import DEFAULT_STEP, DEFAULT_TIME_UNIT_MINUTES, UniformSeries, step_in_time_units

if TYPE_CHECKING:
    from .ingest import EventList

T50_FORMS = ("product", "affine")


@dataclass(frozen=True)
class BergerParams:
    """Shape ``s``, T50 coefficients ``a``/``b`` and decay rate ``k`` (per model time unit)."""

    s: float = 1.6
    a: float = 5.2
    b: float = 41.0
    t50_form: str = "product"
    k: float = 1.0

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"berger s must be positive, got {self.s}")
        if not self.k > 0:
            raise ValueError(f"berger k must be positive, got {self.k}")
        if self.t50_form not in T50_FORMS:
            raise ValueError(f"t50_form must be one of {T50_FORMS}, got {self.t50_form!r}")


def t50(dose: float, p: BergerParams) -> float:
    """Minutes until half of ``dose`` is absorbed."""
    if not dose > 0:
        raise ValueError(f"dose must be positive, got {dose}")
    value = p.a * dose * p.b if p.t50_form == "product" else p.a * dose + p.b
    if not value > 0:
        raise ValueError(f"T50 = {value} for dose {dose}; must be positive")
    return value


def cumulative_absorption(dose: float, t, p: BergerParams):
    """Amount of ``dose`` absorbed after ``t`` minutes (0 for t <= 0)."""
    t = np.asarray(t, dtype=float)
    half = t50(dose, p)
    tp = np.clip(t, 0.0, None)
    ts = tp ** p.s
    return dose * ts / (half ** p.s + ts)


def absorption_input(dose: float, t, p: BergerParams):
    """Absorption rate in dose per minute, ``t`` minutes after the dose.

    Zero for ``t <= 0``.
    """
    t = np.asarray(t, dtype=float)
    half = t50(dose, p)
    pos = t > 0
    tp = np.where(pos, t, 1.0)
    ts = tp ** p.s
    hs = half ** p.s
    rate = p.s * ts * hs * dose / (tp * (hs + ts) ** 2)
    return np.where(pos, rate, 0.0)


def bergerize(events: "EventList", p: BergerParams, start: datetime, length: int,
              step: float = DEFAULT_STEP, time_unit_minutes: float = DEFAULT_TIME_UNIT_MINUTES,
              substeps: int = 4) -> UniformSeries:
    """Integrate the absorption ODE for all ``events`` onto a grid.

    Fixed-step RK4 with ``substeps`` steps per grid interval. The ODE is linear
    in ``A``, so each RK4 step reduces to ``A[n+1] = P * A[n] + g[n]`` where
    ``P`` is the RK4 stability polynomial at ``-k*h`` and ``g[n]`` collects the
    forcing terms; the recurrence is run with a first-order IIR filter.
    Events before ``start`` contribute their remaining tail; events after the
    grid end contribute nothing.
    """
    if length < 1:
        raise ValueError("grid length must be >= 1")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    grid_end = (length - 1) * step
    offsets = np.array([(t - start).total_seconds() for t, _ in events.events])  # seconds
    doses = np.array([d for _, d in events.events], dtype=float)
    outside = (offsets < 0) | (offsets > grid_end)
    if outside.any():
        warnings.warn(f"{int(outside.sum())} {events.kind} event(s) outside the grid span; "
                      "only their in-span absorption is used", stacklevel=2)
    keep = offsets <= grid_end
    offsets, doses = offsets[keep], doses[keep]
    if length == 1 or doses.size == 0:
        return UniformSeries(start, np.zeros(length), step)

    n = (length - 1) * substeps
    h = step_in_time_units(step, time_unit_minutes) / substeps      # model time units
    h_min = step / 60.0 / substeps                                    # minutes
    # rate at substep starts, midpoints and ends, converted to dose per model time unit
    t_half = np.arange(2 * n + 1) * (h_min / 2)
    rate = np.zeros_like(t_half)
    for dose, off in zip(doses, offsets):
        rate += absorption_input(dose, t_half - off / 60.0, p)
    rate *= time_unit_minutes
    u0, um, u1 = rate[0:-1:2], rate[1::2], rate[2::2]

    z = -p.k * h
    f1 = u0
    f2 = um + 0.5 * z * f1
    f3 = um + 0.5 * z * f2
    f4 = u1 + z * f3
    g = h / 6.0 * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
    growth = 1.0 + z + z * z / 2.0 + z ** 3 / 6.0 + z ** 4 / 24.0
    a = np.concatenate(([0.0], lfilter([1.0], [1.0, -growth], g)))
    values = a[::substeps]
    # RK4 keeps A >= 0 for non-negative forcing up to rounding
    return UniformSeries(start, np.clip(values, 0.0, None), step)
