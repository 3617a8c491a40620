"""Forward simulation of a glucose model with exogenous inputs."""

from __future__ import annotations

from dataclasses import dataclass, field
import math
from datetime import datetime, timezone
from decimal import Decimal, localcontext
from typing import Mapping, Optional, Sequence

import numpy as np

from .sindy import VARIABLES, SparseModel, TermDescriptor, glucose_factor
from .timeseries import DEFAULT_STEP, DEFAULT_TIME_UNIT_MINUTES, UniformSeries, step_in_time_units

DEFAULT_GUARD = (0.0, 1000.0)

#: Fixed ten-term glucose model with literal coefficients (time unit unknown).
REFERENCE_MODEL = SparseModel.from_dict(
    {
        "1": -1.14,
        "b": 102.39,
        "C": -0.14,
        "G": -7.69,
        "B·b": -0.21,
        "b²": 648.80,
        "C·b": 12.80,
        "G·b": -185.42,
        "C·G": -0.96,
        "G²": 11.39,
    },
    provenance={"source": "reference"},
)


def _dec(x: float) -> Decimal:
    return Decimal(repr(float(x)))


def evaluate_rhs(model: SparseModel, G: float, C: float, B: float, b: float) -> float:
    """dG/dt of ``model`` at one state.

    Coefficients and state are taken at their shortest decimal value and
    combined in exact decimal arithmetic, rounded once to float, so the
    result matches hand arithmetic on the printed coefficient table.
    """
    state = {"G": G, "C": C, "B": B, "b": b}
    with localcontext() as ctx:
        ctx.prec = 60
        total = Decimal(0)
        for term, coef in zip(model.terms, model.coefficients):
            if term.func:
                factor = _dec(getattr(math, term.func)(float(state[term.var])))
            else:
                factor = Decimal(1)
                for v, e in term.powers.items():
                    factor *= _dec(state[v]) ** e
            total += _dec(coef) * factor
        return float(total)


@dataclass
class SimulationResult:
    trajectory: UniformSeries
    diverged: bool = False
    divergence_index: Optional[int] = None
    provenance: dict = field(default_factory=dict)


def _input_term(term: TermDescriptor) -> TermDescriptor:
    if term.func:
        return TermDescriptor() if term.var == "G" else term
    exps = list(term.exponents)
    exps[VARIABLES.index("G")] = 0
    return TermDescriptor(tuple(exps))


def simulate_many(models: Sequence[SparseModel], cells: Sequence[Mapping[str, np.ndarray]],
                  g0: Sequence[float], dt: float = 1.0, substeps: int = 4,
                  guard: tuple[float, float] = DEFAULT_GUARD):
    """Simulate every model on every input cell.

    ``cells`` are dicts with equal-length ``C``, ``B``, ``b`` arrays and
    ``g0[c]`` is the start value for cell ``c``. Inputs are held constant over
    each grid interval of length ``dt`` (model time units) and integrated with
    ``substeps`` RK4 steps. A trajectory leaving ``guard`` is clamped to the
    violated bound (upper bound for NaN) and frozen there.

    Returns ``(traj, diverged_at)`` with ``traj`` of shape
    ``(n_models, n_cells, T)`` and ``diverged_at`` of shape
    ``(n_models, n_cells)`` holding the first clamped index or -1.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    n_models, n_cells = len(models), len(cells)
    lengths = {len(c[v]) for c in cells for v in ("C", "B", "b")}
    if len(lengths) != 1:
        raise ValueError(f"input channels are misaligned (lengths {sorted(lengths)})")
    T = lengths.pop()
    g0 = np.asarray(g0, dtype=float)
    if g0.shape != (n_cells,):
        raise ValueError("need one start value per cell")

    # group each model's terms by their glucose factor; collect distinct input factors
    groups: dict[tuple, dict[TermDescriptor, np.ndarray]] = {}
    for m, model in enumerate(models):
        for term, coef in zip(model.terms, model.coefficients):
            gkey, iterm = term.glucose_part(), _input_term(term)
            groups.setdefault(gkey, {}).setdefault(iterm, np.zeros(n_models))[m] += coef
    keys = sorted(groups)
    features: dict[TermDescriptor, np.ndarray] = {}
    for gkey in keys:
        for iterm in groups[gkey]:
            if iterm not in features:
                features[iterm] = np.stack([
                    np.broadcast_to(iterm.evaluate({**c, "G": np.zeros(T)}), (T,)) for c in cells
                ]) if n_cells else np.zeros((0, T))

    q = {}
    with np.errstate(over="ignore", invalid="ignore"):
        for gkey in keys:
            acc = np.zeros((n_models, n_cells, T))
            for iterm in sorted(groups[gkey], key=lambda t: t.sort_key):
                acc += groups[gkey][iterm][:, None, None] * features[iterm][None]
            q[gkey] = np.ascontiguousarray(acc.reshape(n_models * n_cells, T).T)

    n = n_models * n_cells
    lo, hi = guard
    G = np.tile(g0, n_models)
    traj = np.empty((T, n))
    traj[0] = G
    diverged_at = np.full(n, -1)
    frozen = np.zeros(n, dtype=bool)
    clamp = np.zeros(n)
    h = dt / substeps
    poly = set(keys) <= {("pow", 0), ("pow", 1), ("pow", 2)}
    zero = np.zeros(n)

    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(T - 1):
            if poly:
                q0 = q[("pow", 0)][i] if ("pow", 0) in q else zero
                q1 = q[("pow", 1)][i] if ("pow", 1) in q else zero
                q2 = q[("pow", 2)][i] if ("pow", 2) in q else zero

                def f(x):
                    return q0 + x * (q1 + q2 * x)
            else:
                qi = [(key, q[key][i]) for key in keys]

                def f(x):
                    out = np.zeros(n)
                    for key, qk in qi:
                        out = out + qk * glucose_factor(key, x)
                    return out

            for _ in range(substeps):
                k1 = f(G)
                k2 = f(G + 0.5 * h * k1)
                k3 = f(G + 0.5 * h * k2)
                k4 = f(G + h * k3)
                G = G + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

            out = ~((G >= lo) & (G <= hi))
            if out.any():
                new = out & ~frozen
                if new.any():
                    clamp[new] = np.where(G[new] < lo, lo, hi)
                    diverged_at[new] = i + 1
                    frozen |= new
                G = np.where(frozen, clamp, G)
            traj[i + 1] = G

    return traj.T.reshape(n_models, n_cells, T), diverged_at.reshape(n_models, n_cells)


def simulate_day(model: SparseModel, g0: float, carbs: UniformSeries, bolus: UniformSeries,
                 basal: UniformSeries, substeps: int = 4, guard: tuple[float, float] = DEFAULT_GUARD,
                 time_unit_minutes: float = DEFAULT_TIME_UNIT_MINUTES) -> SimulationResult:
    """Integrate ``model`` from ``g0`` across the inputs' grid."""
    if not (carbs.aligned_with(bolus) and carbs.aligned_with(basal)):
        raise ValueError("carbs, bolus and basal series are not aligned")
    dt = step_in_time_units(carbs.step, time_unit_minutes)
    cell = {"C": carbs.values, "B": bolus.values, "b": basal.values}
    traj, div = simulate_many([model], [cell], [g0], dt, substeps, guard)
    idx = int(div[0, 0])
    return SimulationResult(carbs.with_values(traj[0, 0]), idx >= 0, idx if idx >= 0 else None,
                            dict(model.provenance))


def constant_model(g0: float, length: int, start: Optional[datetime] = None,
                   step: float = DEFAULT_STEP) -> UniformSeries:
    """Baseline predictor: the start value repeated over the horizon."""
    if length < 1:
        raise ValueError("length must be >= 1")
    start = start or datetime(1970, 1, 1, tzinfo=timezone.utc)
    return UniformSeries(start, np.full(length, float(g0)), step)
