"""Prediction error measures."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class MetricsRecord:
    """MAE and RMSE in mg/dL; ``r2`` is the squared Pearson correlation, ``None`` when undefined."""

    mae: float
    rmse: float
    r2: Optional[float]
    n: int


def _values(s) -> np.ndarray:
    return np.asarray(getattr(s, "values", s), dtype=float)


def compute_metrics(predicted, actual) -> MetricsRecord:
    p, a = _values(predicted), _values(actual)
    if p.shape != a.shape or p.ndim != 1:
        raise ValueError(f"length mismatch: {p.shape} vs {a.shape}")
    if len(p) < 2:
        raise ValueError("need at least 2 points")
    err = p - a
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err * err)))
    r2 = None
    dp, da = p - p.mean(), a - a.mean()
    sp, sa = float(dp @ dp), float(da @ da)
    denom = math.sqrt(sp) * math.sqrt(sa)  # separate roots avoid underflow
    if denom > 0:
        r = float(dp @ da) / denom
        r2 = min(r * r, 1.0)
    return MetricsRecord(mae, rmse, r2, len(p))


def mean_absolute_error(predicted: np.ndarray, actual: np.ndarray, axis=-1) -> np.ndarray:
    """Vectorised MAE along ``axis``."""
    return np.mean(np.abs(np.asarray(predicted) - np.asarray(actual)), axis=axis)


def median_error(errors: Sequence[float]) -> float:
    if len(errors) == 0:
        raise ValueError("median of an empty list")
    return float(np.median(np.asarray(errors, dtype=float)))
