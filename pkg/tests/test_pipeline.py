import math

import numpy as np
import pytest

from glucosindy.pipeline import (GridSearchRecord, PipelineError, Settings, absorb_day, average_rows,
                                 evaluate_test, grid_search_shifts, select_best_model)
from glucosindy.sindy import SparseModel
from glucosindy.timeseries import ShiftConfig, shift_grid

from conftest import SYNTH_SETTINGS, synthetic

SMALL_GRID = shift_grid([2, 6], [1, 4])


@pytest.fixture(scope="module")
def days():
    return synthetic(n_days=6, noise_sd=2.0, seed=1)[0]


@pytest.fixture(scope="module")
def selection(days):
    return grid_search_shifts(days[:4], SMALL_GRID, SYNTH_SETTINGS)


def test_records_cover_every_cell(selection, days):
    n = 4
    assert len(selection.records) == n * (n - 1) * len(SMALL_GRID) ** 2
    assert all(r.train_day != r.eval_day for r in selection.records)
    keys = [r.sort_key for r in selection.records]
    assert keys == sorted(keys)


def test_recovers_planted_shift(selection):
    assert selection.chosen == ShiftConfig(6, 1)
    assert selection.summary[ShiftConfig(6, 1)] == min(selection.summary.values())
    assert all(len(v) == math.ceil(0.1 * 4) for v in selection.kept.values())


def test_selection_matches_recompute(selection, days):
    a = select_best_model(days[:4], selection.chosen, SMALL_GRID, SYNTH_SETTINGS, selection)
    b = select_best_model(days[:4], selection.chosen, SMALL_GRID, SYNTH_SETTINGS)
    assert a.same_as(b)
    assert a.provenance["validation_mae"] == pytest.approx(b.provenance["validation_mae"])
    assert a.support == {"1", "C", "B·G", "G·b"}


def test_parallel_is_identical(days):
    serial = grid_search_shifts(days[:3], SMALL_GRID, SYNTH_SETTINGS)
    from dataclasses import replace
    par = grid_search_shifts(days[:3], SMALL_GRID, replace(SYNTH_SETTINGS, jobs=2))
    assert serial.records == par.records and serial.summary == par.summary


def test_evaluation_beats_constant(selection, days):
    model = select_best_model(days[:4], selection.chosen, SMALL_GRID, SYNTH_SETTINGS, selection)
    report = evaluate_test(model, selection.chosen, days[4:], SYNTH_SETTINGS)
    avg = report.average()
    assert avg["mae_sindy"] < avg["mae_cm"] and avg["r2_sindy"] > 0.9
    assert [r["day"] for r in report.rows()][-1] == "Average"
    with pytest.raises(PipelineError, match="used for training"):
        evaluate_test(model, selection.chosen, days[:1], SYNTH_SETTINGS)


def test_failed_fits_are_charged(days):
    # an impossible threshold empties every model
    hard = Settings(berger_bolus=SYNTH_SETTINGS.berger_bolus, berger_carbs=SYNTH_SETTINGS.berger_carbs,
                    hyper=SYNTH_SETTINGS.hyper.__class__(threshold=1e9))
    with pytest.raises(PipelineError, match="every model fit failed"):
        grid_search_shifts(days[:2], SMALL_GRID, hard)


def test_argument_checks(days):
    with pytest.raises(PipelineError):
        grid_search_shifts(days[:1], SMALL_GRID, SYNTH_SETTINGS)
    with pytest.raises(PipelineError):
        grid_search_shifts(days[:2], [], SYNTH_SETTINGS)
    with pytest.raises(PipelineError, match="duplicate"):
        grid_search_shifts([days[0], days[0]], SMALL_GRID, SYNTH_SETTINGS)
    with pytest.raises(PipelineError):
        evaluate_test(SparseModel.from_dict({"1": 0.0}), ShiftConfig(1, 1), [], SYNTH_SETTINGS)
    with pytest.raises(ValueError):
        GridSearchRecord(days[0].date, ShiftConfig(1, 1), days[0].date, ShiftConfig(1, 1), 1.0)


def test_shifted_day_is_rejected(days):
    shifted = absorb_day(days[0], SYNTH_SETTINGS).with_shifts(ShiftConfig(2, 2))
    with pytest.raises(ValueError, match="unshifted"):
        grid_search_shifts([shifted, days[1]], SMALL_GRID, SYNTH_SETTINGS)


def test_average_rows_skips_undefined_r2():
    rows = [{"day": "a", "rmse_sindy": 1.0, "rmse_cm": 2.0, "mae_sindy": 1.0, "mae_cm": 2.0, "r2_sindy": None},
            {"day": "b", "rmse_sindy": 3.0, "rmse_cm": 4.0, "mae_sindy": 3.0, "mae_cm": 4.0, "r2_sindy": 0.5}]
    avg = average_rows(rows)
    assert avg["rmse_sindy"] == 2.0 and avg["r2_sindy"] == 0.5 and avg["day"] == "Average"
