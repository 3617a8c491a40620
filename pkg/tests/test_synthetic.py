import numpy as np
import pytest

from glucosindy.sindy import SparseModel
from glucosindy.synthetic import DEFAULT_TRUE_MODEL, SynthesisError, SynthSpec, synthesize_dataset
from glucosindy.timeseries import ShiftConfig, segment_days

from conftest import synthetic


def test_deterministic_per_seed():
    a, _ = synthesize_dataset(SynthSpec(n_days=2, seed=3, noise_sd=2.0))
    b, _ = synthesize_dataset(SynthSpec(n_days=2, seed=3, noise_sd=2.0))
    c, _ = synthesize_dataset(SynthSpec(n_days=2, seed=4, noise_sd=2.0))
    assert a.glucose == b.glucose and a.meals.events == b.meals.events
    assert a.glucose != c.glucose


def test_days_are_complete_and_continuous():
    days, truth = synthetic(n_days=3)
    assert [len(d) for d in days] == [288] * 3
    assert truth.model.same_as(DEFAULT_TRUE_MODEL) and truth.shifts == ShiftConfig(6, 1)
    for prev, nxt in zip(days, days[1:]):
        clean_prev = truth.clean_glucose[prev.date]
        assert truth.g0[nxt.date] == clean_prev[-1]
    for d in days:
        np.testing.assert_allclose(d.glucose.values, truth.clean_glucose[d.date])
        assert 40 < d.glucose.values.min() and d.glucose.values.max() < 600


def test_noise_level():
    days, truth = synthetic(n_days=3, noise_sd=2.0)
    resid = np.concatenate([d.glucose.values - truth.clean_glucose[d.date] for d in days])
    assert resid.std() == pytest.approx(2.0, rel=0.1)


def test_basal_varies_within_day():
    days, _ = synthetic(n_days=2)
    for d in days:
        assert len(np.unique(d.basal.values)) > 3


def test_unstable_model_is_reported():
    with pytest.raises(SynthesisError, match="guard"):
        synthesize_dataset(SynthSpec(n_days=1, true_model=SparseModel.from_dict({"G²": 0.01})))


def test_validation():
    with pytest.raises(ValueError):
        SynthSpec(n_days=0)
    with pytest.raises(ValueError):
        SynthSpec(noise_sd=-1)


def test_timezone_segmentation():
    ds, _ = synthesize_dataset(SynthSpec(n_days=2, tz="Europe/Berlin"))
    seg = segment_days(ds.glucose, ds.basal, ds.bolus, ds.meals, tz="Europe/Berlin")
    assert len(seg.days) == 2
