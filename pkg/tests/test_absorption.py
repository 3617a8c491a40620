from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from glucosindy.absorption import BergerParams, absorption_input, bergerize, cumulative_absorption, t50
from glucosindy.ingest import EventList

T0 = datetime(2027, 5, 13, tzinfo=timezone.utc)
PRODUCT, AFFINE = BergerParams(), BergerParams(t50_form="affine")


def test_t50_examples():
    assert t50(1.0, PRODUCT) == pytest.approx(213.2)
    assert t50(1.0, AFFINE) == pytest.approx(46.2)
    with pytest.raises(ValueError):
        t50(0.0, PRODUCT)
    with pytest.raises(ValueError, match="positive"):
        t50(1.0, BergerParams(a=-1.0, b=0.5, t50_form="affine"))


def test_params_validated():
    for bad in (dict(s=0.0), dict(k=0.0), dict(t50_form="linear")):
        with pytest.raises(ValueError):
            BergerParams(**bad)


@pytest.mark.parametrize("p", [PRODUCT, AFFINE])
@pytest.mark.parametrize("dose", [1.0, 10.0, 75.0])
def test_rate_is_derivative_of_cumulative(p, dose):
    half = t50(dose, p)
    t = np.linspace(0.05, 5.0, 200) * half
    h = 1e-4 * half
    numeric = (cumulative_absorption(dose, t + h, p) - cumulative_absorption(dose, t - h, p)) / (2 * h)
    np.testing.assert_allclose(absorption_input(dose, t, p), numeric, rtol=1e-6)


def test_rate_limits():
    assert absorption_input(5.0, 0.0, PRODUCT) == 0.0
    assert absorption_input(5.0, -3.0, PRODUCT) == 0.0
    assert absorption_input(5.0, 1e-9, PRODUCT) < 1e-9
    assert cumulative_absorption(5.0, t50(5.0, AFFINE), AFFINE) == pytest.approx(2.5, abs=1e-12)


@pytest.mark.parametrize("p", [PRODUCT, AFFINE])
def test_rate_quadrature_equals_dose(p):
    dose = 10.0
    half = t50(dose, p)
    t = np.linspace(0.0, 50 * half, 400001)
    assert np.trapezoid(absorption_input(dose, t, p), t) == pytest.approx(dose, rel=5e-3)


def test_empty_events_give_zeros():
    out = bergerize(EventList("bolus"), AFFINE, T0, 10)
    np.testing.assert_array_equal(out.values, np.zeros(10))


@pytest.mark.parametrize("k", [0.5, 1.0, 2.0])
def test_mass_balance_any_k(k):
    p = BergerParams(t50_form="affine", k=k)
    dose = 10.0
    length = int(50 * t50(dose, p) / 5) + 2
    s = bergerize(EventList("bolus", [(T0, dose)]), p, T0, length)
    assert k * np.trapezoid(s.values, dx=1.0) == pytest.approx(dose, rel=1e-2)
    assert s.values.min() >= 0.0 and s.values[0] == 0.0


def test_superposition():
    far = T0 + timedelta(hours=12)
    one = bergerize(EventList("bolus", [(T0, 3.0)]), AFFINE, T0, 288).values
    two = bergerize(EventList("bolus", [(far, 3.0)]), AFFINE, T0, 288).values
    both = bergerize(EventList("bolus", [(T0, 3.0), (far, 3.0)]), AFFINE, T0, 288).values
    np.testing.assert_allclose(both, one + two, atol=1e-12)


def test_matches_fine_reference():
    # substeps 4 against a 64-substep solution; the rate has a t**(s-1) kink at the dose
    ev = EventList("meal", [(T0 + timedelta(minutes=17), 50.0)])
    coarse = bergerize(ev, AFFINE, T0, 288).values
    fine = bergerize(ev, AFFINE, T0, 288, substeps=64).values
    assert np.max(np.abs(coarse - fine)) < 1e-3 * coarse.max()


def test_event_outside_grid_warns():
    late = T0 + timedelta(days=2)
    with pytest.warns(UserWarning, match="outside"):
        out = bergerize(EventList("bolus", [(late, 2.0)]), AFFINE, T0, 10)
    np.testing.assert_array_equal(out.values, np.zeros(10))
    early = T0 - timedelta(hours=1)
    with pytest.warns(UserWarning):
        tail = bergerize(EventList("bolus", [(early, 2.0)]), AFFINE, T0, 10)
    assert tail.values[-1] > 0


def test_time_unit_scales_rate_consistently():
    # same physical decay rate expressed in two time units
    ev = EventList("bolus", [(T0, 4.0)])
    five = bergerize(ev, AFFINE, T0, 100, time_unit_minutes=5.0)
    one = bergerize(ev, BergerParams(t50_form="affine", k=0.2), T0, 100, time_unit_minutes=1.0)
    np.testing.assert_allclose(one.values, five.values, rtol=1e-3, atol=1e-9)
