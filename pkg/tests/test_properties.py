"""Property-based checks of invariants across modules."""

from datetime import timedelta

import numpy as np
from hypothesis import HealthCheck, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from glucosindy.absorption import BergerParams, bergerize
from glucosindy.config import RunConfig, _format_value, _parse_value, SCHEMA
from glucosindy.ingest import EventList
from glucosindy.lstsq import lstsq
from glucosindy.metrics import compute_metrics
from glucosindy.simulate import evaluate_rhs, simulate_many
from glucosindy.sindy import SparseModel, library_terms
from glucosindy.timeseries import UniformSeries, differentiate, resample_to_grid, shift_series

from conftest import T0

finite = st.floats(-1e3, 1e3, allow_nan=False)
TERMS = [t.name for t in library_terms(2, trig=True)]


@given(arrays(float, st.integers(2, 60), elements=finite), st.data())
def test_shift_preserves_mass_prefix(values, data):
    s = UniformSeries(T0, values)
    k = data.draw(st.integers(0, len(values) - 1))
    out = shift_series(s, k).values
    assert len(out) == len(values) and np.all(out[:k] == 0)
    np.testing.assert_array_equal(out[k:], values[:len(values) - k])


@given(arrays(float, st.integers(1, 50), elements=finite))
def test_grid_samples_round_trip(values):
    samples = [(T0 + timedelta(minutes=5 * i), float(v)) for i, v in enumerate(values)]
    np.testing.assert_allclose(resample_to_grid(samples, T0, len(values)).values, values)


@given(finite, finite, st.integers(3, 40))
def test_derivative_of_line_is_exact(a, b, n):
    s = UniformSeries(T0, a + b * np.arange(n))
    np.testing.assert_allclose(differentiate(s).values, b, atol=1e-9 * (1 + abs(a) + abs(b)))


@given(arrays(float, 20, elements=finite), arrays(float, 20, elements=finite))
def test_metric_inequalities(p, a):
    m = compute_metrics(p, a)
    assert 0 <= m.mae <= m.rmse * (1 + 1e-12) + 1e-12
    assert m.rmse <= m.mae * np.sqrt(20) * (1 + 1e-12) + 1e-12


@settings(suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(1, 6), st.integers(8, 30), st.integers(0, 2 ** 31))
def test_lstsq_matches_numpy(ncols, nrows, seed):
    rng = np.random.default_rng(seed)
    A, y = rng.normal(size=(nrows, ncols)), rng.normal(size=nrows)
    np.testing.assert_allclose(lstsq(A, y), np.linalg.lstsq(A, y, rcond=None)[0], atol=1e-9)


@given(st.dictionaries(st.sampled_from(TERMS), st.floats(-1e6, 1e6, allow_nan=False).filter(bool),
                       max_size=8))
def test_model_json_round_trip(coefs):
    m = SparseModel.from_dict(coefs)
    assert SparseModel.from_json(m.to_json()).same_as(m)


@given(st.dictionaries(st.sampled_from([t for t in TERMS if "(" not in t]),
                       st.floats(-1, 1, allow_nan=False), max_size=6),
       st.floats(50, 300), st.floats(0, 5), st.floats(0, 5), st.floats(0, 2))
def test_batched_rhs_agrees_with_scalar(coefs, G, C, B, b):
    # a tiny step recovers the slope of the vectorised right-hand side
    m = SparseModel.from_dict(coefs)
    h = 1e-6
    traj, _ = simulate_many([m], [{"C": np.array([C, C]), "B": np.array([B, B]), "b": np.array([b, b])}],
                            [G], dt=h, substeps=1, guard=(-1e12, 1e12))
    slope = (traj[0, 0, 1] - G) / h
    expected = evaluate_rhs(m, G, C, B, b)
    assert abs(slope - expected) <= 1e-3 * (1 + abs(expected))


@given(st.dictionaries(st.integers(0, 280), st.floats(0.1, 100), max_size=6))
def test_absorption_is_nonnegative_and_causal(events):
    start = T0
    ev = sorted((start + timedelta(minutes=5 * i), v) for i, v in events.items())
    series = bergerize(EventList("meal", ev), BergerParams(t50_form="affine"), start, 288)
    assert np.all(series.values >= -1e-12)
    if ev:
        first = int((ev[0][0] - start).total_seconds() // 300)
        assert np.all(series.values[:first + 1] == 0)


@given(st.sampled_from(sorted(k for k, v in SCHEMA.items() if v[0] in ("int", "float", "bool", "ints"))),
       st.data())
def test_config_values_round_trip(key, data):
    kind = SCHEMA[key][0]
    default = RunConfig.defaults()[key]
    assert _parse_value(key, kind, _format_value(default)) == default
