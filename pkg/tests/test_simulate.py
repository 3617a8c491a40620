import math

import numpy as np
import pytest

from glucosindy.simulate import (REFERENCE_MODEL, constant_model, evaluate_rhs, simulate_day,
                                 simulate_many)
from glucosindy.sindy import SparseModel
from glucosindy.timeseries import UniformSeries

DECAY = SparseModel.from_dict({"G": -0.1})


def inputs(t0, n, carbs=0.0, bolus=0.0, basal=0.0):
    s = UniformSeries(t0, np.zeros(n))
    return (s.with_values(np.full(n, carbs)), s.with_values(np.full(n, bolus)),
            s.with_values(np.full(n, basal)))


class TestEvaluateRhs:
    def test_reference_values(self):
        assert evaluate_rhs(REFERENCE_MODEL, 0, 0, 0, 0) == -1.14
        assert evaluate_rhs(REFERENCE_MODEL, 1, 0, 0, 0) == 2.56

    def test_reference_mixed_inputs(self):
        G, C, B, b = 100.0, 2.0, 0.5, 0.9
        expected = (-1.14 + 102.39 * b - 0.14 * C - 7.69 * G - 0.21 * B * b + 648.80 * b * b
                    + 12.80 * C * b - 185.42 * G * b - 0.96 * C * G + 11.39 * G * G)
        assert evaluate_rhs(REFERENCE_MODEL, G, C, B, b) == pytest.approx(expected, rel=1e-12)

    def test_trig(self):
        m = SparseModel.from_dict({"sin(G)": 2.0, "cos(C)": 1.0})
        assert evaluate_rhs(m, 0.5, 0.0, 0, 0) == pytest.approx(2 * math.sin(0.5) + 1)


class TestSimulateDay:
    def test_exponential_decay(self, t0):
        res = simulate_day(DECAY, 100.0, *inputs(t0, 288))
        exact = 100.0 * np.exp(-0.1 * np.arange(288))
        np.testing.assert_allclose(res.trajectory.values, exact, rtol=1e-6)
        assert not res.diverged and res.divergence_index is None

    def test_fourth_order_convergence(self, t0):
        errs = []
        for n in (1, 2, 4, 8):
            res = simulate_day(SparseModel.from_dict({"G": -0.5}), 100.0, *inputs(t0, 50), substeps=n)
            errs.append(abs(res.trajectory.values[-1] - 100.0 * math.exp(-0.5 * 49)) / math.exp(-0.5 * 49))
        ratios = [a / b for a, b in zip(errs, errs[1:])]
        assert all(12 <= r <= 20 for r in ratios), ratios

    def test_inputs_held_per_interval(self, t0):
        # dG/dt = C with C held at its left-endpoint value
        carbs, bolus, basal = inputs(t0, 5)
        carbs = carbs.with_values(np.array([1.0, 2.0, 0.0, 3.0, 0.0]))
        res = simulate_day(SparseModel.from_dict({"C": 1.0}), 0.0, carbs, bolus, basal)
        np.testing.assert_allclose(res.trajectory.values, [0, 1, 3, 3, 6])

    def test_time_unit(self, t0):
        res = simulate_day(SparseModel.from_dict({"1": 1.0}), 0.0, *inputs(t0, 3), time_unit_minutes=1.0)
        np.testing.assert_allclose(res.trajectory.values, [0, 5, 10])

    def test_guard_clamps_and_freezes(self, t0):
        res = simulate_day(SparseModel.from_dict({"G²": 0.01}), 150.0, *inputs(t0, 20))
        assert res.diverged and res.divergence_index is not None
        after = res.trajectory.values[res.divergence_index:]
        assert np.all(after == 1000.0)
        res = simulate_day(SparseModel.from_dict({"1": -50.0}), 100.0, *inputs(t0, 10))
        assert res.divergence_index == 3 and res.trajectory.values[-1] == 0.0

    def test_misaligned(self, t0):
        carbs, bolus, basal = inputs(t0, 10)
        with pytest.raises(ValueError, match="aligned"):
            simulate_day(DECAY, 1.0, carbs, bolus, UniformSeries(t0, np.zeros(9)))
        with pytest.raises(ValueError):
            simulate_day(DECAY, 1.0, carbs, bolus, basal, substeps=0)


def test_batch_matches_single(t0):
    rng = np.random.default_rng(0)
    models = [SparseModel.from_dict({"1": 5.0, "G": -0.05, "C": 3.0}),
              SparseModel.from_dict({"B·G": -0.1, "G·b": -0.02, "1": 2.0}),
              SparseModel.from_dict({"sin(G)": 0.5, "G": -0.01})]
    cells = [{k: rng.random(30) for k in "CBb"} for _ in range(3)]
    traj, div = simulate_many(models, cells, [100.0, 120.0, 90.0])
    for m, model in enumerate(models):
        for c, cell in enumerate(cells):
            s = UniformSeries(t0, cell["C"])
            single = simulate_day(model, [100.0, 120.0, 90.0][c], s, s.with_values(cell["B"]),
                                  s.with_values(cell["b"]))
            np.testing.assert_allclose(traj[m, c], single.trajectory.values, rtol=1e-12)


def test_constant_model(t0):
    s = constant_model(123.0, 4, t0)
    np.testing.assert_array_equal(s.values, [123.0] * 4)
    with pytest.raises(ValueError):
        constant_model(1.0, 0)
