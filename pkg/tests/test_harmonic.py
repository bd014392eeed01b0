import math

import numpy as np
import pytest
from scipy.integrate import quad

from satdelay.errors import AmplitudeBelowDelta, TargetOutOfRange
from satdelay.harmonic import DescribingFunction, evaluate_N, invert_N, predict_limit_cycle
from satdelay.nyquist import MarginResult, is_stable
from satdelay.plant import DelayPair
from satdelay.sim import SimConfig, run

from conftest import X0_GRAPH2

DF = DescribingFunction(1.0)


def quadrature_N(a, delta=1.0):
    """First Fourier sine coefficient of sat(a sin t) divided by a."""
    knee = math.asin(min(1.0, delta / a))
    inner = quad(lambda t: a * math.sin(t) ** 2, 0, knee, epsabs=1e-14, epsrel=1e-12)[0]
    outer = quad(lambda t: delta * math.sin(t), knee, math.pi / 2, epsabs=1e-14, epsrel=1e-12)[0]
    # quarter-wave symmetry: four equal quarters over a full period
    return 4 * (inner + outer) / (math.pi * a)


LOG_GRID = np.geomspace(1.0, 1e4, 10_000)


class TestEvaluate:
    def test_at_delta(self):
        assert evaluate_N(1.0, DF) == 1.0

    def test_at_two_delta(self):
        expected = 1 / 3 + math.sqrt(3) / (2 * math.pi)
        assert evaluate_N(2.0, DF) == pytest.approx(expected, abs=1e-12)
        assert evaluate_N(2.0, DF) == pytest.approx(0.60900, abs=5e-6)

    def test_large_amplitude(self):
        a = 1e6
        assert evaluate_N(a, DF) == pytest.approx(quadrature_N(a), abs=1e-9)
        assert evaluate_N(a, DF) < 2e-6

    def test_scale_invariance(self):
        assert evaluate_N(150.0, DescribingFunction(50.0)) == pytest.approx(evaluate_N(3.0, DF), rel=1e-14)

    def test_below_delta(self):
        with pytest.raises(AmplitudeBelowDelta):
            evaluate_N(0.5, DF)

    def test_delta_must_be_positive(self):
        with pytest.raises(ValueError):
            DescribingFunction(0.0)

    def test_matches_quadrature_on_log_grid(self):
        got = np.array([evaluate_N(a, DF) for a in LOG_GRID])
        want = np.array([quadrature_N(a) for a in LOG_GRID])
        assert np.max(np.abs(got - want)) < 1e-9

    def test_strictly_decreasing(self):
        values = np.array([evaluate_N(a, DF) for a in LOG_GRID])
        assert values[0] == 1.0
        assert np.all(np.diff(values) < 0)
        assert values[-1] < 2e-4


class TestInvert:
    def test_unit_target(self):
        assert invert_N(1.0, DescribingFunction(50.0)) == 50.0

    def test_two_delta(self):
        assert invert_N(0.60900, DF) == pytest.approx(2.0, rel=1e-4)
        exact = 1 / 3 + math.sqrt(3) / (2 * math.pi)
        assert invert_N(exact, DF) == pytest.approx(2.0, rel=1e-6)

    def test_table3_magnitude(self):
        a = invert_N(1 / 1.002, DF)
        assert 1.0 < a < 1.2
        assert abs(evaluate_N(a, DF) - 1 / 1.002) < 1e-10

    @pytest.mark.parametrize("target", [0.0, -0.1, 1.5])
    def test_out_of_range(self, target):
        with pytest.raises(TargetOutOfRange):
            invert_N(target, DF)

    def test_round_trip_on_log_grid(self):
        back = np.array([invert_N(evaluate_N(a, DF), DF) for a in LOG_GRID[1:]])
        assert np.max(np.abs(back / LOG_GRID[1:] - 1)) < 1e-6


def margin(omega, mag):
    return MarginResult(mag < 1, omega, mag, -1 + 0j)


class TestPredict:
    def test_below_one(self):
        p = predict_limit_cycle(margin(1.375, 0.841), DF)
        assert not p.exists and p.amplitude is None

    def test_grazing(self):
        p = predict_limit_cycle(margin(1.2, 1.0), DescribingFunction(50.0))
        assert p.exists and p.amplitude == 50.0

    def test_balance_equation(self):
        p = predict_limit_cycle(margin(1.244, 1.3), DF)
        assert p.exists and p.frequency == 1.244
        assert abs(evaluate_N(p.amplitude, DF) * 1.3 - 1) < 1e-9

    def test_no_crossing(self):
        assert not predict_limit_cycle(MarginResult(True, None, 0.0, None), DF).exists

    @pytest.mark.parametrize(
        "tau2, exists, omega",
        [(0.79, False, 1.375), (1.03, False, 1.249), (1.04, True, 1.244)],
    )
    def test_table3(self, graph2, tau2, exists, omega):
        m = is_stable(graph2, "u1", DelayPair(0.2, tau2))
        p = predict_limit_cycle(m, DescribingFunction(50.0))
        assert p.exists is exists
        assert m.omega_bar == pytest.approx(omega, abs=0.002)
        if exists:
            assert p.frequency == pytest.approx(1.244, abs=0.001)
            assert 50.0 < p.amplitude < 60.0


@pytest.mark.slow
@pytest.mark.parametrize("tau2, horizon", [(0.79, 600.0), (1.03, 12000.0), (1.04, 600.0)])
def test_prediction_agrees_with_simulation(graph2, tau2, horizon):
    # (0.2, 1.03) sits just inside the boundary and decays at ~1e-3/s, hence
    # the long horizon and the second-order integrator
    m = is_stable(graph2, "u1", DelayPair(0.2, tau2))
    p = predict_limit_cycle(m, DescribingFunction(50.0))
    cfg = SimConfig(X0_GRAPH2, horizon, delays=DelayPair(0.2, tau2), method="heun", record_every=10)
    _, verdict = run(cfg, graph2)
    assert verdict.kind == ("LimitCycle" if p.exists else "Converged")
    if p.exists:
        assert verdict.frequency == pytest.approx(p.frequency, rel=0.05)
