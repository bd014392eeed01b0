import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from satdelay.errors import NonFiniteState, WindowTooLong
from satdelay.plant import (
    ControlLaw,
    DelayedStates,
    DelayPair,
    Saturation,
    control_input,
    disagreement_projector,
    stack_system,
)
from satdelay.sim import SimConfig, Trajectory, analyze, delay_offsets, run, simulate
from satdelay.topology import Topology

from conftest import GRAPH1, GRAPH2, X0_GRAPH1, X0_GRAPH2

LAWS = list(ControlLaw)


def reference_euler(topo, law, x0, v0, tau1, tau2, h, steps, delta, tap="internal"):
    """Agent-by-agent Euler loop with interpolated history lookups."""
    n = topo.n
    xs = np.zeros((steps + 1, n))
    vs = np.zeros((steps + 1, n))
    xs[0], vs[0] = x0, v0
    clip = (lambda v: np.clip(v, -delta, delta)) if tap == "saturated" else (lambda v: v)

    def sample(arr, k, tau):
        s = k - tau / h
        if abs(s - round(s)) < 1e-9:
            s = round(s)
        if s <= 0:
            return arr[0]
        lo = math.floor(s)
        frac = s - lo
        hi = min(lo + 1, k)
        return (1 - frac) * arr[lo] + frac * arr[hi]

    for k in range(steps):
        x1, v1 = sample(xs, k, tau1), sample(vs, k, tau1)
        x2, v2 = sample(xs, k, tau2), sample(vs, k, tau2)
        hist = DelayedStates(x1, clip(v1), x2, clip(v2))
        u = np.array([control_input(law, topo, hist, i) for i in range(n)])
        xs[k + 1] = xs[k] + h * np.clip(vs[k], -delta, delta)
        vs[k + 1] = vs[k] + h * u
    return xs, vs


class TestDelayOffsets:
    @pytest.mark.parametrize(
        "tau, step, expected",
        [(0.0, 0.01, (0, 0.0)), (0.2, 0.01, (20, 0.0)), (0.79, 0.01, (79, 0.0)), (0.479, 0.01, (47, 0.9))],
    )
    def test_split(self, tau, step, expected):
        d, f = delay_offsets(tau, step)
        assert d == expected[0]
        assert f == pytest.approx(expected[1], abs=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, 3), st.sampled_from([0.01, 0.005, 0.02]))
    def test_reconstructs_tau(self, tau, step):
        d, f = delay_offsets(tau, step)
        assert 0 <= f < 1
        assert (d + f) * step == pytest.approx(tau, abs=1e-9)


class TestSimulate:
    @pytest.mark.parametrize("law", LAWS)
    @pytest.mark.parametrize("tap", ["internal", "saturated"])
    def test_matches_reference_loop(self, law, tap):
        topo = Topology(GRAPH2)
        x0 = np.array(X0_GRAPH2)
        v0 = np.array([3.0, -1.0, 0.0, 2.0, -4.0])
        cfg = SimConfig(x0, 3.0, step=0.01, initial_velocities=v0, delays=DelayPair(0.137, 0.4521),
                        law=law, saturation=Saturation(20.0), velocity_tap=tap)
        traj = simulate(cfg, topo)
        xs, vs = reference_euler(topo, law, x0, v0, 0.137, 0.4521, 0.01, 300, 20.0, tap)
        assert np.allclose(traj.positions, xs, rtol=1e-12, atol=1e-9)
        assert np.allclose(traj.velocities, vs, rtol=1e-12, atol=1e-9)

    def test_trajectory_invariants(self, graph1):
        traj = simulate(SimConfig(X0_GRAPH1, 5.0, delays=DelayPair(0.1, 0.3)), graph1)
        assert len(traj.times) == len(traj.states) == len(traj.psi_norm) == len(traj.controls) == 501
        centered = traj.states.copy()
        centered[:, :4] -= centered[:, :4].mean(axis=1, keepdims=True)
        centered[:, 4:] -= centered[:, 4:].mean(axis=1, keepdims=True)
        assert np.allclose(traj.psi_norm, np.linalg.norm(centered, axis=1))

    def test_record_every(self, graph1):
        full = simulate(SimConfig(X0_GRAPH1, 2.0), graph1)
        thin = simulate(SimConfig(X0_GRAPH1, 2.0, record_every=10), graph1)
        assert np.allclose(thin.states, full.states[::10])
        assert np.allclose(thin.times, full.times[::10])

    def test_wrong_initial_size(self, graph1):
        with pytest.raises(ValueError):
            simulate(SimConfig([0.0, 1.0], 1.0), graph1)

    @pytest.mark.parametrize("field, value", [("step", 0.0), ("horizon", 0.001), ("extra_link_delay", -1.0)])
    def test_config_validation(self, field, value):
        kwargs = dict(initial_positions=X0_GRAPH1, horizon=1.0)
        kwargs[field] = value
        with pytest.raises(ValueError):
            SimConfig(**kwargs)

    def test_overflow(self, graph1):
        cfg = SimConfig(X0_GRAPH1, 600.0, delays=DelayPair(0.2, 2.5), saturation=Saturation(math.inf))
        with pytest.raises(NonFiniteState):
            simulate(cfg, graph1)
        traj, verdict = run(cfg, graph1)
        assert verdict.kind == "Diverged" and verdict.t_escape == traj.escaped_at

    def test_extra_link_delay_adds_to_tau2(self, graph1):
        a = simulate(SimConfig(X0_GRAPH1, 5.0, delays=DelayPair(0.1, 0.3), extra_link_delay=0.04), graph1)
        b = simulate(SimConfig(X0_GRAPH1, 5.0, delays=DelayPair(0.1, 0.34)), graph1)
        assert np.array_equal(a.states, b.states)

    def test_csv_round_trip(self, tmp_path, graph1):
        traj = simulate(SimConfig(X0_GRAPH1, 1.0), graph1)
        path = tmp_path / "traj.csv"
        traj.to_csv(path)
        assert path.read_text().splitlines()[0] == "t,x1,x2,x3,x4,v1,v2,v3,v4,psi_norm"
        back = Trajectory.from_csv(path)
        assert np.allclose(back.states, traj.states, rtol=1e-8)


class TestInvariances:
    @pytest.mark.parametrize("method", ["euler", "heun"])
    @pytest.mark.parametrize("law", LAWS)
    def test_permutation_equivariance(self, law, method):
        topo = Topology(GRAPH2)
        perm = np.array([3, 0, 4, 1, 2])
        x0 = np.array(X0_GRAPH2)
        kw = dict(delays=DelayPair(0.2, 0.5), law=law, method=method)
        base = simulate(SimConfig(x0, 20.0, **kw), topo)
        moved = simulate(SimConfig(x0[perm], 20.0, **kw), topo.permuted(perm))
        assert np.array_equal(moved.positions, base.positions[:, perm])
        assert np.array_equal(moved.velocities, base.velocities[:, perm])

    @pytest.mark.parametrize("law", LAWS)
    def test_translation_invariance(self, law, graph1):
        c = 1234.5
        cfg = SimConfig(X0_GRAPH1, 30.0, delays=DelayPair(0.1, 0.3), law=law)
        a = simulate(cfg, graph1)
        b = simulate(SimConfig(np.array(X0_GRAPH1) + c, 30.0, delays=DelayPair(0.1, 0.3), law=law), graph1)
        assert np.allclose(b.positions, a.positions + c, rtol=0, atol=1e-9)
        assert np.allclose(b.psi_norm, a.psi_norm, rtol=0, atol=1e-9)

    # converging scenarios with |psi(30)| well above roundoff
    HALVING = [
        (GRAPH2, X0_GRAPH2, "u1", (0.2, 0.79)),
        (GRAPH1, X0_GRAPH1, "u2", (0.0, 0.0)),
        (GRAPH1, X0_GRAPH1, "u1", (0.1, 0.3)),
    ]

    @pytest.mark.parametrize("method", ["euler", "heun"])
    @pytest.mark.parametrize("graph, x0, law, delays", HALVING, ids=["g2-u1-table3", "g1-u2-zero", "g1-u1"])
    def test_step_halving(self, graph, x0, law, delays, method):
        topo = Topology(graph)

        def psi30(step):
            cfg = SimConfig(x0, 30.0, step=step, delays=DelayPair(*delays), law=law, method=method)
            return simulate(cfg, topo).psi_norm[-1]

        coarse, fine = psi30(0.01), psi30(0.005)
        assert abs(fine - coarse) < 0.02 * coarse


class TestScenarios:
    def test_zero_delay_u2_is_hurwitz_on_disagreement_subspace(self, graph1):
        s = stack_system(graph1, "u2", DelayPair())
        lam = np.linalg.eigvals(disagreement_projector(4) @ (s.a0 + s.a1 + s.a2))
        nonzero = lam[np.abs(lam) > 1e-6]
        assert len(nonzero) == 6 and np.all(nonzero.real < 0)

    @pytest.mark.parametrize("method", ["euler", "heun"])
    def test_zero_delay_u2_converges_monotonically(self, graph1, method):
        cfg = SimConfig(X0_GRAPH1, 60.0, delays=DelayPair(0, 0), law="u2", saturation=Saturation(1e9),
                        method=method)
        traj = simulate(cfg, graph1)
        assert traj.psi_norm[-1] < 1e-2
        # after the transient, and above the roundoff floor of the centering
        keep = (traj.times >= 10.0) & (traj.psi_norm > 1e-6)
        assert np.all(np.diff(traj.psi_norm[keep]) <= 0)

    def test_graph2_table3_pair(self, graph2):
        _, converged = run(SimConfig(X0_GRAPH2, 600.0, delays=DelayPair(0.2, 0.79)), graph2)
        _, cycling = run(SimConfig(X0_GRAPH2, 600.0, delays=DelayPair(0.2, 1.04)), graph2)
        assert converged.kind == "Converged"
        assert cycling.kind == "LimitCycle"
        assert cycling.frequency == pytest.approx(1.244, rel=0.1)

    @pytest.mark.parametrize("tau2, kinds", [(0.95, {"Converged"}), (1.09, {"Diverged", "LimitCycle"})])
    def test_unsaturated_matches_nyquist_side(self, graph1, tau2, kinds):
        # the Nyquist margin for graph1, U1, tau1=0.2 is 1.0357 s
        cfg = SimConfig(X0_GRAPH1, 1500.0, delays=DelayPair(0.2, tau2), saturation=Saturation(math.inf),
                        method="heun")
        assert run(cfg, graph1)[1].kind in kinds


def synthetic(psi_fn, t_end=60.0, h=0.01):
    t = np.arange(0, t_end + h / 2, h)
    a = psi_fn(t)
    da = np.gradient(a, t)
    states = np.column_stack([a, -a, da, -da])
    return Trajectory.from_states(t, states)


class TestAnalyze:
    def test_zero_trajectory(self):
        v = analyze(synthetic(lambda t: 0 * t))
        assert v.kind == "Converged" and v.t_settle == 0.0

    def test_sinusoid_is_limit_cycle(self):
        v = analyze(synthetic(lambda t: np.sin(1.244 * t)))
        assert v.kind == "LimitCycle"
        assert v.period == pytest.approx(2 * np.pi / 1.244, rel=0.02)

    def test_exponential_diverges(self):
        v = analyze(synthetic(lambda t: np.exp(0.1 * t) * 1e-3, t_end=200.0))
        assert v.kind == "Diverged"

    def test_decay_settles(self):
        v = analyze(synthetic(lambda t: np.exp(-t)))
        assert v.kind == "Converged" and 0 < v.t_settle < 10

    def test_growing_oscillation_is_not_a_cycle(self):
        v = analyze(synthetic(lambda t: np.exp(0.02 * t) * np.sin(t)))
        assert v.kind == "Inconclusive"

    def test_window_too_long(self):
        with pytest.raises(WindowTooLong):
            analyze(synthetic(lambda t: np.sin(t), t_end=5.0), window=10.0)

    def test_verdict_dict(self):
        d = analyze(synthetic(lambda t: np.sin(1.244 * t))).to_dict()
        assert d["kind"] == "LimitCycle" and d["frequency"] == pytest.approx(1.244, rel=0.02)
