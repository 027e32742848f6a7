"""Grid propagation: transform bridge, both schemes, potential features,
and the realistic protocol run."""

import numpy as np
import pytest

from hotelsim.well import WellGeometry, basis_state, free_evolve, random_state
from hotelsim.dynamics import (DynamicKnobs, FreeFlight, GridState,
                               MovingWall, PotentialTimeline,
                               PropagationError, PropagatorSettings,
                               RampedBarrier, Segment, UniformOffset, carpet,
                               propagate, run_dynamic_protocol, to_grid,
                               to_spectral)

G = WellGeometry(1.0)
TAU = 2.0 * np.pi / G.omega0()


class TestGridBridge:
    def test_round_trip_band_limited(self):
        rng = np.random.default_rng(0)
        s = random_state(G, 32, rng)
        back = to_spectral(to_grid(s, 255), 32)
        assert np.max(np.abs(back.amps - s.amps)) < 1e-12

    def test_norm_matches_integral(self):
        rng = np.random.default_rng(1)
        s = random_state(G, 16, rng)
        assert to_grid(s, 511).norm_sq() == pytest.approx(1.0, abs=1e-12)

    def test_aliasing_guards(self):
        s = random_state(G, 64, np.random.default_rng(2))
        with pytest.raises(ValueError):
            to_grid(s, 32)
        g = to_grid(s, 255)
        with pytest.raises(ValueError):
            to_spectral(g, 512)


class TestFreePropagation:
    @pytest.mark.parametrize("scheme", ["strang-split-sine", "crank-nicolson"])
    def test_half_period_matches_exact_spectral(self, scheme):
        rng = np.random.default_rng(3)
        # CN carries O(dx^2, dt^2) dispersion that grows as n^4, so its
        # comparison uses a low-lying state; the sine-basis kinetic step
        # is exact in free flight at any occupation
        n_modes = 24 if scheme == "strang-split-sine" else 4
        s = random_state(G, n_modes, rng)
        m = 1024 if scheme == "strang-split-sine" else 1023
        grid = to_grid(s, m)
        tl = PotentialTimeline([Segment(TAU / 2.0, FreeFlight())])
        out = propagate(grid, tl, PropagatorSettings(dt=TAU / 4000.0,
                                                     scheme=scheme))
        exact = to_grid(free_evolve(s, TAU / 2.0), m)
        l2 = np.sqrt(np.sum(np.abs(out.samples - exact.samples) ** 2)
                     * grid.dx)
        assert l2 < (1e-10 if scheme == "strang-split-sine" else 2e-2)

    def test_norm_is_conserved(self):
        s = random_state(G, 16, np.random.default_rng(4))
        grid = to_grid(s, 511)
        tl = PotentialTimeline([Segment(0.7 * TAU, FreeFlight())])
        out = propagate(grid, tl, PropagatorSettings(dt=TAU / 1000.0))
        assert abs(out.norm_sq() - 1.0) < 1e-10


class TestSelfConvergence:
    def test_strang_is_second_order_for_smooth_potential(self):
        s = random_state(G, 6, np.random.default_rng(5))
        grid = to_grid(s, 255)

        class Bump:
            def potential(self, x, u):
                # smooth, time-dependent, no stiff features
                return 10.0 * np.sin(np.pi * x) * (1.0 + 0.5 * np.sin(np.pi * u))

        tl = PotentialTimeline([Segment(0.2 * TAU, Bump())])

        def low_band(steps):
            # error is measured on the occupied band: the splitting can
            # resonantly excite a single empty high grid mode at special
            # step counts, which would contaminate the order fit
            st = PropagatorSettings(dt=0.2 * TAU / steps)
            return to_spectral(propagate(grid, tl, st), 32).amps

        ref = low_band(12800)
        e1 = np.linalg.norm(low_band(400) - ref)
        e2 = np.linalg.norm(low_band(800) - ref)
        order = np.log2(e1 / e2)
        assert abs(order - 2.0) < 0.1


class TestPotentialFeatures:
    def test_uniform_offset_is_a_pure_phase(self):
        s = random_state(G, 8, np.random.default_rng(6))
        grid = to_grid(s, 255)
        v0 = 3.0
        tl = PotentialTimeline([Segment(0.31 * TAU,
                                        UniformOffset(v0, -1.0, 2.0))])
        out = propagate(grid, tl, PropagatorSettings(dt=TAU / 2000.0))
        expect = to_grid(free_evolve(s, 0.31 * TAU), 255).samples \
            * np.exp(-1j * v0 * 0.31 * TAU)
        assert np.max(np.abs(out.samples - expect)) < 1e-8

    def test_high_barrier_blocks_transport(self):
        # ground state in the left half must stay there while a high
        # barrier stands in the middle
        big = WellGeometry(2.0)
        m = 1023
        grid0 = GridState(samples=np.zeros(m, complex), width=2.0)
        x = grid0.x
        psi = np.where(x < 1.0, np.sqrt(2.0) * np.sin(np.pi * x), 0.0)
        grid = grid0.with_samples(psi)
        bar = RampedBarrier(center=1.0, half_width=8 * grid.dx,
                            height=1e4, mode="hold")
        tl = PotentialTimeline([Segment(2.0 * TAU, bar)])
        out = propagate(grid, tl, PropagatorSettings(dt=TAU / 4000.0,
                                                     scheme="crank-nicolson"))
        right = float(np.sum(np.abs(out.samples[x > 1.05]) ** 2) * grid.dx)
        assert right < 1e-3

    def test_moving_wall_schedule_endpoints(self):
        w = MovingWall(start_position=2.0, stop_position=1.0, height=1e4,
                       edge_width=0.01)
        assert w.position(0.0) == pytest.approx(2.0)
        assert w.position(1.0) == pytest.approx(1.0)

    def test_barrier_ramp_modes(self):
        bar_up = RampedBarrier(1.0, 0.05, 7.0, "up")
        assert bar_up.potential(np.array([1.0]), 0.0)[0] == pytest.approx(0.0)
        assert bar_up.potential(np.array([1.0]), 1.0)[0] == pytest.approx(7.0)
        with pytest.raises(ValueError):
            RampedBarrier(1.0, 0.05, 7.0, "sideways").potential(np.array([1.0]), 0.5)

    def test_norm_drift_guard_raises(self):
        s = random_state(G, 8, np.random.default_rng(7))
        grid = to_grid(s, 127)

        class Leak:
            def potential(self, x, u):
                # complex-free but enormous and stiff: the split-step
                # phase wraps and the drift check must fire on CN? no --
                # use an absurd dt with strang and a non-smooth feature
                return np.where(x > 0.5, 1e8, 0.0)

        tl = PotentialTimeline([Segment(0.5 * TAU, Leak())])
        st = PropagatorSettings(dt=TAU / 10.0, scheme="crank-nicolson",
                                norm_drift_tol=1e-16)
        with pytest.raises(PropagationError):
            propagate(grid, tl, st)


class TestCarpet:
    def test_shape_and_initial_row(self):
        s = basis_state(1, G, 4)
        grid = to_grid(s, 255)
        tl = PotentialTimeline([Segment(TAU / 4.0, FreeFlight())])
        t, x, rows = carpet(grid, tl, PropagatorSettings(dt=TAU / 512.0),
                            time_samples=16, space_samples=64)
        assert rows.shape == (16, 64)
        assert t[0] == 0.0 and t[-1] == pytest.approx(TAU / 4.0)
        assert np.allclose(rows[0], np.abs(grid.samples[
            np.linspace(0, 254, 64).round().astype(int)]) ** 2)

    def test_revival_structure(self):
        # density at the full revival equals the initial density
        s = basis_state(2, G, 4).with_amps([0.6, 0.8, 0.0, 0.0])
        grid = to_grid(s, 255)
        tl = PotentialTimeline([Segment(TAU, FreeFlight())])
        t, x, rows = carpet(grid, tl, PropagatorSettings(dt=TAU / 2048.0),
                            time_samples=9, space_samples=128)
        assert np.max(np.abs(rows[-1] - rows[0])) < 1e-8


class TestDynamicProtocol:
    def test_reference_run_doubles_ground_state(self):
        s = basis_state(1, G, 8)
        final, report = run_dynamic_protocol(s, DynamicKnobs())
        assert report.fidelity > 0.998
        assert report.odd_level_leakage < 5e-3
        assert not report.warnings
        assert abs(final.amps[1]) ** 2 > 0.99

    def test_step_norms_monotone_bookkeeping(self):
        s = basis_state(1, G, 8)
        _, report = run_dynamic_protocol(
            s, DynamicKnobs(compression_time=10.0, dt=TAU / 4000.0))
        for label in ("expand", "mirror-evolve", "split", "phase", "merge",
                      "compress", "project"):
            assert label in report.step_norms
        assert report.step_norms["compress"] == pytest.approx(1.0, abs=1e-6)

    def test_low_wall_warns(self):
        s = basis_state(1, G, 8)
        _, report = run_dynamic_protocol(
            s, DynamicKnobs(compression_time=10.0, wall_height=50.0,
                            dt=TAU / 4000.0))
        assert report.warnings
