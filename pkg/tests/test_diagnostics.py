import math

import numpy as np
import pytest

from proxsweep import (Trajectory, compute_constants, convergence_study,
                       detect_impacts, diagnose, good_direction,
                       interpolant_sup_error, max_intergrid_gap, run,
                       total_variation, verify_impact_law, ZERO_FORCE)
from proxsweep.scenarios import lookup

from conftest import H_SWEEP, half_space_1d


def make_traj(times, positions, velocities):
    return Trajectory(times=np.asarray(times, dtype=float),
                      positions=np.asarray(positions, dtype=float).reshape(len(times), -1),
                      velocities=np.asarray(velocities, dtype=float).reshape(len(times), -1))


class TestTotalVariation:
    def test_constant_velocity(self):
        traj = make_traj([0, 1, 2], [0, 1, 2], [1, 1, 1])
        assert total_variation(traj) == 0.0

    def test_single_jump_then_reversal(self):
        traj = make_traj([0, 1, 2], [0, -2, -2], [-2, 0, 2])
        assert total_variation(traj) == 4.0

    def test_bouncing_ball_against_analytic(self):
        # fall variation |u-| plus the inelastic jump |u-|: TV -> 2 sqrt(2 g q0)
        scn = lookup("floor")
        traj, _ = run(scn.system, scn.force, scn.q0, scn.u0, 0.005, scn.T)
        assert abs(total_variation(traj) - 2.0 * math.sqrt(2 * 10.0 * 1.25)) <= 0.2


class TestImpactLaw:
    def test_floor_bounce_residual_small(self):
        scn = lookup("floor")
        for h in H_SWEEP:
            traj, _ = run(scn.system, scn.force, scn.q0, scn.u0, h, scn.T)
            events = verify_impact_law(traj, scn.system, sup_force=scn.force.sup_F)
            assert len(events) == 1
            ev = events[0]
            assert ev.law_residual <= 5 * h * (1 + scn.force.sup_F)
            assert ev.variational_max <= 1e-7 + 5 * h * (1 + scn.force.sup_F)
            assert abs(ev.time - 0.5) <= 2 * h + 1e-12

    def test_piston_merged_event(self):
        scn = lookup("piston")
        traj, _ = run(scn.system, scn.force, scn.q0, scn.u0, 0.01, scn.T)
        events = verify_impact_law(traj, scn.system, sup_force=0.0)
        assert len(events) == 1
        ev = events[0]
        assert ev.u_minus[0] == pytest.approx(-0.5, abs=1e-12)
        assert ev.u_plus[0] == pytest.approx(1.0, abs=1e-12)
        assert ev.law_residual <= 1e-9

    def test_no_jump_no_event(self):
        scn = lookup("free")
        traj, _ = run(scn.system, scn.force, scn.q0, scn.u0, 0.02, scn.T)
        assert verify_impact_law(traj, scn.system) == []

    def test_adversarial_injected_velocity_detected(self):
        # a floor impact rewritten to exit at u+ = 1 violates the law: the
        # residual is 1 and the variational form fails at w = 0
        traj = make_traj([0.0, 0.1, 0.2],
                         [[0.2], [0.0], [0.0]],
                         [[-2.0], [-2.0], [1.0]])
        events = verify_impact_law(traj, half_space_1d(), sup_force=0.0)
        assert len(events) == 1
        ev = events[0]
        assert ev.law_residual == pytest.approx(1.0, abs=1e-9)
        assert ev.variational_max >= 3.0 - 1e-9  # <u- - u+, 0 - u+> = 3

    @pytest.mark.parametrize("name", ["floor", "wedge", "piston", "pocket", "free"])
    def test_residual_bound_all_scenarios(self, name):
        scn = lookup(name)
        for h in (0.04, 0.01):
            traj, _ = run(scn.system, scn.force, scn.q0, scn.u0, h, scn.T)
            bound = 5 * h * (1 + scn.force.sup_F)
            for ev in verify_impact_law(traj, scn.system, sup_force=scn.force.sup_F):
                assert ev.verifiable
                assert ev.law_residual <= bound

    def test_jump_tol_override_suppresses_events(self):
        scn = lookup("floor")
        traj, _ = run(scn.system, scn.force, scn.q0, scn.u0, 0.01, scn.T)
        assert verify_impact_law(traj, scn.system, sup_force=scn.force.sup_F,
                                 jump_tol=1e9) == []

    def test_static_impacts_do_not_speed_up(self):
        for name in ("floor", "wedge", "pocket"):
            scn = lookup(name)
            traj, _ = run(scn.system, scn.force, scn.q0, scn.u0, 0.01, scn.T)
            for ev in verify_impact_law(traj, scn.system, sup_force=scn.force.sup_F):
                assert np.linalg.norm(ev.u_plus) <= np.linalg.norm(ev.u_minus) + 1e-9

    def test_unverifiable_event_flagged(self):
        # velocity polyhedron u >= 1 and -u >= 1 is empty at the event point
        from proxsweep import ConstraintFunction, ConstraintSystem
        c1 = ConstraintFunction(id=1, value=lambda t, q: float(q[0]) - t,
                                gradient_q=lambda t, q: np.array([1.0]),
                                dt=lambda t, q: -1.0)
        c2 = ConstraintFunction(id=2, value=lambda t, q: -float(q[0]) - t,
                                gradient_q=lambda t, q: np.array([-1.0]),
                                dt=lambda t, q: -1.0)
        sys = ConstraintSystem(dim=1, constraints=(c1, c2))
        traj = make_traj([0.0, 0.1], [[0.0], [0.0]], [[-2.0], [0.5]])
        events = verify_impact_law(traj, sys, sup_force=0.0)
        assert len(events) == 1
        assert not events[0].verifiable
        assert math.isnan(events[0].law_residual)


class TestConstants:
    def test_floor_exact_values(self):
        scn = lookup("floor")
        est = good_direction(scn.system, 0.0, np.array([0.0]))
        assert est.kappa0 == 1.0
        assert est.nu_min == 1.0 / 6.0  # r/(2 (c0 + delta + 2 kappa0)) with r=1

    def test_horizon_eighth(self):
        rec = compute_constants(lookup("free").system, None, np.array([1.0]),
                                ZERO_FORCE, T=1.0, J=1.0)
        assert rec.T0 == 0.125

    def test_unavailable_without_certificate(self):
        rec = compute_constants(lookup("floor").system, None, np.array([0.0]),
                                ZERO_FORCE, T=1.0)
        assert not rec.available
        assert rec.kappa0 is None and rec.nu_min is None

    def test_velocity_bound_record(self):
        scn = lookup("floor")
        est = good_direction(scn.system, 0.0, np.array([0.0]))
        rec = compute_constants(scn.system, est, scn.u0, scn.force, T=2.0, k=3)
        # A(k) = |u0| + 2 k kappa0 + k * integral F = 0 + 6 + 3 * 20
        assert rec.A_k == pytest.approx(66.0, rel=1e-12)

    def test_infinite_horizon_when_still(self):
        rec = compute_constants(lookup("free").system, None, np.array([0.0]),
                                ZERO_FORCE)
        assert rec.T0 == math.inf


class TestConvergence:
    def test_free_flight_roundoff(self):
        scn = lookup("free")
        rows = convergence_study(scn.system, scn.force, scn.q0, scn.u0, scn.T,
                                 H_SWEEP, reference=scn.reference())
        assert all(row["err"] <= 1e-12 for row in rows)

    def test_bouncing_ball_order(self):
        scn = lookup("floor")
        rows = convergence_study(scn.system, scn.force, scn.q0, scn.u0, scn.T,
                                 H_SWEEP, reference=scn.reference())
        errs = [row["err"] for row in rows]
        assert all(e1 < e0 for e0, e1 in zip(errs, errs[1:]))
        orders = [row["order"] for row in rows if row["order"] is not None]
        assert orders and min(orders) >= 0.9

    def test_piston_decreasing(self):
        scn = lookup("piston")
        rows = convergence_study(scn.system, scn.force, scn.q0, scn.u0, scn.T,
                                 H_SWEEP, reference=scn.reference())
        errs = [row["err"] for row in rows]
        assert all(e1 < e0 for e0, e1 in zip(errs, errs[1:]))

    def test_finest_run_reference_fallback(self):
        scn = lookup("floor")
        rows = convergence_study(scn.system, scn.force, scn.q0, scn.u0, 1.0,
                                 [0.02, 0.01], reference=None)
        assert all(row["err"] is not None for row in rows)
        assert rows[1]["err"] < rows[0]["err"]

    def test_failed_run_recorded_not_raised(self):
        scn = lookup("floor")
        rows = convergence_study(scn.system, scn.force, scn.q0, scn.u0, 2.0,
                                 [1.0, 0.01], reference=scn.reference())
        assert "failed" in rows[0]  # first configuration leaves the set
        assert rows[1]["err"] is not None


class TestGaps:
    def test_piston_intergrid_bound(self):
        scn = lookup("piston")
        for h in (0.04, 0.01):
            traj, _ = run(scn.system, scn.force, scn.q0, scn.u0, h, scn.T)
            gap = max_intergrid_gap(traj, scn.system)
            assert gap <= scn.system.lipschitz_c0 * h + 1e-8

    def test_report_assembly(self):
        scn = lookup("floor")
        traj, contact = run(scn.system, scn.force, scn.q0, scn.u0, 0.02, scn.T)
        est = good_direction(scn.system, *scn.probe)
        report = diagnose(traj, contact, scn.system, scn.force, admiss=est)
        assert report.max_feasibility_gap <= 1e-8
        assert report.velocity_bound_ok
        assert report.momentum_residual <= 1e-8
        assert len(report.impacts) == 1
        assert report.constants.available
        assert not report.partial_final_step


class TestDetectImpacts:
    def test_windows_merge_adjacent_steps(self):
        scn = lookup("floor")
        traj, _ = run(scn.system, scn.force, scn.q0, scn.u0, 0.02, scn.T)
        windows = detect_impacts(traj, scn.system, sup_force=10.0)
        assert len(windows) == 1
        a, b = windows[0]
        assert b - a <= 2

    def test_wedge_two_separate_events(self):
        scn = lookup("wedge")
        traj, _ = run(scn.system, scn.force, scn.q0, scn.u0, 0.01, scn.T)
        windows = detect_impacts(traj, scn.system, sup_force=0.0)
        assert len(windows) == 2
