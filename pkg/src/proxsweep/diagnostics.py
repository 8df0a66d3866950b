"""Post-hoc verification of trajectory properties and theoretical constants.

Everything here reads a finished trajectory: feasibility gaps on and between
grid points, total variation and sup norm of the velocity, impact events and
their residuals against the inelastic law u+ = P_V(u-), the inward-cone
constants (kappa0, nu_min), the a-priori velocity bound A(k) and the local
horizon T0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import InfeasibleConeError, ProxsweepError
from .geometry import (AdmissibilityEstimate, ConstraintSystem, VelocityPolyhedron,
                       active_set, velocity_polyhedron)
from .integrator import ContactMeasure, ForceField, Trajectory, run
from .projection import project_point, project_velocity


@dataclass
class ImpactEvent:
    """A velocity jump at a contact point.

    u_minus / u_plus are the discrete one-sided velocities around the jump
    window, law_residual = |u_plus - P_V(u_minus)| and variational_max the
    worst value of <u- - u+, w - u+> over the sampled admissible w.
    """

    time: float
    u_minus: np.ndarray
    u_plus: np.ndarray
    polyhedron: VelocityPolyhedron
    law_residual: float
    variational_max: float = -math.inf
    verifiable: bool = True


@dataclass
class ConstantsRecord:
    kappa0: float | None = None
    nu_min: float | None = None
    T0: float | None = None
    A_k: float | None = None
    k: int = 1
    J: float = 1.0
    available: bool = False


@dataclass
class DiagnosticsReport:
    max_feasibility_gap: float
    max_intergrid_gap: float
    total_variation: float
    sup_velocity: float
    impacts: list[ImpactEvent]
    constants: ConstantsRecord
    convergence_table: list[dict] = field(default_factory=list)
    velocity_bound_ok: bool = True        # |u^{n+1}| <= 2|u^n + h f^n| + c0
    momentum_residual: float = 0.0        # |u(T) - u0 - sum h f + sum dk|
    partial_final_step: bool = False
    margin_ok: bool = True


def total_variation(traj: Trajectory) -> float:
    """Sum of |u^{n+1} - u^n| over the grid, starting from u^0 = u0."""
    if traj.nsteps < 1:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(traj.velocities, axis=0), axis=1)))


def sup_velocity(traj: Trajectory) -> float:
    return float(np.max(np.linalg.norm(traj.velocities, axis=1)))


def max_feasibility_gap(traj: Trajectory, sys: ConstraintSystem) -> float:
    """max over grid times of max_i (-g_i(t^n, q^n))_+."""
    return max((sys.feasibility_gap(t, q)
                for t, q in zip(traj.times, traj.positions)), default=0.0)


def max_intergrid_gap(traj: Trajectory, sys: ConstraintSystem,
                      samples_per_step: int = 4) -> float:
    """max over sampled intermediate times of dist(q_h(t), C(t))."""
    if sys.p == 0:
        return 0.0
    worst = 0.0
    fractions = np.linspace(0.0, 1.0, samples_per_step + 1)[1:-1]
    for n in range(traj.nsteps):
        t0, t1 = traj.times[n], traj.times[n + 1]
        for w in fractions:
            t = (1.0 - w) * t0 + w * t1
            q = (1.0 - w) * traj.positions[n] + w * traj.positions[n + 1]
            if sys.feasibility_gap(t, q) > 0.0:
                worst = max(worst, project_point(sys, t, q).distance)
    return worst


def _jump_thresholds(h: float, sup_force: float) -> tuple[float, float]:
    seed = max(5.0 * h * sup_force, 1e-7)
    extend = max(1.5 * h * sup_force, 1e-7)
    return seed, extend


def detect_impacts(traj: Trajectory, sys: ConstraintSystem,
                   sup_force: float = 0.0,
                   jump_tol: float | None = None) -> list[tuple[int, int]]:
    """Index windows [a, b] of steps forming one contact-induced jump.

    A window is seeded where |u^{n+1} - u^n| exceeds the jump threshold and
    the projection point is in contact, then extended over adjacent steps
    whose jump still exceeds the smooth-forcing level: an off-grid impact
    resolves over two consecutive steps and must count as one event.
    jump_tol overrides the seed threshold when given.
    """
    h = float(np.max(np.diff(traj.times))) if traj.nsteps else 0.0
    seed_tol, extend_tol = _jump_thresholds(h, sup_force)
    if jump_tol is not None:
        seed_tol = jump_tol
        extend_tol = min(extend_tol, jump_tol)
    jumps = np.linalg.norm(np.diff(traj.velocities, axis=0), axis=1)

    def in_contact(n):
        return sys.p > 0 and len(active_set(sys, traj.times[n + 1],
                                            traj.positions[n + 1])) > 0

    seeds = [n for n in range(traj.nsteps) if jumps[n] > seed_tol and in_contact(n)]
    windows: list[tuple[int, int]] = []
    for n in seeds:
        if windows and n <= windows[-1][1]:
            continue
        a = b = n
        while a - 1 >= 0 and jumps[a - 1] > extend_tol and in_contact(a - 1):
            a -= 1
        while b + 1 < traj.nsteps and jumps[b + 1] > extend_tol and in_contact(b + 1):
            b += 1
        if windows and a <= windows[-1][1] + 1:
            windows[-1] = (windows[-1][0], b)
        else:
            windows.append((a, b))
    return windows


def _sample_admissible(poly: VelocityPolyhedron, around: np.ndarray,
                       count: int = 32) -> list[np.ndarray]:
    """Polyhedron vertices plus random admissible points near `around`."""
    m, d = poly.normals.shape
    samples: list[np.ndarray] = []
    # vertices: solutions of d active rows, kept when admissible
    if m >= d > 0:
        for rows in combinations(range(m), d):
            a = poly.normals[list(rows)]
            try:
                v = np.linalg.solve(a, -poly.offsets[list(rows)])
            except np.linalg.LinAlgError:
                continue
            if poly.membership(v, tol=1e-9 * (1.0 + np.linalg.norm(v))):
                samples.append(v)
    rng = np.random.default_rng(2024)
    scale = 1.0 + float(np.linalg.norm(around))
    for _ in range(count):
        cand = around + scale * rng.standard_normal(d)
        samples.append(project_velocity(poly, cand).point)
    return samples


def verify_impact_law(traj: Trajectory, sys: ConstraintSystem,
                      sup_force: float = 0.0,
                      variational_samples: int = 32,
                      jump_tol: float | None = None) -> list[ImpactEvent]:
    """Check u+ = P_V(u-) at every detected jump, plus its variational form.

    The variational form <u- - u+, w - u+> <= 0 is sampled at the polyhedron
    vertices and at random admissible velocities.  Events whose polyhedron is
    empty (infeasible) are flagged unverifiable.
    """
    events: list[ImpactEvent] = []
    for a, b in detect_impacts(traj, sys, sup_force, jump_tol=jump_tol):
        t_ev = float(traj.times[b + 1])
        q_ev = traj.positions[b + 1]
        u_minus = traj.velocities[a]
        u_plus = traj.velocities[b + 1]
        poly = velocity_polyhedron(sys, t_ev, q_ev)
        try:
            u_star = project_velocity(poly, u_minus).point
        except InfeasibleConeError:
            events.append(ImpactEvent(t_ev, u_minus, u_plus, poly,
                                      law_residual=math.nan, verifiable=False))
            continue
        residual = float(np.linalg.norm(u_plus - u_star))
        worst = -math.inf
        for w in _sample_admissible(poly, u_plus, variational_samples):
            worst = max(worst, float((u_minus - u_plus) @ (w - u_plus)))
        events.append(ImpactEvent(t_ev, u_minus, u_plus, poly,
                                  law_residual=residual, variational_max=worst))
    return events


def compute_constants(sys: ConstraintSystem, admiss: AdmissibilityEstimate | None,
                      u0: np.ndarray, force: ForceField, T: float = 1.0,
                      k: int = 1, J: float = 1.0) -> ConstantsRecord:
    """kappa0, nu_min, the velocity bound A(k) and the local horizon T0.

    A(k) = |u0| + 2 k kappa0 + k * integral of F over [0, T];
    T0 = 1 / (2 (J+1) (2|u0| + 3 sup F + sqrt(sup F))), infinite when the
    denominator vanishes.  Without a positive certificate the record is
    explicitly unavailable.
    """
    rec = ConstantsRecord(k=k, J=J)
    speed = float(np.linalg.norm(u0))
    denom = 2.0 * (J + 1.0) * (2.0 * speed + 3.0 * force.sup_F + math.sqrt(force.sup_F))
    rec.T0 = math.inf if denom == 0.0 else 1.0 / denom
    if admiss is None:
        return rec
    rec.kappa0 = admiss.kappa0
    rec.nu_min = admiss.nu_min
    rec.A_k = speed + 2.0 * k * admiss.kappa0 + k * force.integral_bound(0.0, T)
    rec.available = True
    return rec


def velocity_bound_ok(traj: Trajectory, contact: ContactMeasure,
                      sys: ConstraintSystem, tol: float = 1e-9) -> bool:
    """|u^{n+1}| <= 2 |u^n + h f^n| + c0 at every step."""
    for n in range(traj.nsteps):
        h = traj.times[n + 1] - traj.times[n]
        lhs = np.linalg.norm(traj.velocities[n + 1])
        rhs = 2.0 * np.linalg.norm(traj.velocities[n] + h * contact.force_averages[n])
        if lhs > rhs + sys.lipschitz_c0 + tol:
            return False
    return True


def momentum_residual(traj: Trajectory, contact: ContactMeasure) -> float:
    """|u(T) - u0 - sum_n h f^n + sum_n dk^n|, a discrete momentum balance."""
    steps = np.diff(traj.times)
    forcing = (steps[:, None] * contact.force_averages).sum(axis=0)
    lhs = traj.velocities[-1] - traj.velocities[0] - forcing + contact.increments.sum(axis=0)
    return float(np.linalg.norm(lhs))


def interpolant_sup_error(traj: Trajectory, reference, samples_per_step: int = 4) -> float:
    """sup_t |q_h(t) - q_ref(t)| sampled at quarter-interval points."""
    worst = 0.0
    for n in range(traj.nsteps):
        t0, t1 = traj.times[n], traj.times[n + 1]
        for w in np.linspace(0.0, 1.0, samples_per_step + 1):
            t = (1.0 - w) * t0 + w * t1
            q_ref, _ = reference(t)
            q_h = (1.0 - w) * traj.positions[n] + w * traj.positions[n + 1]
            worst = max(worst, float(np.linalg.norm(q_h - np.atleast_1d(q_ref))))
    return worst


def convergence_study(sys: ConstraintSystem, force: ForceField, q0, u0, T: float,
                      h_list, reference=None) -> list[dict]:
    """Error table over an h sweep; rows are {h, err, order} dicts.

    reference(t) -> (q, u) closed form when available; otherwise the finest-h
    run (half the smallest sweep step) serves as reference.  Failed runs are
    recorded as failed rows, not raised.
    """
    if reference is None:
        h_ref = min(h_list) / 2.0
        traj_ref, _ = run(sys, force, q0, u0, h_ref, T)

        def reference(t):
            return traj_ref.position(t), traj_ref.velocity(t)

    rows: list[dict] = []
    for h in h_list:
        try:
            traj, _ = run(sys, force, q0, u0, h, T)
            err = interpolant_sup_error(traj, reference)
            rows.append({"h": float(h), "err": float(err), "order": None})
        except ProxsweepError as exc:
            rows.append({"h": float(h), "err": None, "order": None,
                         "failed": str(exc)})
    for i in range(1, len(rows)):
        e0, e1 = rows[i - 1].get("err"), rows[i].get("err")
        h0, h1 = rows[i - 1]["h"], rows[i]["h"]
        # no meaningful order below the roundoff floor
        if e0 and e1 and e0 > 1e-12 and e1 > 1e-12 and h0 != h1:
            rows[i]["order"] = float(math.log(e0 / e1) / math.log(h0 / h1))
    return rows


def diagnose(traj: Trajectory, contact: ContactMeasure, sys: ConstraintSystem,
             force: ForceField, admiss: AdmissibilityEstimate | None = None,
             J: float = 1.0, k: int = 1,
             convergence_table: list[dict] | None = None,
             jump_tol: float | None = None) -> DiagnosticsReport:
    """Assemble the full report for one finished run."""
    T = float(traj.times[-1])
    events = verify_impact_law(traj, sys, sup_force=force.sup_F, jump_tol=jump_tol)
    constants = compute_constants(sys, admiss, traj.velocities[0], force, T=T, k=k, J=J)
    return DiagnosticsReport(
        max_feasibility_gap=max_feasibility_gap(traj, sys),
        max_intergrid_gap=max_intergrid_gap(traj, sys),
        total_variation=total_variation(traj),
        sup_velocity=sup_velocity(traj),
        impacts=events,
        constants=constants,
        convergence_table=convergence_table or [],
        velocity_bound_ok=velocity_bound_ok(traj, contact, sys),
        momentum_residual=momentum_residual(traj, contact),
        partial_final_step=traj.partial_final_step,
        margin_ok=traj.margin_ok,
    )
