"""Prediction-correction time stepping for the constrained second-order problem.

The state q obeys, in the sense of measures,

    du + dk = f(t, q) dt,   dk supported on contact, dk in N(C(t), q),

with inelastic impacts.  The scheme advances a position pair:

    q^0 = q0,   q^1 = q0 + h u0 + h^2 f^0,
    q^{n+1} = P_{C(t^{n+1})} [ q^n + h u^n + h^2 f^n ],

where f^n is the time average of f(s, q^n) over the step (3-point
Gauss-Legendre) and u^n = (q^n - q^{n-1}) / h.  For uniform h the predictor
equals 2 q^n - q^{n-1} + h^2 f^n.  Velocities are piecewise constant,
positions piecewise linear.  Per step the contact increment

    dk^n = u^n + h f^n - u^{n+1}

is an exact proximal normal at q^{n+1}; nonnegative least squares on the
active gradients turns it into Kuhn-Tucker multipliers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import nnls

from .errors import SimulationAbort, StepSizeTooLargeError
from .geometry import ConstraintSystem, activity_tolerance
from .projection import project_point

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(3)


@dataclass(frozen=True)
class ForceField:
    """External force f(t, q) with its Lipschitz constant and envelope.

    bound_F(t) >= |f(t, q)| for feasible q; sup_F is its sup norm, used by
    the local-horizon formulas.
    """

    f: Callable[[float, np.ndarray], np.ndarray]
    lipschitz_KL: float = 0.0
    bound_F: Callable[[float], float] = lambda t: 0.0
    sup_F: float = 0.0

    def __call__(self, t: float, q: np.ndarray) -> np.ndarray:
        return np.asarray(self.f(t, q), dtype=float)

    def step_average(self, t0: float, t1: float, q: np.ndarray) -> np.ndarray:
        """(1/h) integral of f(s, q) ds over [t0, t1], 3-point Gauss-Legendre."""
        mid, half = 0.5 * (t0 + t1), 0.5 * (t1 - t0)
        acc = np.zeros_like(np.asarray(q, dtype=float))
        for node, weight in zip(_GL_NODES, _GL_WEIGHTS):
            acc = acc + weight * self(mid + half * node, q)
        return 0.5 * acc

    def integral_bound(self, t0: float, t1: float, nodes: int = 64) -> float:
        """integral of bound_F over [t0, t1] by Gauss-Legendre quadrature."""
        xs, ws = np.polynomial.legendre.leggauss(nodes)
        mid, half = 0.5 * (t0 + t1), 0.5 * (t1 - t0)
        return float(half * sum(w * self.bound_F(mid + half * x) for x, w in zip(xs, ws)))


ZERO_FORCE = ForceField(f=lambda t, q: np.zeros_like(q))


@dataclass(frozen=True)
class SchemeState:
    """One node of the recurrence: (q^{n-1}, q^n, u^n) at t^n with step h."""

    n: int
    t_n: float
    q_prev: np.ndarray
    q_curr: np.ndarray
    u_curr: np.ndarray
    h: float


@dataclass(frozen=True)
class StepOutcome:
    state: SchemeState
    increment: np.ndarray          # dk over the step, attributed to t^{n+1}
    multipliers: np.ndarray        # length p, nonzero only on active ids
    multiplier_residual: float
    in_cone: bool
    force_average: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class Trajectory:
    """Grid values plus the interpolation rules of the scheme.

    positions are piecewise linear between grid times, velocities piecewise
    constant (u(t) = u^{n+1} on [t^n, t^{n+1})).  velocities[0] is u0.
    """

    times: np.ndarray       # shape (N+1,)
    positions: np.ndarray   # shape (N+1, d)
    velocities: np.ndarray  # shape (N+1, d)
    partial_final_step: bool = False
    margin_ok: bool = True

    @property
    def nsteps(self) -> int:
        return len(self.times) - 1

    def _locate(self, t: float) -> int:
        n = int(np.searchsorted(self.times, t, side="right") - 1)
        return min(max(n, 0), self.nsteps - 1)

    def position(self, t: float) -> np.ndarray:
        n = self._locate(t)
        t0, t1 = self.times[n], self.times[n + 1]
        w = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
        return (1.0 - w) * self.positions[n] + w * self.positions[n + 1]

    def velocity(self, t: float) -> np.ndarray:
        return self.velocities[self._locate(t) + 1]


@dataclass
class ContactMeasure:
    """Per-step contact increments and their Kuhn-Tucker multipliers.

    increments[j] = u^j + h f^j - u^{j+1} belongs to N(C(t^{j+1}), q^{j+1});
    multipliers[j] are the nonnegative lambda with
    -increments[j] = sum_i lambda_i grad g_i(t^{j+1}, q^{j+1}).
    """

    increments: np.ndarray        # shape (N, d)
    multipliers: np.ndarray       # shape (N, p)
    residuals: np.ndarray         # shape (N,)
    force_averages: np.ndarray    # shape (N, d), the f^n used per step

    @property
    def cumulative_variation(self) -> float:
        return float(np.sum(np.linalg.norm(self.increments, axis=1)))


@dataclass(frozen=True)
class MultiplierExtraction:
    values: np.ndarray
    active_ids: tuple[int, ...]
    residual: float
    in_cone: bool


def extract_multipliers(increment: np.ndarray, sys: ConstraintSystem, t: float,
                        q: np.ndarray, tol_kkt: float | None = None) -> MultiplierExtraction:
    """Nonnegative lambda minimizing |sum lambda_i grad g_i + increment|.

    The residual exceeding tol_kkt flags an increment outside the generated
    normal cone; that is diagnostic, not fatal.
    """
    increment = np.asarray(increment, dtype=float)
    q = np.asarray(q, dtype=float)
    if tol_kkt is None:
        tol_kkt = 1e-8 * (1.0 + float(np.linalg.norm(increment)))
    act = [c for c in sys.constraints if c.value_at(t, q) <= activity_tolerance(q)]
    if not act:
        res = float(np.linalg.norm(increment))
        return MultiplierExtraction(np.zeros(0), (), res, res <= tol_kkt)
    cols = np.vstack([c.gradient_at(t, q) for c in act]).T
    lam, res = nnls(cols, -increment)
    return MultiplierExtraction(lam, tuple(c.id for c in act), float(res),
                                float(res) <= tol_kkt)


def _full_multiplier_vector(sys: ConstraintSystem, ext: MultiplierExtraction) -> np.ndarray:
    out = np.zeros(sys.p)
    k = 0
    for i, c in enumerate(sys.constraints):
        if c.id in ext.active_ids:
            out[i] = ext.values[k]
            k += 1
    return out


def initialize(sys: ConstraintSystem, field: ForceField, q0: np.ndarray,
               u0: np.ndarray, h: float) -> SchemeState:
    """Build (q^0, q^1) = (q0, q0 + h u0 + h^2 f^0); q0 must be strictly interior."""
    q0 = np.asarray(q0, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    if h <= 0.0:
        raise ValueError("step size h must be > 0")
    if sys.p:
        g0 = sys.values(0.0, q0)
        worst = int(np.argmin(g0))
        if g0[worst] <= 0.0:
            raise StepSizeTooLargeError(float(g0[worst]), sys.constraints[worst].id)
    f0 = field.step_average(0.0, h, q0)
    q1 = q0 + h * u0 + h * h * f0
    if sys.p:
        g1 = sys.values(h, q1)
        worst = int(np.argmin(g1))
        if g1[worst] < -1e-12 * (1.0 + np.linalg.norm(q1)):
            raise StepSizeTooLargeError(float(g1[worst]), sys.constraints[worst].id)
    return SchemeState(n=1, t_n=h, q_prev=q0, q_curr=q1, u_curr=(q1 - q0) / h, h=h)


def step(state: SchemeState, sys: ConstraintSystem, field: ForceField,
         h_step: float | None = None) -> StepOutcome:
    """Advance one step: predict by free dynamics, correct by projection."""
    h = state.h if h_step is None else h_step
    t_next = state.t_n + h
    f_avg = field.step_average(state.t_n, t_next, state.q_curr)
    predicted = state.q_curr + h * state.u_curr + h * h * f_avg
    proj = project_point(sys, t_next, predicted)
    if not proj.converged:
        raise SimulationAbort(state.n, state, "projection did not converge: " + proj.diagnostic)
    if not proj.certified:
        raise SimulationAbort(state.n, state, "left prox-regular tube (distance "
                              f"{proj.distance:.6g} >= eta {sys.eta:.6g})")
    q_next = proj.point
    u_next = (q_next - state.q_curr) / h
    increment = state.u_curr + h * f_avg - u_next
    ext = extract_multipliers(increment, sys, t_next, q_next)
    new_state = SchemeState(n=state.n + 1, t_n=t_next, q_prev=state.q_curr,
                            q_curr=q_next, u_curr=u_next, h=h)
    return StepOutcome(state=new_state, increment=increment,
                       multipliers=_full_multiplier_vector(sys, ext),
                       multiplier_residual=ext.residual, in_cone=ext.in_cone,
                       force_average=f_avg)


def _grid(h: float, T: float) -> tuple[int, bool]:
    """Number of full steps and whether a shrunk final step is needed."""
    ratio = T / h
    n_round = round(ratio)
    if n_round >= 1 and abs(ratio - n_round) <= 1e-9 * max(1.0, ratio):
        return n_round, False
    n_full = int(np.floor(ratio))
    return n_full, True


def run(sys: ConstraintSystem, field: ForceField, q0: np.ndarray, u0: np.ndarray,
        h: float, T: float) -> tuple[Trajectory, ContactMeasure]:
    """Integrate from t = 0 to T; deterministic given its inputs.

    Step failures propagate as SimulationAbort carrying the step index and
    the last valid state.
    """
    if not h < T:
        raise ValueError(f"need h < T, got h={h}, T={T}")
    q0 = np.asarray(q0, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    n_full, partial = _grid(h, T)

    state = initialize(sys, field, q0, u0, h)
    d = sys.dim
    times = [0.0, h]
    positions = [q0, state.q_curr]
    velocities = [u0, state.u_curr]
    increments = [np.zeros(d)]
    multipliers = [np.zeros(sys.p)]
    residuals = [0.0]
    f_avgs = [field.step_average(0.0, h, q0)]

    def record(out: StepOutcome):
        times.append(out.state.t_n)
        positions.append(out.state.q_curr)
        velocities.append(out.state.u_curr)
        increments.append(out.increment)
        multipliers.append(out.multipliers)
        residuals.append(out.multiplier_residual)
        f_avgs.append(out.force_average)

    while state.n < n_full:
        out = step(state, sys, field)
        state = out.state
        record(out)
    if partial:
        h_last = T - n_full * h
        if h_last > 1e-12 * T:
            out = step(state, sys, field, h_step=h_last)
            state = out.state
            record(out)

    margin = sys.p == 0 or _interior_margin(sys, q0) > h * (
        float(np.linalg.norm(u0)) + field.integral_bound(0.0, T))
    traj = Trajectory(times=np.array(times), positions=np.vstack(positions),
                      velocities=np.vstack(velocities), partial_final_step=partial,
                      margin_ok=bool(margin))
    contact = ContactMeasure(increments=np.vstack(increments),
                             multipliers=np.vstack(multipliers) if sys.p else
                             np.zeros((len(increments), 0)),
                             residuals=np.array(residuals),
                             force_averages=np.vstack(f_avgs))
    return traj, contact


def _interior_margin(sys: ConstraintSystem, q0: np.ndarray) -> float:
    """Lower bound on the distance from q0 to the boundary of C(0)."""
    return float(np.min(sys.values(0.0, q0))) / sys.beta
