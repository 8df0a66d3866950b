"""Moving admissible sets defined by smooth inequality constraints.

The admissible set at time t is

    C(t) = { q in R^d : g_i(t, q) >= 0 for i = 1..p },

with each g_i twice differentiable near its zero set.  This module evaluates
the objects attached to C(t) that the time stepper and the diagnostics need:

* active constraints I_rho(t, q) = { i : g_i(t, q) <= rho },
* generators of the proximal normal cone, N(C(t), q) = -sum_i R+ grad g_i,
* the polyhedron of admissible velocities
      V(t, q) = { u : dt g_i(t, q) + <grad g_i(t, q), u> >= 0, i active },
* a prox-regularity constant eta = alpha / M (gradient floor over Hessian
  bound), below which point projection is single-valued,
* a reverse-triangle constant gamma quantifying positive linear independence
  of active gradients,
* "good direction" certificates (u, delta) with <u, -grad g_i> >= delta
  |grad g_i| for every active i, and the inward-cone constants kappa0 and
  nu_min they induce,
* pointwise hypomonotonicity residuals used to check prox-regularity
  empirically.

All operations are pure; a ConstraintSystem is shareable read-only across
threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Callable

import numpy as np
from scipy.optimize import linprog

from .errors import ConstraintEvaluationError, InvalidConstantsError

# eta cap for affine constraints (M = 0 means a convex half-space, eta = inf)
DEFAULT_ETA_MAX = 1.0e6

# below this, reverse-triangle / admissibility optima count as failures
TOL_SINGULAR = 1.0e-6


def activity_tolerance(q: np.ndarray) -> float:
    """Numerical threshold deciding g_i(t, q) == 0."""
    return 1e-8 * (1.0 + float(np.linalg.norm(q)))


@dataclass(frozen=True)
class ConstraintFunction:
    """One scalar constraint g_i(t, q) >= 0 with its derivative evaluators.

    hessian_bound is a bound on |D^2_q g_i| near the zero set; dt_bounds
    bounds |d^2_t g_i| + |d_t grad_q g_i| there.
    """

    id: int
    value: Callable[[float, np.ndarray], float]
    gradient_q: Callable[[float, np.ndarray], np.ndarray]
    dt: Callable[[float, np.ndarray], float]
    hessian_bound: float = 0.0
    dt_bounds: float = 0.0

    def value_at(self, t: float, q: np.ndarray) -> float:
        try:
            return float(self.value(t, q))
        except Exception as exc:  # noqa: BLE001 - rewrap with the offending id
            raise ConstraintEvaluationError(self.id, "value", exc) from exc

    def gradient_at(self, t: float, q: np.ndarray) -> np.ndarray:
        try:
            return np.asarray(self.gradient_q(t, q), dtype=float)
        except Exception as exc:  # noqa: BLE001
            raise ConstraintEvaluationError(self.id, "gradient", exc) from exc

    def dt_at(self, t: float, q: np.ndarray) -> float:
        try:
            return float(self.dt(t, q))
        except Exception as exc:  # noqa: BLE001
            raise ConstraintEvaluationError(self.id, "dt", exc) from exc


@dataclass(frozen=True)
class ConstraintSystem:
    """A moving admissible set with its regularity constants.

    alpha, beta bound the gradient norms near the boundary, hess_bound the
    spatial Hessians, kappa is the neighborhood width on which those bounds
    are asserted, lipschitz_c0 the Lipschitz constant of t -> C(t) in
    Hausdorff distance.  eta defaults to alpha / hess_bound (capped for
    affine systems) and may be overridden per scenario.
    """

    dim: int
    constraints: tuple[ConstraintFunction, ...]
    alpha: float = 1.0
    beta: float = 1.0
    hess_bound: float = 0.0
    kappa: float = 0.5
    lipschitz_c0: float = 0.0
    eta: float | None = None
    eta_max: float = DEFAULT_ETA_MAX

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidConstantsError(f"dim must be >= 1, got {self.dim}")
        if self.lipschitz_c0 < 0:
            raise InvalidConstantsError("lipschitz_c0 must be >= 0")
        if self.eta is None:
            object.__setattr__(self, "eta", prox_constant(self))

    @property
    def p(self) -> int:
        return len(self.constraints)

    def values(self, t: float, q: np.ndarray) -> np.ndarray:
        return np.array([c.value_at(t, q) for c in self.constraints], dtype=float)

    def gradients(self, t: float, q: np.ndarray) -> np.ndarray:
        if not self.constraints:
            return np.zeros((0, self.dim))
        return np.vstack([c.gradient_at(t, q) for c in self.constraints])

    def dts(self, t: float, q: np.ndarray) -> np.ndarray:
        return np.array([c.dt_at(t, q) for c in self.constraints], dtype=float)

    def feasible(self, t: float, q: np.ndarray, tol: float = 0.0) -> bool:
        return bool(self.p == 0 or np.all(self.values(t, q) >= -tol))

    def feasibility_gap(self, t: float, q: np.ndarray) -> float:
        """max_i (-g_i(t,q))_+ , zero on the admissible set."""
        if self.p == 0:
            return 0.0
        return float(max(0.0, -np.min(self.values(t, q))))


@dataclass(frozen=True)
class ActiveSet:
    indices: tuple[int, ...]
    rho: float

    def __contains__(self, constraint_id: int) -> bool:
        return constraint_id in self.indices

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class NormalConeGenerators:
    """Generators -grad g_i(t, q), i active; the cone is their nonnegative hull."""

    generators: np.ndarray  # shape (m, d); m = 0 means cone {0}
    base_point: tuple[float, np.ndarray]

    def sample(self, weights: np.ndarray) -> np.ndarray:
        if self.generators.shape[0] == 0:
            return np.zeros_like(self.base_point[1])
        return np.asarray(weights, dtype=float) @ self.generators


@dataclass(frozen=True)
class VelocityPolyhedron:
    """Admissible velocities {u : offsets_i + <normals_i, u> >= 0}.

    normals_i = grad_q g_i(t, q) and offsets_i = dt g_i(t, q) over the active
    set; no rows means every velocity is admissible.
    """

    normals: np.ndarray  # shape (m, d)
    offsets: np.ndarray  # shape (m,)
    base_point: tuple[float, np.ndarray]

    @property
    def nrows(self) -> int:
        return self.normals.shape[0]

    def residuals(self, u: np.ndarray) -> np.ndarray:
        if self.nrows == 0:
            return np.zeros(0)
        return self.offsets + self.normals @ np.asarray(u, dtype=float)

    def membership(self, u: np.ndarray, tol: float = 1e-12) -> bool:
        if self.nrows == 0:
            return True
        return bool(np.min(self.residuals(u)) >= -tol)


@dataclass(frozen=True)
class AdmissibilityEstimate:
    """A pointwise good-direction certificate and the constants it induces.

    kappa0 = c0/delta + 1 and
    nu_min = min( eta*delta / (2*kappa0 + 2*c0 + delta)^2,
                  r / (2*(c0 + delta + 2*kappa0)) )
    bound how far the inward cone reaches; radius_r and tau are the covering
    radius and time horizon asserted by the scenario.
    """

    delta: float
    direction: np.ndarray
    radius_r: float
    tau: float
    kappa0: float
    nu_min: float


def active_set(sys: ConstraintSystem, t: float, q: np.ndarray, rho: float = 0.0) -> ActiveSet:
    """Indices { i : g_i(t, q) <= rho }; rho = 0 uses the activity tolerance."""
    q = np.asarray(q, dtype=float)
    threshold = activity_tolerance(q) if rho == 0.0 else rho
    idx = tuple(sorted(c.id for c in sys.constraints if c.value_at(t, q) <= threshold))
    return ActiveSet(indices=idx, rho=rho)


def _active_constraints(sys: ConstraintSystem, t: float, q: np.ndarray,
                        rho: float = 0.0) -> list[ConstraintFunction]:
    act = active_set(sys, t, q, rho)
    return [c for c in sys.constraints if c.id in act.indices]


def normal_cone_generators(sys: ConstraintSystem, t: float, q: np.ndarray,
                           rho: float = 0.0) -> NormalConeGenerators:
    q = np.asarray(q, dtype=float)
    active = _active_constraints(sys, t, q, rho)
    if not active:
        gens = np.zeros((0, sys.dim))
    else:
        gens = np.vstack([-c.gradient_at(t, q) for c in active])
    return NormalConeGenerators(generators=gens, base_point=(t, q))


def velocity_polyhedron(sys: ConstraintSystem, t: float, q: np.ndarray) -> VelocityPolyhedron:
    """Half-space rows (grad g_i, dt g_i) over the exactly-active constraints."""
    q = np.asarray(q, dtype=float)
    active = _active_constraints(sys, t, q, rho=0.0)
    if not active:
        return VelocityPolyhedron(np.zeros((0, sys.dim)), np.zeros(0), (t, q))
    normals = np.vstack([c.gradient_at(t, q) for c in active])
    offsets = np.array([c.dt_at(t, q) for c in active])
    return VelocityPolyhedron(normals, offsets, (t, q))


def prox_constant(sys: ConstraintSystem, eta_max: float | None = None) -> float:
    """alpha / hess_bound, capped at eta_max for affine systems (M = 0)."""
    cap = sys.eta_max if eta_max is None else eta_max
    if sys.alpha <= 0.0:
        raise InvalidConstantsError(f"alpha must be > 0, got {sys.alpha}")
    if sys.hess_bound < 0.0:
        raise InvalidConstantsError(f"hess_bound must be >= 0, got {sys.hess_bound}")
    if sys.hess_bound == 0.0:
        return cap
    return min(sys.alpha / sys.hess_bound, cap)


def _simplex_grid(k: int, m: int):
    """All weight vectors on the k-simplex with m subdivisions per axis."""
    for comb in combinations_with_replacement(range(k), m):
        counts = np.bincount(np.array(comb), minlength=k)
        yield counts / m


def _min_combination_norm(unit_normals: np.ndarray) -> float:
    """min |sum_i mu_i n_i| over the unit simplex, n_i given unit vectors.

    Dense simplex grid followed by pairwise coordinate descent; the objective
    is convex in mu so the refinement is reliable.
    """
    k = unit_normals.shape[0]
    gram = unit_normals @ unit_normals.T

    def norm2(mu):
        return float(mu @ gram @ mu)

    if k <= 4:
        best_mu, best = None, np.inf
        for mu in _simplex_grid(k, 20):
            v = norm2(mu)
            if v < best:
                best, best_mu = v, mu
        mu = np.array(best_mu, dtype=float)
    else:
        rng = np.random.default_rng(0)
        draws = rng.dirichlet(np.ones(k), size=2 ** 14)
        vals = np.einsum("ij,jk,ik->i", draws, gram, draws)
        mu = draws[int(np.argmin(vals))]

    # pairwise descent: move mass t from i to j, exact line minimum, clamp
    for _ in range(200):
        improved = False
        for i in range(k):
            for j in range(k):
                if i == j:
                    continue
                d = np.zeros(k)
                d[i], d[j] = -1.0, 1.0
                a = float(d @ gram @ d)
                b = float(mu @ gram @ d)
                if a <= 1e-300:
                    continue
                tstar = np.clip(-b / a, -mu[j], mu[i])
                if abs(tstar) < 1e-16:
                    continue
                cand = mu + tstar * d
                if norm2(cand) < norm2(mu) - 1e-16:
                    mu = cand
                    improved = True
        if not improved:
            break
    return math.sqrt(max(norm2(mu), 0.0))


def reverse_triangle_constant(sys: ConstraintSystem, t: float, q: np.ndarray,
                              rho: float = 0.0) -> float:
    """gamma with sum lam_i |n_i| <= gamma |sum lam_i n_i| over near-active i.

    Equals 1 / min{|sum mu_i n_i/|n_i||, mu on the simplex}; returns +inf when
    the minimum falls below the singularity tolerance (the inequality fails).
    """
    q = np.asarray(q, dtype=float)
    active = _active_constraints(sys, t, q, rho)
    if not active:
        return 1.0
    if len(active) == 1:
        return 1.0
    grads = np.vstack([c.gradient_at(t, q) for c in active])
    norms = np.linalg.norm(grads, axis=1)
    if np.any(norms <= 0.0):
        return math.inf
    m = _min_combination_norm(grads / norms[:, None])
    if m < TOL_SINGULAR:
        return math.inf
    return 1.0 / m


def good_direction(sys: ConstraintSystem, t: float, q: np.ndarray, rho: float = 0.0,
                   radius_r: float = 1.0, tau: float = 1.0) -> AdmissibilityEstimate | None:
    """Best uniform-angle certificate (u, delta) at (t, q), or None on failure.

    Solves max delta s.t. <u, -n_i> >= delta |n_i| over the near-active
    gradients with u in the unit box, breaks ties toward sparse u, then
    renormalizes to the Euclidean sphere.  delta is recomputed from the
    returned direction so the certificate is exact by construction.
    """
    q = np.asarray(q, dtype=float)
    d = sys.dim
    active = _active_constraints(sys, t, q, rho)
    if not active:
        direction = np.zeros(d)
        direction[0] = -1.0
        return _estimate(sys, 1.0, direction, radius_r, tau)

    grads = np.vstack([c.gradient_at(t, q) for c in active])
    norms = np.linalg.norm(grads, axis=1)
    if np.any(norms <= 0.0):
        return None

    # phase A: maximize delta, variables (u, delta)
    c = np.zeros(d + 1)
    c[-1] = -1.0
    a_ub = np.hstack([grads, norms[:, None]])  # <u, n_i> + delta |n_i| <= 0
    b_ub = np.zeros(len(active))
    bounds = [(-1.0, 1.0)] * d + [(0.0, 2.0 * math.sqrt(d))]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if not res.success or res.x is None:
        return None
    delta_box = float(res.x[-1])
    if delta_box <= TOL_SINGULAR:
        return None

    # phase B: among optimal u, minimize sum |u_j| (tie break, makes the
    # returned direction deterministic and axis-aligned where possible)
    delta_fix = delta_box * (1.0 - 1e-9) - 1e-12
    c2 = np.concatenate([np.zeros(d), np.ones(d)])
    rows = [np.hstack([grads, np.zeros((len(active), d))])]
    b2 = [-delta_fix * norms]
    eye = np.eye(d)
    rows.append(np.hstack([eye, -eye]))      # u_j - s_j <= 0
    rows.append(np.hstack([-eye, -eye]))     # -u_j - s_j <= 0
    b2.extend([np.zeros(d), np.zeros(d)])
    res2 = linprog(c2, A_ub=np.vstack(rows), b_ub=np.concatenate(b2),
                   bounds=[(-1.0, 1.0)] * d + [(0.0, 1.0)] * d, method="highs")
    u = res2.x[:d] if (res2.success and res2.x is not None) else res.x[:d]

    nu = float(np.linalg.norm(u))
    if nu <= 0.0:
        return None
    direction = u / nu
    delta = float(np.min((-grads @ direction) / norms))
    if delta <= TOL_SINGULAR:
        return None
    return _estimate(sys, delta, direction, radius_r, tau)


def _estimate(sys: ConstraintSystem, delta: float, direction: np.ndarray,
              radius_r: float, tau: float) -> AdmissibilityEstimate:
    c0 = sys.lipschitz_c0
    kappa0 = c0 / delta + 1.0
    nu_min = min(sys.eta * delta / (2.0 * kappa0 + 2.0 * c0 + delta) ** 2,
                 radius_r / (2.0 * (c0 + delta + 2.0 * kappa0)))
    return AdmissibilityEstimate(delta=delta, direction=direction, radius_r=radius_r,
                                 tau=tau, kappa0=kappa0, nu_min=nu_min)


def hypomonotonicity_residual(sys: ConstraintSystem, t: float, x: np.ndarray,
                              y: np.ndarray, v: np.ndarray) -> float:
    """<v, y-x> - |v| |x-y|^2 / (2 eta); nonpositive iff the inequality holds.

    x is a boundary point, y any point of C(t) and v a proximal normal at x.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        return 0.0
    diff = y - x
    return float(v @ diff) - nv * float(diff @ diff) / (2.0 * sys.eta)
