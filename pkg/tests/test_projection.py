import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxsweep import (InfeasibleConeError, VelocityPolyhedron,
                       hypomonotonicity_residual, project_point,
                       project_velocity, velocity_polyhedron)
from proxsweep.scenarios import lookup

from conftest import disc_complement, half_space_1d, sample_boundary
from oracles import enumerate_qp, grid_project


def kkt_ok(sys, t, x, res, tol=1e-9):
    """Feasibility, sign, complementarity and stationarity of a projection."""
    scale = 1.0 + np.linalg.norm(x)
    if not sys.feasible(t, res.point, tol * scale):
        return False
    if res.multipliers.size and np.min(res.multipliers) < -tol:
        return False
    grads = []
    for k, cid in enumerate(res.active_ids):
        con = next(c for c in sys.constraints if c.id == cid)
        if res.multipliers[k] * abs(con.value_at(t, res.point)) > tol * scale:
            return False
        grads.append(con.gradient_at(t, res.point))
    combo = (np.array(res.multipliers) @ np.vstack(grads)) if grads else 0.0
    return np.linalg.norm((x - res.point) + combo) <= tol * scale


class TestProjectPoint:
    def test_interior_identity(self):
        sys = half_space_1d()
        res = project_point(sys, 0.0, np.array([0.5]))
        np.testing.assert_array_equal(res.point, [0.5])
        assert res.distance == 0.0
        assert res.multipliers.size == 0
        assert res.converged and res.certified

    def test_half_line(self):
        sys = half_space_1d()
        res = project_point(sys, 0.0, np.array([-0.3]))
        assert res.point[0] == pytest.approx(0.0, abs=1e-12)
        assert res.distance == pytest.approx(0.3, abs=1e-12)
        assert res.multipliers == pytest.approx([0.3], abs=1e-12)
        assert kkt_ok(sys, 0.0, np.array([-0.3]), res)

    def test_disc_complement_radial(self):
        sys = disc_complement()
        res = project_point(sys, 0.0, np.array([0.5, 0.0]))
        np.testing.assert_allclose(res.point, [1.0, 0.0], atol=1e-10)
        assert res.distance == pytest.approx(0.5, abs=1e-10)
        assert res.certified  # 0.5 < eta = 1

    def test_outside_tube_flagged(self):
        sys = disc_complement(eta=0.3)
        res = project_point(sys, 0.0, np.array([0.5, 0.0]))
        assert not res.certified
        assert "tube" in res.diagnostic

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        for sys in (half_space_1d(), disc_complement(), lookup("pocket").system):
            for _ in range(25):
                x = rng.uniform(-2, 2, size=sys.dim)
                once = project_point(sys, 0.0, x)
                twice = project_point(sys, 0.0, once.point)
                assert np.linalg.norm(twice.point - once.point) <= 1e-10

    @pytest.mark.parametrize("name", ["floor", "wedge", "piston", "pocket"])
    def test_kkt_random(self, name):
        sys = lookup(name).system
        rng = np.random.default_rng(23)
        for _ in range(40):
            t = float(rng.uniform(0, 1.5)) if name == "piston" else 0.0
            x = rng.uniform(-2, 2, size=sys.dim)
            res = project_point(sys, t, x)
            assert res.converged
            assert kkt_ok(sys, t, x, res)

    def test_radial_formula_inside_disc(self):
        sys = disc_complement()
        rng = np.random.default_rng(29)
        for _ in range(60):
            x = rng.uniform(-0.9, 0.9, size=2)
            if not 0.05 < np.linalg.norm(x) < 0.95:
                continue
            res = project_point(sys, 0.0, x)
            np.testing.assert_allclose(res.point, x / np.linalg.norm(x), atol=1e-9)

    def test_normal_cone_membership_of_residual(self):
        # the residual x - P(x) must behave like a proximal normal at P(x):
        # <x - P(x), z - P(x)> <= |x - P(x)| |z - P(x)|^2 / (2 eta) for z in C
        sys = lookup("pocket").system
        rng = np.random.default_rng(31)
        for _ in range(20):
            x = rng.uniform(-2, 2, size=2)
            res = project_point(sys, 0.0, x)
            if res.distance == 0.0 or not res.certified:
                continue
            v = x - res.point
            for _ in range(50):
                z = res.point + res.distance * rng.normal(size=2)
                if not sys.feasible(0.0, z):
                    continue
                assert hypomonotonicity_residual(sys, 0.0, res.point, z, v) <= 1e-9

    def test_grid_oracle_agreement(self):
        rng = np.random.default_rng(37)
        resolution = 1e-4
        sys = half_space_1d()
        res = project_point(sys, 0.0, np.array([-0.3]))
        orc = grid_project(sys, 0.0, np.array([-0.3]), resolution,
                           (np.array([-3.0]), np.array([3.0])))
        assert abs(res.point[0] - orc.value[0]) <= 2 * resolution
        sys = disc_complement()
        for _ in range(10):
            x = rng.uniform(-2, 2, size=2)
            res = project_point(sys, 0.0, x)
            orc = grid_project(sys, 0.0, x, resolution,
                               (np.array([-3.0, -3.0]), np.array([3.0, 3.0])))
            assert np.linalg.norm(res.point - orc.value) <= 3 * resolution


def make_poly(normals, offsets, base=None):
    normals = np.asarray(normals, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    if base is None:
        base = (0.0, np.zeros(normals.shape[1]))
    return VelocityPolyhedron(normals, offsets, base)


def random_polyhedron_instance(rng, max_rows=10, max_dim=6):
    """Well-posed random instance: offsets derived from a feasible anchor.

    Fully random (N, b) pairs routinely produce feasible regions thousands of
    units away where absolute comparison tolerances are meaningless; anchored
    instances keep the optimum at O(1) scale while exercising every active-set
    size.
    """
    m = int(rng.integers(1, max_rows + 1))
    d = int(rng.integers(1, max_dim + 1))
    normals = rng.normal(size=(m, d))
    anchor = rng.normal(size=d)
    slack = np.abs(rng.normal(size=m)) * 0.5
    offsets = -(normals @ anchor) + slack
    u = anchor + rng.normal(size=d) * 1.5
    return make_poly(normals, offsets, base=(0.0, np.zeros(d))), u


class TestProjectVelocity:
    def test_feasible_unchanged(self):
        poly = make_poly([[1.0]], [0.0])
        res = project_velocity(poly, np.array([2.0]))
        np.testing.assert_array_equal(res.point, [2.0])
        assert res.distance == 0.0

    def test_floor_clamp(self):
        poly = make_poly([[1.0]], [0.0])
        res = project_velocity(poly, np.array([-2.0]))
        assert res.point[0] == pytest.approx(0.0, abs=1e-12)
        assert res.multipliers[0] == pytest.approx(2.0, abs=1e-10)

    def test_wedge_corner(self):
        poly = make_poly([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])
        res = project_velocity(poly, np.array([-1.0, -2.0]))
        np.testing.assert_allclose(res.point, [0.0, 0.0], atol=1e-12)

    def test_moving_wall_speed_pickup(self):
        poly = make_poly([[1.0]], [-1.0])  # membership: u >= 1
        res = project_velocity(poly, np.array([0.0]))
        assert res.point[0] == pytest.approx(1.0, abs=1e-12)

    def test_infeasible_polyhedron(self):
        poly = make_poly([[1.0], [-1.0]], [-1.0, -1.0])  # u >= 1 and u <= -1
        with pytest.raises(InfeasibleConeError) as err:
            project_velocity(poly, np.array([0.0]))
        assert err.value.base_point is poly.base_point

    def test_multiplier_reconstruction(self):
        rng = np.random.default_rng(41)
        for _ in range(50):
            poly, u = random_polyhedron_instance(rng, max_rows=5, max_dim=4)
            res = project_velocity(poly, u)
            assert np.min(res.multipliers) >= -1e-10
            rebuilt = u + res.multipliers @ poly.normals
            np.testing.assert_allclose(rebuilt, res.point, atol=1e-8)

    @given(u=st.tuples(st.floats(-5, 5), st.floats(-5, 5)),
           w=st.tuples(st.floats(-5, 5), st.floats(-5, 5)))
    @settings(max_examples=60, deadline=None)
    def test_nonexpansive(self, u, w):
        poly = make_poly([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], [0.0, 0.5, -0.2])
        pu = project_velocity(poly, np.array(u)).point
        pw = project_velocity(poly, np.array(w)).point
        assert np.linalg.norm(pu - pw) <= np.linalg.norm(np.array(u) - np.array(w)) + 1e-9

    @given(u=st.tuples(st.floats(-5, 5), st.floats(-5, 5)))
    @settings(max_examples=60, deadline=None)
    def test_zero_offset_norm_shrinks(self, u):
        poly = make_poly([[1.0, 0.2], [-0.3, 1.0]], [0.0, 0.0])
        res = project_velocity(poly, np.array(u))
        assert np.linalg.norm(res.point) <= np.linalg.norm(np.array(u)) + 1e-9

    def test_enumeration_oracle_agreement(self):
        rng = np.random.default_rng(43)
        for _ in range(60):
            poly, u = random_polyhedron_instance(rng)
            expected = enumerate_qp(poly, u)
            got = project_velocity(poly, u)
            np.testing.assert_allclose(got.point, expected.value, atol=1e-9)

    def test_oracle_flags_infeasible_too(self):
        from oracles import OracleInfeasibleError
        poly = make_poly([[1.0, 0.0], [-1.0, 0.0]], [-1.0, -1.0])
        with pytest.raises(OracleInfeasibleError):
            enumerate_qp(poly, np.zeros(2))
        with pytest.raises(InfeasibleConeError):
            project_velocity(poly, np.zeros(2))


class TestSchemeProjectionStep:
    """The correction step seen through the velocity polyhedron (static sets)."""

    def test_projected_velocity_is_admissible(self):
        sys = lookup("wedge").system
        rng = np.random.default_rng(47)
        for _ in range(20):
            t, x = sample_boundary("wedge", rng)
            poly = velocity_polyhedron(sys, t, x)
            u = rng.normal(size=2) * 3
            res = project_velocity(poly, u)
            assert poly.membership(res.point, tol=1e-9)
