"""
Unit tests for Hamilton-Jacobi fields, the Jacobi metric, Noether quantities
and the Schrödinger check
"""
import math

import numpy as np
import pytest

from mechanics.analysis import (
    SampleGrid,
    closedness_residual,
    hj_energy_check,
    hj_residual,
    integral_curve,
    jacobi_compare,
    jacobi_metric,
    killing_form_identity,
    noether_quantity,
    schrodinger_triple_check,
    stationary_euler_example,
    trace_distance,
    work_form_closedness,
)
from mechanics.dynamics import IntegratorConfig, integrate, newton_residual_along
from mechanics.geometry import factor_metric
from parsers.expression_parser import parse_expression
from utils.errors import (
    ConfigError,
    EnergyMismatchError,
    JacobiFactorError,
    SystemDefinitionError,
)

SWIRL = """
[system]
name swirl
dim 2
coords x y

[metric]
g[1][1] = 1
g[2][2] = 1

[forces]
force[1] = -y
force[2] = x
"""


class TestSampleGrid:
    def test_points_cover_the_box(self):
        grid = SampleGrid.parse(["x:0:1:3", "y:-1:1:2"], ("x", "y", "z"), fixed={"z": 5.0})
        points = grid.points(("x", "y", "z"))
        assert points.shape == (6, 3)
        assert set(points[:, 0]) == {0.0, 0.5, 1.0}
        assert set(points[:, 1]) == {-1.0, 1.0}
        assert np.all(points[:, 2] == 5.0)

    def test_default_count(self):
        grid = SampleGrid.parse(["x:0:1"], ("x",))
        assert len(grid.points(("x",))) == 11
        assert grid.describe() == {"axes": ["x:0.0:1.0:11"], "fixed": {}}

    @pytest.mark.parametrize(
        "specs,message",
        [
            (["x:0"], "must look like coord:lo:hi"),
            (["z:0:1"], "unknown coordinate 'z'"),
            (["x:0:1", "x:2:3"], "appears twice"),
            (["x:0:a"], "non-numeric"),
            (["x:1:0"], "is empty"),
            (["x:0:1:0"], "is empty"),
            ([], "grid is empty"),
        ],
    )
    def test_invalid_specs(self, specs, message):
        with pytest.raises(ConfigError, match=message):
            SampleGrid.parse(specs, ("x", "y"))


class TestHamiltonJacobi:
    def test_freefall_field(self, freefall):
        grid = SampleGrid.parse(["y:-1:0.9:20"], freefall.coords)
        report = hj_energy_check(freefall, "X", grid)
        residuals = report.max_residuals
        assert residuals["hj"] <= 1e-10
        assert residuals["closedness"] <= 1e-10
        assert residuals["energy_deviation"] <= 1e-10
        assert report.equivalence_consistent is True
        assert report.to_dict()["energy_mean"] == pytest.approx(10.3)

    def test_per_point_rows(self, freefall):
        grid = SampleGrid.parse(["y:0:0.5:2"], freefall.coords)
        rows = hj_energy_check(freefall, "X", grid).to_dict(per_point=True)["per_point"]
        assert [row["q"] for row in rows] == [[0.0, 0.0], [0.0, 0.5]]
        assert rows[0]["energy"] == pytest.approx(10.3)

    def test_rotation_is_hj_but_not_closed(self, oscillator):
        """Circular orbits solve Newton's equation, yet E∘X varies because flat X is not closed"""
        grid = SampleGrid.parse(["x:-1:1:5", "y:-1:1:5"], oscillator.coords)
        report = hj_energy_check(oscillator, "rotation", grid)
        assert report.max_residuals["hj"] <= 1e-12
        assert report.max_residuals["closedness"] == pytest.approx(2.0)
        assert report.max_residuals["energy_deviation"] > 0.5
        assert report.equivalence_consistent is None

    def test_residual_vectors(self, freefall, oscillator):
        residual = hj_residual(freefall, "X", [0.3, 0.2])
        np.testing.assert_allclose(residual.components, 0.0, atol=1e-12)
        M = closedness_residual(oscillator, "rotation", [0.1, 0.2])
        np.testing.assert_allclose(M, [[0.0, 2.0], [-2.0, 0.0]])

    def test_integral_curve_is_a_newton_trajectory(self, freefall):
        traj = integral_curve(freefall, "X", [0.0, 0.0], IntegratorConfig(t1=0.3))
        np.testing.assert_allclose(traj.v[:, 0], 1.0)
        assert np.max(newton_residual_along(freefall, traj)) <= 1e-6
        assert np.max(np.abs(traj.energy - 10.3)) <= 1e-9


class TestForms:
    def test_potential_forces_are_closed(self, oscillator):
        assert not np.any(work_form_closedness(oscillator, [0.4, 0.1]))

    def test_swirl_is_not_closed(self, make_system):
        d_omega = work_form_closedness(make_system(SWIRL), [0.4, 0.1])
        np.testing.assert_allclose(d_omega, [[0.0, 2.0], [-2.0, 0.0]])

    def test_killing_form_identity(self, sphere):
        X = tuple(parse_expression(t, sphere.symbols) for t in ("sin(phi)", "theta*cos(phi)"))
        Y = tuple(parse_expression(t, sphere.symbols) for t in ("1", "theta"))
        lhs, rhs = killing_form_identity(sphere, X, Y, [0.9, 0.4])
        assert lhs == pytest.approx(rhs, abs=1e-12)


class TestEulerFluid:
    def test_rigid_vortex(self, load_system):
        system = load_system("euler_fluid")
        grid = SampleGrid.parse(["x:-1:1:5", "y:-1:1:5"], system.coords)
        report = stationary_euler_example(system, "vortex", grid)
        assert report.check == "euler-fluid"
        assert report.max_residuals["hj"] <= 1e-12
        assert report.max_residuals["divergence"] <= 1e-12

    def test_shear_is_divergence_free_but_not_a_solution(self, load_system):
        system = load_system("euler_fluid")
        grid = SampleGrid.parse(["x:-1:1:5", "y:-1:1:5"], system.coords)
        report = stationary_euler_example(system, "shear", grid)
        assert report.max_residuals["divergence"] == 0.0
        assert report.max_residuals["hj"] == pytest.approx(math.sqrt(2.0))

    def test_pressure_is_required(self, flat_line):
        with pytest.raises(SystemDefinitionError, match="pressure"):
            stationary_euler_example(flat_line, ("q",), [[0.0]])


class TestJacobi:
    def test_conformal_metric(self, oscillator):
        jac = jacobi_metric(oscillator, 1.0)
        assert jac.potential is None
        np.testing.assert_allclose(factor_metric(jac, [1.0, 0.0]).matrix, 0.5 * np.eye(2))
        with pytest.raises(JacobiFactorError, match="not positive"):
            factor_metric(jac, [2.0, 0.0])

    def test_time_dependent_potential(self, make_system):
        system = make_system(
            "[system]\nname d\ndim 1\ncoords x\n[metric]\ng[1][1] = 1\n"
            "[forces]\npotential = x*t\n"
        )
        with pytest.raises(SystemDefinitionError, match="time-independent"):
            jacobi_metric(system, 1.0)

    def test_oscillator_orbit(self, oscillator, state, rk4):
        s0 = state(oscillator, [1.0, 0.0], [0.0, 1.0])
        distance = jacobi_compare(oscillator, 1.0, s0, rk4(math.pi, dt=5e-3))
        assert distance.value <= 1e-3
        assert set(distance.to_dict()) == {"forward", "backward", "max"}

    def test_oscillator_ellipse(self, oscillator, state, rk4):
        s0 = state(oscillator, [1.0, 0.0], [0.0, 0.5])
        distance = jacobi_compare(oscillator, 0.625, s0, rk4(2.0 * math.pi, dt=5e-3))
        assert distance.value <= 1e-3

    def test_segment_between_turning_points(self, make_system, state, rk4):
        """At E0 = ½ both traces are the segment [−1, 1]; the geodesic reflects at each end"""
        system = make_system(
            "[system]\nname spring\ndim 1\ncoords x\n[metric]\ng[1][1] = 1\n"
            "[forces]\npotential = 0.5*x^2\n"
        )
        s0 = state(system, [0.0], [1.0])
        assert jacobi_compare(system, 0.5, s0, rk4(2.0 * math.pi)).value <= 1e-4

    def test_free_particle(self, flat_line, state, rk4):
        s0 = state(flat_line, [0.0], [1.0])
        assert jacobi_compare(flat_line, 0.5, s0, rk4(1.0, dt=0.01)).value <= 1e-9

    def test_energy_must_match(self, oscillator, state, rk4):
        s0 = state(oscillator, [1.0, 0.0], [0.0, 1.0])
        with pytest.raises(EnergyMismatchError, match="differs from E0=2.0"):
            jacobi_compare(oscillator, 2.0, s0, rk4(1.0))

    def test_trace_distance(self):
        assert trace_distance([[0, 0], [1, 0]], [[0, 0.1], [1, 0.1]]).value == pytest.approx(0.1)
        lopsided = trace_distance([[0, 0], [2, 0]], [[0, 0], [1, 0]])
        assert (lopsided.forward, lopsided.backward) == (1.0, 0.0)


class TestNoether:
    def test_angular_momentum_in_a_central_field(self, load_system, state, rk4):
        system = load_system("central")
        traj = integrate(system, state(system, [1.0, 0.0], [0.0, 1.2]), rk4(2.0))
        report = noether_quantity(system, "rotation", traj)
        assert report.values[0] == pytest.approx(1.2)
        assert report.relative_drift <= 1e-6
        assert report.killing <= 1e-12
        assert report.force_pairing <= 1e-12

    def test_anisotropy_breaks_the_symmetry(self, load_system, state, rk4):
        system = load_system("anisotropic")
        traj = integrate(system, state(system, [1.0, 0.5], [0.0, 1.0]), rk4(2.0))
        report = noether_quantity(system, "rotation", traj)
        assert report.relative_drift > 1e-2
        assert report.force_pairing > 0.1
        assert report.to_dict()["field"] == "rotation"


class TestSchrodinger:
    def test_plane_wave_passes(self, load_system):
        system = load_system("plane_wave")
        report = schrodinger_triple_check(system, "wave", 2.0, [[0.0], [1.0], [-3.0]])
        assert report.failed(1e-12) == []
        assert max(report.max_residuals.values()) <= 1e-12

    def test_curved_phase_fails_two_conditions(self, load_system):
        """S = x² has the right energy at x = 1 but is not harmonic"""
        system = load_system("plane_wave")
        report = schrodinger_triple_check(system, "bowl", 2.0, [[1.0]])
        assert report.failed(1e-9) == ["laplacian", "schrodinger"]
        assert report.max_residuals["schrodinger_im"] == pytest.approx(1.0)

    def test_wrong_energy_fails_two_conditions(self, load_system):
        system = load_system("plane_wave")
        report = schrodinger_triple_check(system, "wave", 3.0, [[0.0]])
        assert report.failed(1e-9) == ["hj_energy", "schrodinger"]

    def test_sign(self, load_system):
        system = load_system("plane_wave")
        assert schrodinger_triple_check(system, "wave", 2.0, [[0.0]], sign=1).sign == 1
        with pytest.raises(ConfigError, match="sign"):
            schrodinger_triple_check(system, "wave", 2.0, [[0.0]], sign=0)
