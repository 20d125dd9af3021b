"""
Unit tests for input signals, controlled integration and the symmetric closure
"""
import math

import numpy as np
import pytest

from mechanics.control import (
    ControlSystem,
    PiecewiseConstantSignal,
    integrate_control,
    symbolic_christoffel,
    symmetric_closure_rank,
    symmetric_product,
)
from mechanics.expression import Expression
from mechanics.geometry import christoffel_at, metric_at
from utils.errors import BudgetExceededError, SignalError, SystemDefinitionError

SPHERE_INPUT = """
[system]
name steered_sphere
dim 2
coords theta phi

[metric]
g[1][1] = 1
g[2][2] = sin(theta)^2

[control]
control spin[2] = 1
"""

SADDLE_DRIFT = """
[system]
name saddle
dim 2
coords x y

[metric]
g[1][1] = 1
g[2][2] = 1

[forces]
potential = x*y

[control]
control push[1] = 1
"""

DAMPED = """
[system]
name damped
dim 1
coords x

[metric]
g[1][1] = 1

[forces]
force[1] = -v_x

[control]
control push[1] = 1
"""

TWO_INPUTS = """
[system]
name tilted
dim 2
coords theta phi

[metric]
g[1][1] = 1
g[2][2] = sin(theta)^2

[control]
control a[1] = cos(phi)
control a[2] = theta
control b[1] = sin(theta)
control b[2] = 1 + theta*phi
"""


def central_difference(f, q, h=1e-5):
    """Columns d f / d q^j by central differences"""
    q = np.asarray(q, dtype=float)
    columns = []
    for j in range(len(q)):
        step = np.zeros_like(q)
        step[j] = h
        columns.append((f(q + step) - f(q - step)) / (2 * h))
    return np.stack(columns, axis=-1)


def difference_product(system, Y, Z, q):
    """Symmetric product from finite-difference Jacobians and Christoffel symbols"""

    def evaluator(field):
        comps = system.vector_field(field) if isinstance(field, str) else field
        return lambda p: np.array([c.evaluate(system.bindings(p)) for c in comps])

    y, z = evaluator(Y), evaluator(Z)
    q = np.asarray(q, dtype=float)
    # D[a, b, k] = ∂_k g_ab
    D = central_difference(lambda p: metric_at(system, p), q)
    first = 0.5 * (np.einsum("lji->lij", D) + D - np.einsum("ijl->lij", D))
    gamma = np.einsum("kl,lij->kij", np.linalg.inv(metric_at(system, q)), first)
    yq, zq = y(q), z(q)
    jy, jz = central_difference(y, q), central_difference(z, q)
    return jz @ yq + jy @ zq + 2.0 * np.einsum("kij,i,j->k", gamma, yq, zq)


@pytest.fixture
def push():
    return PiecewiseConstantSignal(
        [0.0, 0.5, 1.0], [[1.0, 0.0], [-1.0, 0.0], [0.0, 0.5]], ("push_x", "push_y")
    )


@pytest.fixture
def planar(load_system):
    return load_system("planar_control")


class TestSignal:
    def test_values_hold_until_the_next_breakpoint(self, push):
        np.testing.assert_array_equal(push.at(0.25), [1.0, 0.0])
        np.testing.assert_array_equal(push.at(0.5), [-1.0, 0.0])
        np.testing.assert_array_equal(push.at(7.0), [0.0, 0.5])

    def test_before_the_first_breakpoint(self, push):
        with pytest.raises(SignalError, match="undefined at t=-1.0"):
            push.at(-1.0)

    def test_gap(self):
        signal = PiecewiseConstantSignal([0.0, 1.0], [[1.0], [np.nan]])
        assert signal.channels == ("u1",)
        with pytest.raises(SignalError, match="gap"):
            signal.at(1.5)

    def test_segments_split_at_breakpoints(self, push):
        pieces = push.segments(0.2, 1.2)
        assert [(a, b) for a, b, _ in pieces] == [(0.2, 0.5), (0.5, 1.0), (1.0, 1.2)]
        np.testing.assert_array_equal(pieces[2][2], [0.0, 0.5])

    @pytest.mark.parametrize(
        "breakpoints,values,message",
        [
            ([], np.zeros((0, 1)), "at least one breakpoint"),
            ([0.0, 1.0], [[1.0]], "one row of values per breakpoint"),
            ([1.0, 0.0], [[1.0], [2.0]], "strictly increasing"),
        ],
    )
    def test_invalid_signals(self, breakpoints, values, message):
        with pytest.raises(SignalError, match=message):
            PiecewiseConstantSignal(breakpoints, values)

    def test_bounds(self, push):
        push.check_bounds(-1.0, 1.0)
        with pytest.raises(SignalError, match="admissible input box"):
            push.check_bounds([-0.5, -1.0], [1.0, 1.0])

    def test_constant(self):
        signal = PiecewiseConstantSignal.constant([2.0, 3.0], channels=("a", "b"))
        np.testing.assert_array_equal(signal.at(100.0), [2.0, 3.0])


class TestControlSystem:
    def test_inputs_default_to_declared_controls(self, planar, push):
        csys = ControlSystem.from_system(planar, push)
        assert csys.inputs == ("push_x", "push_y")
        assert csys.bounds == ([-2.0, -math.inf], [2.0, math.inf])

    def test_declared_bounds_are_enforced(self, planar):
        signal = PiecewiseConstantSignal([0.0], [[3.0, 0.0]])
        with pytest.raises(SignalError, match="admissible input box"):
            ControlSystem.from_system(planar, signal)

    def test_channel_count(self, planar):
        with pytest.raises(SignalError, match="1 channels for 2 input fields"):
            ControlSystem.from_system(planar, PiecewiseConstantSignal([0.0], [[1.0]]))

    def test_needs_inputs(self, oscillator):
        with pytest.raises(SystemDefinitionError, match="at least one input field"):
            ControlSystem.from_system(oscillator)


class TestIntegrateControl:
    def test_bang_bang_run(self, planar, push, state, rk4):
        csys = ControlSystem.from_system(planar, push)
        traj = integrate_control(csys, state(planar, [0.0, 0.0]), rk4(1.5))
        assert len(traj) == 1501
        assert np.all(np.diff(traj.times) > 0.0)
        np.testing.assert_allclose(traj.final.q, [0.25, 0.0625], atol=1e-12)
        np.testing.assert_allclose(traj.final.v, [0.0, 0.25], atol=1e-12)
        np.testing.assert_array_equal(traj.inputs[500], [-1.0, 0.0])
        assert traj.control_values(0) == {"push_x": 1.0, "push_y": 0.0}

    def test_frame_has_input_columns(self, planar, push, state, rk4):
        csys = ControlSystem.from_system(planar, push)
        traj = integrate_control(csys, state(planar, [0.0, 0.0]), rk4(0.01))
        assert list(traj.to_frame().columns)[-2:] == ["u:push_x", "u:push_y"]

    def test_signal_required(self, planar, state, rk4):
        with pytest.raises(SignalError, match="no input signal"):
            integrate_control(ControlSystem.from_system(planar), state(planar, [0, 0]), rk4(1.0))

    def test_gap_stops_before_running(self, planar, state, rk4):
        signal = PiecewiseConstantSignal([0.0, 0.5], [[1.0, 0.0], [np.nan, 0.0]])
        csys = ControlSystem.from_system(planar, signal)
        with pytest.raises(SignalError, match="gap at t=0.5"):
            integrate_control(csys, state(planar, [0.0, 0.0]), rk4(1.0))


class TestSymmetricProduct:
    def test_coordinate_field_on_the_sphere(self, make_system):
        system = make_system(SPHERE_INPUT)
        q = [1.0, 0.0]
        product = symmetric_product(system, "spin", "spin", q).components
        gamma = christoffel_at(system, q).gamma
        np.testing.assert_allclose(product, 2.0 * gamma[:, 1, 1])
        assert product[0] == pytest.approx(-math.sin(2.0))

    def test_agrees_with_finite_differences(self, make_system):
        system = make_system(TWO_INPUTS)
        rng = np.random.default_rng(41)
        for _ in range(100):
            q = rng.uniform([0.4, -3.0], [2.7, 3.0])
            for Y, Z in (("a", "a"), ("a", "b"), ("b", "b")):
                exact = symmetric_product(system, Y, Z, q).components
                np.testing.assert_allclose(
                    exact, difference_product(system, Y, Z, q), rtol=1e-6, atol=1e-6
                )
            np.testing.assert_array_equal(
                symmetric_product(system, "a", "b", q).components,
                symmetric_product(system, "b", "a", q).components,
            )

    def test_nested_field_with_inverse_metric(self, make_system):
        """Γ^k_φφ as a field keeps g^-1 symbolic; its jets must still be exact"""
        system = make_system(SPHERE_INPUT)
        gamma = symbolic_christoffel(system)
        nested = tuple(Expression(gamma[k][1][1], system.symbols) for k in range(2))
        rng = np.random.default_rng(43)
        for _ in range(100):
            q = rng.uniform([0.4, -3.0], [2.7, 3.0])
            exact = symmetric_product(system, nested, "spin", q).components
            np.testing.assert_allclose(
                exact, difference_product(system, nested, "spin", q), rtol=1e-6, atol=1e-6
            )


class TestSymmetricClosure:
    def test_full_rank_inputs(self, planar):
        result = symmetric_closure_rank(ControlSystem.from_system(planar), [0.0, 0.0], 3)
        assert (result.rank, result.depth) == (2, 1)
        assert result.labels == ["push_x", "push_y"]

    def test_constant_input_never_grows(self, load_system):
        csys = ControlSystem.from_system(load_system("single_input"))
        result = symmetric_closure_rank(csys, [0.3, -0.2], 4)
        assert (result.rank, result.depth, result.generator_count) == (1, 4, 1)

    def test_self_product_reaches_depth_two(self, load_system):
        csys = ControlSystem.from_system(load_system("sheared_input"))
        result = symmetric_closure_rank(csys, [0.5, 0.0], 3)
        assert (result.rank, result.depth) == (2, 2)
        assert result.labels == ["Y", "<Y,Y>"]
        np.testing.assert_allclose(result.values[1], [0.0, 2.0])

    def test_curved_metric(self, make_system):
        csys = ControlSystem.from_system(make_system(SPHERE_INPUT))
        assert symmetric_closure_rank(csys, [1.0, 0.0], 2).rank == 2
        assert symmetric_closure_rank(csys, [math.pi / 2, 0.0], 2).rank == 1

    def test_drift(self, make_system):
        csys = ControlSystem.from_system(make_system(SADDLE_DRIFT))
        assert symmetric_closure_rank(csys, [0.0, 0.0], 3).rank == 1
        result = symmetric_closure_rank(csys, [0.0, 0.0], 3, include_drift=True)
        assert (result.rank, result.depth) == (2, 2)
        assert "<F,push>" in result.labels

    def test_drift_must_not_depend_on_velocity(self, make_system):
        csys = ControlSystem.from_system(make_system(DAMPED))
        with pytest.raises(SystemDefinitionError, match="configuration only"):
            symmetric_closure_rank(csys, [0.0], 2, include_drift=True)

    def test_generator_budget(self, planar):
        csys = ControlSystem.from_system(planar)
        with pytest.raises(BudgetExceededError, match="exceeded 1 generators"):
            symmetric_closure_rank(csys, [0.0, 0.0], 2, max_generators=1)

    def test_depth_must_be_positive(self, planar):
        with pytest.raises(SystemDefinitionError, match="max_depth"):
            symmetric_closure_rank(ControlSystem.from_system(planar), [0.0, 0.0], 0)

    @pytest.mark.parametrize(
        "source,include_drift",
        [
            ("planar_control", False),
            ("single_input", False),
            ("sheared_input", False),
            (SPHERE_INPUT, False),
            (SADDLE_DRIFT, True),
            (TWO_INPUTS, False),
        ],
    )
    def test_rank_grows_with_depth(self, load_system, make_system, source, include_drift):
        system = make_system(source) if "\n" in source else load_system(source)
        csys = ControlSystem.from_system(system)
        rng = np.random.default_rng(47)
        for _ in range(10):
            q = rng.uniform(0.3, 2.8, size=system.n)
            results = [
                symmetric_closure_rank(csys, q, depth, include_drift=include_drift)
                for depth in range(1, 5)
            ]
            ranks = [r.rank for r in results]
            assert ranks == sorted(ranks)
            assert ranks[-1] <= system.n
            for shallow, deep in zip(results, results[1:]):
                assert deep.labels[: len(shallow.labels)] == shallow.labels

    def test_report(self, planar):
        report = symmetric_closure_rank(ControlSystem.from_system(planar), [0.0, 0.0], 2).to_dict()
        assert report["check"] == "symmetric-rank"
        assert report["generators"] == 2
