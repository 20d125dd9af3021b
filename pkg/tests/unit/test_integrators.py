"""
Unit tests for the Runge-Kutta drivers
"""
import math
from unittest.mock import Mock

import numpy as np
import pytest

from utils.errors import ConfigError, MechanicsError
from utils.integrators import (
    integrate_adaptive,
    integrate_fixed,
    rk4_step,
    solve,
    uniform_steps,
)


def decay(t, y):
    return -y


class TestUniformSteps:
    @pytest.mark.parametrize(
        "t0,t1,dt,steps",
        [(0.0, 1.0, 0.1, 10), (0.0, 1.0, 0.3, 3), (0.0, 0.01, 1.0, 1), (2.0, 3.0, 1e-3, 1000)],
    )
    def test_step_count(self, t0, t1, dt, steps):
        count, h = uniform_steps(t0, t1, dt)
        assert count == steps
        assert h == pytest.approx((t1 - t0) / steps)


class TestFixedStep:
    def test_rk4_is_exact_for_cubics(self):
        step = rk4_step(lambda t, y: np.array([3.0 * t**2]), 0.0, np.array([0.0]), 0.5)
        assert step[0] == pytest.approx(0.125, abs=1e-15)

    def test_exponential(self):
        outcome = integrate_fixed(lambda t, y: y, 0.0, [1.0], 1.0, 0.01)
        assert len(outcome.times) == 101
        assert outcome.times[-1] == 1.0
        assert outcome.states[-1][0] == pytest.approx(math.e, abs=1e-8)
        assert outcome.error is None

    def test_stops_at_a_mechanics_error(self):
        def rhs(t, y):
            if t > 0.5:
                raise MechanicsError(f"metric degenerate at t={t}")
            return decay(t, y)

        outcome = integrate_fixed(rhs, 0.0, [1.0], 1.0, 0.1)
        assert outcome.times[-1] == pytest.approx(0.5)
        assert len(outcome.states) == 6
        assert outcome.error.startswith("metric degenerate")

    def test_non_finite_state(self):
        outcome = integrate_fixed(lambda t, y: np.array([math.inf]), 0.0, [0.0], 1.0, 0.5)
        assert outcome.times == [0.0]
        assert outcome.error == "non-finite state at t=0.5"


class TestAdaptive:
    def test_decay(self):
        outcome = integrate_adaptive(decay, 0.0, [1.0], 2.0, 1e-10, 1e-12, 1e-12)
        assert outcome.times[-1] == 2.0
        assert np.all(np.diff(outcome.times) > 0.0)
        assert outcome.states[-1][0] == pytest.approx(math.exp(-2.0), abs=1e-8)

    def test_max_step(self):
        outcome = integrate_adaptive(decay, 0.0, [1.0], 1.0, 1e-3, 1e-6, 1e-12, dt_max=0.05)
        assert np.max(np.diff(outcome.times)) <= 0.05 + 1e-15

    def test_step_size_underflow(self):
        outcome = integrate_adaptive(
            lambda t, y: -50.0 * y, 0.0, [1.0], 10.0, 1e-10, 1e-12, dt_min=1.0
        )
        assert "step size underflow" in outcome.error
        assert outcome.times[-1] < 10.0


class TestSolve:
    def test_dispatch(self):
        cfg = Mock(method="rk4", t0=0.0, t1=1.0, dt=0.25)
        assert solve(decay, [1.0], cfg).times == [0.0, 0.25, 0.5, 0.75, 1.0]

    def test_interval_override(self):
        cfg = Mock(method="rk4", t0=0.0, t1=1.0, dt=0.25)
        assert solve(decay, [1.0], cfg, t0=1.0, t1=1.5).times == [1.0, 1.25, 1.5]

    def test_unknown_method(self):
        with pytest.raises(ConfigError, match="unknown integrator method 'euler'"):
            solve(decay, [1.0], Mock(method="euler", t0=0.0, t1=1.0))
