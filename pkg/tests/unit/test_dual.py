import math

import numpy as np
import pytest

from utils.dual import Dual2


@pytest.fixture
def xy():
    """Seeds x = 0.5, y = -1.5 over two directions"""
    return Dual2.variable(0.5, 0, 2), Dual2.variable(-1.5, 1, 2)


class TestDual2:
    def test_product_rule(self, xy):
        x, y = xy
        f = x * y
        assert f.value == -0.75
        np.testing.assert_allclose(f.grad, [-1.5, 0.5])
        np.testing.assert_allclose(f.hess, [[0.0, 1.0], [1.0, 0.0]])

    def test_chain_rule(self, xy):
        x, _ = xy
        f = (x * x).sin()
        assert f.value == pytest.approx(math.sin(0.25))
        assert f.grad[0] == pytest.approx(math.cos(0.25) * 1.0)
        expected = 2 * math.cos(0.25) - 4 * 0.25 * math.sin(0.25)
        assert f.hess[0, 0] == pytest.approx(expected)

    def test_quotient(self, xy):
        x, y = xy
        f = x / y
        assert f.value == pytest.approx(-1.0 / 3.0)
        np.testing.assert_allclose(f.grad, [1.0 / -1.5, -0.5 / 2.25])

    def test_first_order_jets_carry_no_hessian(self):
        x = Dual2.variable(2.0, 0, 1, order=1)
        f = (x * x).exp()
        assert f.hess is None
        assert f.grad[0] == pytest.approx(4.0 * math.exp(4.0))

    def test_power_const(self):
        x = Dual2.variable(-2.0, 0, 1)
        f = x.power_const(3.0)
        assert f.value == -8.0
        assert f.grad[0] == 12.0
        assert f.hess[0, 0] == -12.0

    def test_constants(self):
        c = Dual2.constant(3.0, 2)
        assert c.is_constant()
        assert not Dual2.variable(3.0, 1, 2).is_constant()
