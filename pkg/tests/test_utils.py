import math

import numpy as np
import pytest

from conformgreen.errors import ConfigError, UsageError
from conformgreen.utils import (
    TRIANGLE_7,
    V2,
    Expression,
    fit_power_law,
    gauss_legendre,
    points_in_polygon,
    polar_integral,
    subdivided_rule,
)


def test_v2_accepts_sequence_and_pair():
    assert V2(1, 2) == V2((1, 2)) == (1.0, 2.0)
    assert V2(np.array([3, 4])).x == 3.0


def test_v2_is_hashable_dictionary_key():
    cache = {V2(0.5, 0.25): "solve"}
    assert cache[V2((0.5, 0.25))] == "solve"


@pytest.mark.parametrize(
    "source, expected",
    [
        ("1 + 0.3*x", 1 + 0.3 * 0.5),
        ("x**2 + y**2", 0.25 + 4),
        ("exp(-(x**2 + y**2))", math.exp(-4.25)),
        ("2*pi - y/2", 2 * math.pi - 1),
        ("-x", -0.5),
    ],
)
def test_expression_evaluates(source, expected):
    assert Expression(source)(0.5, 2.0) == pytest.approx(expected)


def test_expression_is_vectorised():
    values = Expression("x*y")(np.array([1.0, 2.0]), np.array([3.0, 4.0]))
    assert np.allclose(values, [3.0, 8.0])


@pytest.mark.parametrize("source", ["__import__('os')", "x**y", "sin(x)", "z + 1", "x if y else 1", "1 +"])
def test_expression_rejects_outside_grammar(source):
    with pytest.raises(ConfigError):
        Expression(source)


def test_triangle_rule_is_exact_for_quintics():
    points, weights = TRIANGLE_7
    assert weights.sum() == pytest.approx(1.0)
    # int x**5 over the reference triangle is 1/42
    x = points[:, 1]
    assert 0.5 * weights @ x ** 5 == pytest.approx(1 / 42)


def test_subdivided_rule_keeps_weights_and_points_in_triangle():
    points, weights = subdivided_rule(2)
    assert len(weights) == 7 * 16
    assert weights.sum() == pytest.approx(1.0)
    assert np.allclose(points.sum(axis=1), 1.0)
    assert np.all(points >= 0)


def test_gauss_legendre_on_unit_interval():
    u, w = gauss_legendre(4)
    assert np.all((u > 0) & (u < 1))
    assert w @ u ** 7 == pytest.approx(1 / 8)


def test_points_in_polygon_square():
    square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
    inside = points_in_polygon(np.array([[0.5, 0.5], [1.5, 0.5], [0.2, 0.9], [-0.1, 0.1]]), square)
    assert inside.tolist() == [True, False, True, False]


def test_polar_integral_area_and_log_singularity():
    angles = 2 * np.pi * np.arange(512) / 512
    circle = np.column_stack([np.cos(angles), np.sin(angles)])
    area = polar_integral((0.0, 0.0), lambda p, rho: np.ones_like(rho), circle, 2.0)
    assert area == pytest.approx(math.pi, rel=1e-4)
    # int_{|x|<1/2} log|x| dx = 2 pi (r**2/2 log r - r**2/4) at r = 1/2
    log_part = polar_integral((0.0, 0.0), lambda p, rho: np.log(np.where(rho > 0, rho, 1)), circle, 0.5)
    assert log_part == pytest.approx(2 * math.pi * (0.125 * math.log(0.5) - 0.0625), rel=1e-6)


def test_power_law_fit_recovers_exponent_and_prefactor():
    rho = np.geomspace(0.01, 0.2, 8)
    fit = fit_power_law(rho, 0.5 / rho + 0.1)
    assert fit.slope == pytest.approx(-1, abs=1e-6)
    assert fit.prefactor == pytest.approx(0.5, rel=1e-6)
    assert fit.offset == pytest.approx(0.1, abs=1e-6)


def test_power_law_fit_needs_four_samples():
    with pytest.raises(ValueError):
        fit_power_law([0.1, 0.2, 0.3], [1, 2, 3])
