import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conformgreen import SingularEvaluationError, UsageError
from conformgreen.oracle import (
    MEAN_CONSTANT,
    SELF_CHECK_TOLERANCES,
    disk_green_exact,
    disk_green_gradient,
    disk_mean,
    disk_robin_exact,
    disk_robin_radial_derivative,
    self_check,
)


disk_points = st.tuples(st.floats(0, 0.9), st.floats(0, 2 * math.pi)).map(
    lambda ra: np.array([ra[0] * math.cos(ra[1]), ra[0] * math.sin(ra[1])])
)


def test_self_check_passes():
    residuals = self_check()
    for name, residual in residuals.items():
        assert residual <= SELF_CHECK_TOLERANCES[name], name


@settings(max_examples=60, deadline=None)
@given(disk_points, disk_points)
def test_green_is_symmetric(x, xi):
    if np.linalg.norm(x - xi) < 1e-6:
        return
    assert disk_green_exact(x, xi)[0] == pytest.approx(disk_green_exact(xi, x)[0], abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(disk_points, st.floats(0, 2 * math.pi))
def test_normal_derivative_vanishes_on_circle(xi, angle):
    boundary = np.array([math.cos(angle), math.sin(angle)])
    assert disk_green_gradient(boundary, xi)[0] @ boundary == pytest.approx(0, abs=1e-10)


def test_mean_vanishes():
    for xi in ([0.0, 0.0], [0.3, -0.2], [0.0, 0.85]):
        assert abs(disk_mean(np.array(xi))) < 1e-10


def test_green_at_center_source():
    x = np.array([0.5, 0.0])
    expected = -math.log(0.5) / (2 * math.pi) + 0.25 / (4 * math.pi) + MEAN_CONSTANT
    assert disk_green_exact(x, [0.0, 0.0])[0] == pytest.approx(expected)


def test_robin_values():
    assert disk_robin_exact([0.0, 0.0])[0] == pytest.approx(MEAN_CONSTANT)
    r = 0.3
    expected = -math.log(1 - r * r) / (2 * math.pi) + r * r / (2 * math.pi) - 3 / (8 * math.pi)
    assert disk_robin_exact([r, 0.0])[0] == pytest.approx(expected)
    assert math.isinf(disk_robin_exact([1.0, 0.0])[0])


def test_robin_radial_derivative_matches_differences():
    r, step = 0.6, 1e-5
    difference = (disk_robin_exact([r + step, 0])[0] - disk_robin_exact([r - step, 0])[0]) / (2 * step)
    assert disk_robin_radial_derivative(r) == pytest.approx(difference, rel=1e-7)


def test_robin_boundary_rate():
    # dR/dr ~ 1 / (2 pi d) as the distance d to the circle goes to zero
    d = 1e-4
    assert disk_robin_radial_derivative(1 - d) * 2 * math.pi * d == pytest.approx(1, rel=1e-3)


def test_evaluation_errors():
    with pytest.raises(UsageError):
        disk_green_exact([1.0, 0.0], [0.0, 0.0])
    with pytest.raises(SingularEvaluationError):
        disk_green_exact([0.2, 0.1], [0.2, 0.1])
    with pytest.raises(SingularEvaluationError):
        disk_green_gradient([0.2, 0.1], [0.2, 0.1])
