import math

import numpy as np
import pytest

from conformgreen import (
    ConformalMetric,
    Configuration,
    DomainError,
    GreenFunction,
    PerturbationDirection,
    SourcePoint,
    UsageError,
    dpsi_H_fd,
    dpsi_H_integral,
    dpsi_H_pde,
    dpsi_robin,
    genericity_trial,
)
from conformgreen.perturb import genericity_study


XI = (0.2, 0.1)
POINTS = [(-0.3, 0.4), (0.5, -0.2), (0.0, -0.6)]


@pytest.fixture(scope="module")
def theta(disk_mesh):
    return PerturbationDirection.from_expression(disk_mesh, "x*y + 0.5*x")


@pytest.fixture(scope="module")
def green(flat_metric):
    return GreenFunction(flat_metric)


def test_random_direction_is_seeded_and_normalised(disk_mesh):
    a = PerturbationDirection.random(disk_mesh, 0.05, seed=4)
    b = PerturbationDirection.random(disk_mesh, 0.05, seed=4)
    c = PerturbationDirection.random(disk_mesh, 0.05, seed=5)
    assert a.norm == pytest.approx(0.05)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert PerturbationDirection.random(disk_mesh, 0.0).norm == 0


def test_radial_direction(disk_mesh):
    bump = PerturbationDirection.radial(disk_mesh, 2.0)
    assert bump.evaluate([0.0, 0.0])[0] == pytest.approx(2.0)
    assert bump.evaluate([0.5, 0.0])[0] == pytest.approx(bump.evaluate([0.0, -0.5])[0])


def test_direction_arithmetic(disk_mesh, theta):
    doubled = theta + theta
    assert np.allclose(doubled.values, theta.scaled(2).values)
    assert doubled.evaluate([0.4, 0.5])[0] == pytest.approx(2 * (0.2 + 0.2))
    with pytest.raises(UsageError):
        theta + PerturbationDirection.from_expression(disk_mesh, "x", relative=False)


def test_constant_direction_leaves_regular_part_unchanged(disk_mesh, flat_metric, green):
    xi = green.source(point=XI)
    one = PerturbationDirection.constant(disk_mesh)
    x = green.source(point=POINTS[0])
    assert abs(dpsi_H_integral(x, xi, one, flat_metric, green)) < 1e-10
    assert np.max(np.abs(dpsi_H_pde(xi, one, flat_metric, green).values)) < 1e-10
    assert abs(dpsi_H_fd(POINTS[0], xi, one, flat_metric, t=1e-2, green=green)) < 1e-8


def test_zero_direction_has_zero_difference_quotient(disk_mesh, flat_metric, green):
    zero = PerturbationDirection.constant(disk_mesh, 0.0)
    assert dpsi_H_fd(POINTS[1], green.source(point=XI), zero, flat_metric, green=green) == 0


def random_triples(mesh, count, seed=0):
    rng = np.random.default_rng(seed)
    for k in range(count):
        radius, angle = rng.uniform(0.05, 0.7, 2), rng.uniform(0, 2 * math.pi, 2)
        x, xi = (radius[:, None] * np.column_stack([np.cos(angle), np.sin(angle)])).tolist()
        yield x, xi, PerturbationDirection.random(mesh, 0.5, seed=seed + k)


def test_integral_and_pde_forms_agree(disk_mesh, flat_metric, green):
    for x, xi, theta in random_triples(disk_mesh, 10):
        source = green.source(point=xi)
        field = dpsi_H_pde(source, theta, flat_metric, green)
        expected = field.recover([x])[0]
        value = dpsi_H_integral(green.source(point=x), source, theta, flat_metric, green)
        assert abs(value - expected) <= 1e-6 * np.max(np.abs(field.values))


def test_pde_form_matches_difference_quotient(flat_metric, green, theta):
    xi = green.source(point=XI)
    field = dpsi_H_pde(xi, theta, flat_metric, green)
    scale = np.max(np.abs(field.values))
    for x in POINTS:
        quotient = dpsi_H_fd(x, xi, theta, flat_metric, green=green)
        assert abs(field.recover([x])[0] - quotient) <= 1e-3 * scale
        assert abs(dpsi_H_integral(green.source(point=x), xi, theta, flat_metric, green) - quotient) <= 1e-3 * scale


def test_boundary_source_forms_agree(flat_metric, green, theta):
    xi = green.source(param=1.0)
    field = dpsi_H_pde(xi, theta, flat_metric, green)
    scale = np.max(np.abs(field.values))
    x = green.source(point=POINTS[2])
    value = dpsi_H_integral(x, xi, theta, flat_metric, green)
    assert abs(value - field.recover([POINTS[2]])[0]) <= 1e-6 * scale
    assert abs(value - dpsi_H_fd(x, xi, theta, flat_metric, green=green)) <= 1e-3 * scale


def test_split_rule_agrees_at_discretization_order(fine_disk_mesh, fine_flat_metric, fine_green):
    theta = PerturbationDirection.from_expression(fine_disk_mesh, "x*y + 0.5*x")
    xi = fine_green.source(point=XI)
    field = dpsi_H_pde(xi, theta, fine_flat_metric, fine_green)
    scale = np.max(np.abs(field.values))
    for x in POINTS + [XI]:
        value = dpsi_H_integral(fine_green.source(point=x), xi, theta, fine_flat_metric, fine_green, rule="split")
        assert abs(value - field.recover([x])[0]) <= 1e-2 * scale


def test_split_rule_is_symmetric(flat_metric, green, theta):
    x, xi = green.source(point=POINTS[0]), green.source(point=XI)
    forward = dpsi_H_integral(x, xi, theta, flat_metric, green, rule="split")
    assert forward == pytest.approx(dpsi_H_integral(xi, x, theta, flat_metric, green, rule="split"), rel=1e-12)


def test_difference_quotient_error_is_first_order(flat_metric, green, theta):
    xi = green.source(point=XI)
    exact = dpsi_H_pde(xi, theta, flat_metric, green).recover([POINTS[0]])[0]
    coarse = abs(dpsi_H_fd(POINTS[0], xi, theta, flat_metric, t=1e-2, green=green) - exact)
    fine = abs(dpsi_H_fd(POINTS[0], xi, theta, flat_metric, t=1e-3, green=green) - exact)
    assert 8 <= coarse / fine <= 12


def test_derivatives_are_linear_in_theta(disk_mesh, flat_metric, green, theta):
    other = PerturbationDirection.from_expression(disk_mesh, "exp(y)")
    x, xi = green.source(point=POINTS[1]), green.source(point=XI)
    combined = dpsi_H_integral(x, xi, theta.scaled(2) + other, flat_metric, green)
    separate = 2 * dpsi_H_integral(x, xi, theta, flat_metric, green) + dpsi_H_integral(x, xi, other, flat_metric, green)
    assert combined == pytest.approx(separate, rel=1e-9, abs=1e-12)
    pde = dpsi_H_pde(xi, theta.scaled(2) + other, flat_metric, green).values
    expected = 2 * dpsi_H_pde(xi, theta, flat_metric, green).values + dpsi_H_pde(xi, other, flat_metric, green).values
    assert np.allclose(pde, expected, rtol=1e-9, atol=1e-12)


def test_base_point_covariance(disk_mesh):
    # an absolute direction theta at psi is the relative direction theta / psi
    metric = ConformalMetric.from_expression(disk_mesh, "1 + 0.3*x")
    green = GreenFunction(metric)
    absolute = PerturbationDirection.from_expression(disk_mesh, "x*y + 0.5*x", relative=False)
    relative = PerturbationDirection.from_expression(disk_mesh, "(x*y + 0.5*x) / (1 + 0.3*x)")
    x, xi = green.source(point=POINTS[0]), green.source(point=XI)
    expected = dpsi_H_integral(x, xi, relative, metric, green)
    assert dpsi_H_integral(x, xi, absolute, metric, green) == pytest.approx(expected, rel=1e-6)
    field = dpsi_H_pde(xi, relative, metric, green)
    scale = np.max(np.abs(field.values))
    assert abs(dpsi_H_fd(x, xi, absolute, metric, green=green) - field.recover([POINTS[0]])[0]) <= 1e-3 * scale


def test_robin_derivative_adds_log_term(flat_metric, green, theta):
    xi = green.source(point=XI)
    expected = dpsi_H_integral(xi, xi, theta, flat_metric, green) + (0.02 + 0.1) / (4 * math.pi)
    assert dpsi_robin(xi, theta, flat_metric, green) == pytest.approx(expected)


def test_inadmissible_steps(disk_mesh, flat_metric, green):
    xi = green.source(point=XI)
    shrink = PerturbationDirection.constant(disk_mesh, -1.0)
    with pytest.raises(DomainError):
        dpsi_H_fd(POINTS[0], xi, shrink, flat_metric, t=2.0, green=green)
    absolute = PerturbationDirection.from_expression(disk_mesh, "x - 2", relative=False)
    with pytest.raises(DomainError):
        dpsi_H_fd(POINTS[0], xi, absolute, flat_metric, t=1.0, green=green)
    with pytest.raises(UsageError):
        dpsi_H_fd(POINTS[0], xi, shrink, flat_metric, t=0.0, green=green)


def test_green_of_another_metric_or_unknown_rule_is_rejected(disk_mesh, flat_metric, theta):
    other = GreenFunction(ConformalMetric.constant(disk_mesh, 2.0))
    xi = SourcePoint.interior(disk_mesh, XI)
    with pytest.raises(UsageError):
        dpsi_H_pde(xi, theta, flat_metric, other)
    with pytest.raises(UsageError):
        dpsi_H_integral(xi, xi, theta, flat_metric, other, rule="split")
    with pytest.raises(UsageError):
        dpsi_H_integral(xi, xi, theta, flat_metric, rule="lumped")


def test_zero_amplitude_trial_changes_nothing(disk_mesh, flat_metric):
    config = Configuration([[0.0, 0.0]], [], [1.0])
    trial = genericity_trial(config, flat_metric, theta=PerturbationDirection.random(disk_mesh, 0.0))
    assert trial.status == "tracked"
    assert trial.after is trial.before
    assert not trial.restored
    assert trial.to_dict()["theta_norm"] == 0


@pytest.mark.slow
def test_three_forms_agree_on_the_fine_mesh(fine_disk_mesh, fine_flat_metric, fine_green):
    for x, xi, theta in random_triples(fine_disk_mesh, 10, seed=7):
        source = fine_green.source(point=xi)
        field = dpsi_H_pde(source, theta, fine_flat_metric, fine_green)
        scale = np.max(np.abs(field.values))
        expected = field.recover([x])[0]
        value = dpsi_H_integral(fine_green.source(point=x), source, theta, fine_flat_metric, fine_green)
        assert abs(value - expected) <= 1e-6 * scale
        assert abs(dpsi_H_fd(x, source, theta, fine_flat_metric, green=fine_green) - value) <= 1e-3 * scale


ANTIPODAL = Configuration([], [0.0, math.pi], [1.0, 1.0])


@pytest.mark.slow
def test_perturbation_lifts_the_rotation_degeneracy(fine_flat_metric):
    trials, summary = genericity_study(ANTIPODAL, fine_flat_metric, amplitude=0.05, trials=20, seed=0)
    assert summary["trials"] == 20
    assert trials[0].before.degenerate
    assert summary["restored"] >= 19


@pytest.mark.slow
def test_radial_perturbation_keeps_the_rotation_degeneracy(fine_disk_mesh, fine_flat_metric):
    theta = PerturbationDirection.radial(fine_disk_mesh, 0.05)
    trial = genericity_trial(ANTIPODAL, fine_flat_metric, theta=theta)
    assert trial.status == "tracked"
    assert trial.after.degenerate
    assert not trial.restored
