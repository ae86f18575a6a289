import json
import math

import numpy as np
import pytest

from conformgreen import (
    BoundaryCurve,
    ConformalMetric,
    GeometryError,
    GreenBundle,
    GreenFunction,
    SingularEvaluationError,
    SourcePoint,
    UsageError,
    build_domain,
    green_eval,
    regular_part,
    robin,
    singularity_strength,
)
from conformgreen.green import cutoff, cutoff_derivative
from conformgreen.oracle import disk_green_exact, disk_robin_exact
from conformgreen.values import LocationClass


def test_cutoff_shape():
    s = np.array([0.0, 0.5, 1.0, 1.5, 2.0, 3.0])
    assert np.allclose(cutoff(s), [1, 1, 1, 0.5, 0, 0])
    assert np.all(np.diff(cutoff(np.linspace(0, 3, 301))) <= 0)


def test_cutoff_derivatives_match_differences():
    s = np.linspace(1.05, 1.95, 10)
    step = 1e-6
    first = (cutoff(s + step) - cutoff(s - step)) / (2 * step)
    assert np.allclose(cutoff_derivative(s), first, atol=1e-6)
    second = (cutoff_derivative(s + step) - cutoff_derivative(s - step)) / (2 * step)
    assert np.allclose(cutoff_derivative(s, 2), second, atol=1e-5)
    assert np.allclose(cutoff_derivative(np.array([1.0, 2.0]), 2), 0)


def test_source_points(disk_mesh):
    inside = SourcePoint.interior(disk_mesh, (0.3, 0.1))
    assert inside.kappa == 2 * math.pi and not inside.is_boundary
    assert inside.delta == pytest.approx(disk_mesh.r_domain / 2)
    edge = SourcePoint.on_boundary(disk_mesh, 2 * math.pi + 0.5)
    assert edge.kappa == math.pi and edge.location_class is LocationClass.BOUNDARY
    assert edge.boundary_param == pytest.approx(0.5)
    assert np.allclose(edge.position, (math.cos(0.5), math.sin(0.5)))
    with pytest.raises(GeometryError):
        SourcePoint.interior(disk_mesh, (1.2, 0.0))


def test_bundle_has_zero_mean(disk_mesh, flat_metric):
    for source in (SourcePoint.interior(disk_mesh, (0.2, -0.4)), SourcePoint.on_boundary(disk_mesh, 1.0)):
        bundle = regular_part(disk_mesh, flat_metric, source)
        g, _, _ = bundle.vertex_values()
        assert abs(bundle.mean()) <= 1e-8 * np.nanmax(np.abs(g))


def test_metric_of_another_mesh_is_rejected(disk_mesh, fine_flat_metric):
    with pytest.raises(UsageError):
        regular_part(disk_mesh, fine_flat_metric, SourcePoint.interior(disk_mesh, (0.0, 0.0)))


def test_green_matches_images_formula(fine_disk_mesh, fine_green):
    source = fine_green.source(point=(0.3, 0.1))
    bundle = fine_green.bundle(source)
    vertices = fine_disk_mesh.vertices
    far = np.linalg.norm(vertices - (0.3, 0.1), axis=1) > 0.1
    interior = far & ~fine_disk_mesh.is_boundary
    numeric = green_eval(bundle, vertices[interior], smooth=False)
    exact = disk_green_exact(vertices[interior], np.array([0.3, 0.1]))
    assert np.max(np.abs(numeric - exact)) / np.max(np.abs(exact)) < 3e-2


@pytest.mark.parametrize("radius", [0.0, 0.3, 0.6])
def test_robin_matches_images_formula(fine_green, radius):
    value = fine_green.robin(fine_green.source(point=(radius, 0.0)))
    assert value == pytest.approx(disk_robin_exact([radius, 0.0])[0], abs=2e-2)


def test_constant_factor_shifts_robin(disk_mesh, flat_metric):
    source = SourcePoint.interior(disk_mesh, (0.2, 0.1))
    scaled = ConformalMetric.constant(disk_mesh, 3.0)
    shift = robin(disk_mesh, scaled, source) - robin(disk_mesh, flat_metric, source)
    assert shift == pytest.approx(math.log(3.0) / (4 * math.pi), abs=1e-10)


@pytest.mark.parametrize("psi", [None, "1 + 0.3*x"])
def test_green_is_nearly_symmetric(fine_disk_mesh, fine_flat_metric, psi):
    metric = fine_flat_metric if psi is None else ConformalMetric.from_expression(fine_disk_mesh, psi)
    green = GreenFunction(metric)
    pairs = [((0.3, 0.1), (-0.4, 0.2)), ((0.0, -0.6), (0.5, 0.5)), ((0.1, 0.1), (0.2, -0.3))]
    for x, xi in pairs:
        forward = green.green(x, green.source(point=xi))
        backward = green.green(xi, green.source(point=x))
        assert forward == pytest.approx(backward, abs=1e-2)


def test_log_coefficient_separates_interior_and_boundary(fine_green):
    interior = fine_green.bundle(fine_green.source(point=(0.1, 0.2)))
    assert singularity_strength(interior, r_min=0.02, r_max=0.2) == pytest.approx(1 / (2 * math.pi), rel=0.05)
    boundary = fine_green.bundle(fine_green.source(param=1.0))
    assert singularity_strength(boundary, r_min=0.01, r_max=0.1) == pytest.approx(1 / math.pi, rel=0.05)


def test_evaluation_at_the_pole_raises(disk_mesh, flat_metric):
    bundle = regular_part(disk_mesh, flat_metric, SourcePoint.interior(disk_mesh, (0.1, 0.0)))
    with pytest.raises(SingularEvaluationError):
        green_eval(bundle, [(0.1, 0.0)])


def test_green_function_caches_bundles(flat_metric):
    green = GreenFunction(flat_metric, cache_size=2)
    first = green.bundle(green.source(point=(0.1, 0.0)))
    assert green.bundle(green.source(point=(0.1, 0.0))) is first
    green.bundle(green.source(point=(0.2, 0.0)))
    green.bundle(green.source(point=(0.3, 0.0)))
    assert green.bundle(green.source(point=(0.1, 0.0))) is not first


def test_bundle_exports(tmp_path, disk_mesh, flat_metric):
    bundle = regular_part(disk_mesh, flat_metric, SourcePoint.interior(disk_mesh, (0.0, 0.0)))
    path = tmp_path / "g.csv"
    bundle.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "vertex,G,H,singular"
    assert len(lines) == disk_mesh.n_vertices + 1
    record = json.loads(bundle.to_json())
    assert record["kappa"] == pytest.approx(2 * math.pi)
    assert record["robin"] == pytest.approx(bundle.robin)


def test_wavy_domain_bundle_is_well_posed():
    mesh = build_domain(BoundaryCurve.wavy(0.1, 3), 0.1)
    metric = ConformalMetric.from_expression(mesh, "exp(-(x**2 + y**2))")
    green = GreenFunction(metric)
    bundle = green.bundle(green.source(point=(0.2, 0.3)))
    assert abs(bundle.mean()) < 1e-8
    assert math.isfinite(bundle.robin)


@pytest.mark.slow
def test_acceptance_green_and_robin_against_images():
    mesh = build_domain(BoundaryCurve.disk(), 0.02)
    green = GreenFunction(ConformalMetric.flat(mesh))
    rng = np.random.default_rng(1)
    for _ in range(5):
        radius, angle = math.sqrt(rng.uniform(0, 0.64)), rng.uniform(0, 2 * math.pi)
        xi = radius * np.array([math.cos(angle), math.sin(angle)])
        bundle = green.bundle(green.source(point=xi))
        far = (np.linalg.norm(mesh.vertices - xi, axis=1) > 0.1) & ~mesh.is_boundary
        numeric = green_eval(bundle, mesh.vertices[far], smooth=False)
        exact = disk_green_exact(mesh.vertices[far], xi)
        assert np.max(np.abs(numeric - exact)) / np.max(np.abs(exact)) < 1e-2
    for radius in (0.0, 0.3, 0.6, 0.8):
        value = green.robin(green.source(point=(radius, 0.0)))
        assert abs(value - disk_robin_exact([radius, 0.0])[0]) < 5e-3


def test_mean_is_measured_from_the_solved_field(disk_mesh, flat_metric):
    bundle = regular_part(disk_mesh, flat_metric, SourcePoint.interior(disk_mesh, (0.2, -0.4)))
    shifted = GreenBundle(bundle.source, bundle.regular_part + 1.0, flat_metric)
    assert shifted.mean() == pytest.approx(bundle.mean() + flat_metric.area, rel=1e-12)


def random_separated_pairs(rng, count, radius=0.8, separation=0.2):
    pairs = []
    while len(pairs) < count:
        r = np.sqrt(rng.uniform(0, radius ** 2, 2))
        angle = rng.uniform(0, 2 * math.pi, 2)
        a, b = np.column_stack([r * np.cos(angle), r * np.sin(angle)])
        if np.linalg.norm(a - b) > separation:
            pairs.append((tuple(a), tuple(b)))
    return pairs


@pytest.mark.slow
@pytest.mark.parametrize("psi", [None, "1 + 0.3*x"])
def test_acceptance_green_symmetry(psi):
    mesh = build_domain(BoundaryCurve.disk(), 0.025)
    metric = ConformalMetric.flat(mesh) if psi is None else ConformalMetric.from_expression(mesh, psi)
    green = GreenFunction(metric, cache_size=64)
    for x, xi in random_separated_pairs(np.random.default_rng(11), 20):
        forward = green.green(x, green.source(point=xi))
        backward = green.green(xi, green.source(point=x))
        assert abs(forward - backward) <= 1e-3 * max(1.0, abs(forward))


@pytest.mark.slow
def test_acceptance_oracle_error_drops_under_refinement():
    xi = np.array([0.3, 0.1])
    errors = []
    mesh = build_domain(BoundaryCurve.disk(), 0.05)
    for _ in range(2):
        green = GreenFunction(ConformalMetric.flat(mesh))
        bundle = green.bundle(green.source(point=xi))
        far = (np.linalg.norm(mesh.vertices - xi, axis=1) > 0.1) & ~mesh.is_boundary
        numeric = green_eval(bundle, mesh.vertices[far], smooth=False)
        exact = disk_green_exact(mesh.vertices[far], xi)
        errors.append(np.max(np.abs(numeric - exact)) / np.max(np.abs(exact)))
        mesh = mesh.refine()
    assert errors[1] < 1e-2
    assert errors[0] >= 3 * errors[1]


@pytest.mark.slow
def test_acceptance_boundary_robin_is_constant_on_the_disk():
    green = GreenFunction(ConformalMetric.flat(build_domain(BoundaryCurve.disk(), 0.025)))
    params = np.linspace(0, 2 * math.pi, 37)[:-1]
    values = np.array([green.robin(green.source(param=t)) for t in params])
    assert np.ptp(values) <= 1e-3 * max(1.0, abs(values.mean()))
    # R = 1/(8 pi) for the flat unit disk
    assert values.mean() == pytest.approx(1 / (8 * math.pi), abs=5e-3)


def test_green_on_the_boundary_matches_images_formula(fine_green):
    source = fine_green.source(point=(0.3, 0.1))
    params = np.linspace(0, 2 * math.pi, 9)[:-1]
    points = np.column_stack([np.cos(params), np.sin(params)])
    exact = disk_green_exact(points, np.array([0.3, 0.1]))
    values = np.array([fine_green.green_on_boundary(t, source) for t in params])
    assert np.max(np.abs(values - exact)) < 3e-2 * np.max(np.abs(exact))
    step = 1e-4
    for t in params[:3]:
        quotient = (fine_green.green_on_boundary(t + step, source) - fine_green.green_on_boundary(t - step, source)) / (2 * step)
        assert fine_green.green_tangent_derivative(t, source) == pytest.approx(quotient, rel=1e-4, abs=1e-6)
