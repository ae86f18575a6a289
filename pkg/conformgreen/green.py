"""Neumann Green and Robin functions of a conformal metric.

The Green function with pole xi is split as::

    G(x, xi) = -(1/kappa) chi(|x - xi| / delta) log|x - xi| + H(x, xi)

where kappa is 2 pi for interior and pi for boundary sources. The regular part
H solves a Neumann problem whose data are the exact derivatives of the
singular part, integrated by quadrature (the cutoff support may cross the
boundary, in which case the boundary flux terms carry the difference).
"""
import csv
import json
import logging
import math
import typing as T
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, SingularEvaluationError, UsageError
from .fem import ConformalMetric, ScalarField, integrate
from .mesh import Mesh
from .utils import V2, gauss_legendre, polar_integral, subdivided_rule
from .values import LocationClass


logger = logging.getLogger(__name__)


def _smoothstep(u):
    return u ** 4 * (35 - 84 * u + 70 * u ** 2 - 20 * u ** 3)


def cutoff(s):
    """C3 cutoff: 1 on [-1, 1], 0 outside (-2, 2), monotone in between"""
    s = np.abs(np.asarray(s, dtype=float))
    u = np.clip(s - 1, 0.0, 1.0)
    return 1 - _smoothstep(u)


def cutoff_derivative(s, order=1):
    """First or second derivative of :any:`cutoff` for s >= 0"""
    s = np.asarray(s, dtype=float)
    u = np.clip(s - 1, 0.0, 1.0)
    if order == 1:
        return -140 * u ** 3 * (1 - u) ** 3
    if order == 2:
        return -420 * u ** 2 * (1 - u) ** 2 * (1 - 2 * u)
    raise ValueError("order must be 1 or 2")


@dataclass(frozen=True)
class SourcePoint:
    """A pole of the Green function"""

    position: V2
    location_class: LocationClass
    delta: float
    boundary_param: T.Optional[float] = None

    @property
    def kappa(self):
        return self.location_class.kappa

    @property
    def is_boundary(self):
        return self.location_class is LocationClass.BOUNDARY

    @classmethod
    def interior(cls, mesh: Mesh, point):
        point = V2(point)
        if not mesh.contains([point])[0]:
            raise GeometryError(f"Source {point} is outside the domain")
        return cls(point, LocationClass.INTERIOR, mesh.r_domain / 2)

    @classmethod
    def on_boundary(cls, mesh: Mesh, param: float):
        if mesh.curve is None:
            raise UsageError("Boundary sources need the boundary curve")
        param = float(mesh.curve.wrap(param))
        return cls(V2(mesh.curve.position(param)[0]), LocationClass.BOUNDARY, mesh.r_domain / 2, param)

    def to_dict(self):
        return {
            "position": list(self.position),
            "location_class": self.location_class.value,
            "kappa": self.kappa,
            "delta": self.delta,
            "boundary_param": self.boundary_param,
        }


def _log_radial(source, x):
    diff = np.atleast_2d(np.asarray(x, dtype=float)) - np.asarray(source.position)
    r = np.linalg.norm(diff, axis=1)
    return diff, r


def singular_part(source: SourcePoint, x):
    """``-(1/kappa) chi(|x - xi| / delta) log|x - xi|`` (vectorised over x)"""
    _, r = _log_radial(source, x)
    if np.any(r == 0):
        raise SingularEvaluationError("Singular part evaluated at the source")
    return -cutoff(r / source.delta) * np.log(r) / source.kappa


def singular_gradient(source: SourcePoint, x):
    diff, r = _log_radial(source, x)
    if np.any(r == 0):
        raise SingularEvaluationError("Singular part evaluated at the source")
    s = r / source.delta
    radial = cutoff_derivative(s) / source.delta * np.log(r) + cutoff(s) / r
    return -(radial / r)[:, None] * diff / source.kappa


def _cutoff_log_laplacian(source, r):
    """Laplacian of chi(r / delta) log r away from r = 0 (supported on delta <= r <= 2 delta)"""
    delta = source.delta
    s = r / delta
    safe = np.where(r > 0, r, 1.0)
    log_r = np.log(safe)
    return (
        cutoff_derivative(s, 2) / delta ** 2 * log_r
        + cutoff_derivative(s) / (delta * safe) * log_r
        + 2 * cutoff_derivative(s) / (delta * safe)
    )


def singular_integral(source: SourcePoint, metric: ConformalMetric, weight=None):
    """``int chi log|x - xi| * psi * weight dx`` with pole-aware polar quadrature

    `weight` is an optional callable of points.
    """

    def integrand(points, rho):
        values = cutoff(rho / source.delta) * np.log(np.where(rho > 0, rho, 1.0)) * metric.evaluate(points)
        if weight is not None:
            values = values * weight(points)
        return values

    return polar_integral(source.position, integrand, metric.mesh.polygon, 2 * source.delta)


def log_normal_flux(source: SourcePoint, curve, t):
    """Outward normal derivative of ``chi(|x - xi| / delta) log|x - xi|`` at the curve points of parameters t

    At the source itself (boundary sources) the limit is half the curvature.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    diff = curve.position(t) - np.asarray(source.position)
    r = np.linalg.norm(diff, axis=1)
    safe = np.where(r > 0, r, 1.0)
    s = r / source.delta
    radial = cutoff_derivative(s) / source.delta * np.log(safe) + cutoff(s) / safe
    flux = radial * np.sum(diff * curve.normal(t), axis=1) / safe
    return np.where(r > 0, flux, curve.curvature(t) / 2)


def regular_loads(mesh: Mesh, metric: ConformalMetric, source: SourcePoint):
    """Assembled data of the Neumann problem for H

    Returns ``(volume_load, boundary_load, target_mean)``, the mean being
    ``(1/kappa) int chi log|x - xi| dv_g``.
    """
    kappa, delta = source.kappa, source.delta
    xi = np.asarray(source.position)
    n = mesh.n_vertices

    near = np.flatnonzero(np.linalg.norm(mesh.centroids - xi, axis=1) < 2 * delta + mesh.h_max)
    bary, weights = subdivided_rule(1)
    corners = mesh.vertices[mesh.triangles[near]]
    points = np.einsum("qk,tkd->tqd", bary, corners)
    r = np.linalg.norm(points - xi, axis=2)
    values = -_cutoff_log_laplacian(source, r) / kappa
    contributions = np.einsum("tq,q,qk->tk", values, weights, bary) * mesh.signed_areas[near][:, None]
    volume_load = np.bincount(mesh.triangles[near].ravel(), weights=contributions.ravel(), minlength=n)
    volume_load -= metric.vertex_measure / metric.area

    boundary_load = np.zeros(n)
    if mesh.curve is not None:
        curve = mesh.curve
        start = mesh.boundary_params
        end = np.roll(start, -1)
        end = np.where(end <= start, end + curve.period, end)
        edges = mesh.boundary_edges
        chord_mid = (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]]) / 2
        chord_len = np.linalg.norm(mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]], axis=1)
        close = np.flatnonzero(np.linalg.norm(chord_mid - xi, axis=1) < 2 * delta + chord_len)
        if len(close):
            u, w = gauss_legendre(3)
            t = start[close, None] + (end - start)[close, None] * u[None, :]
            flat_t = t.ravel()
            ds = curve.speed(flat_t) * np.repeat((end - start)[close], len(u))
            flux = log_normal_flux(source, curve, flat_t)
            flux = (flux * ds * np.tile(w, len(close)) / kappa).reshape(len(close), len(u))
            boundary_load += np.bincount(edges[close, 0], weights=flux @ (1 - u), minlength=n)
            boundary_load += np.bincount(edges[close, 1], weights=flux @ u, minlength=n)

    return volume_load, boundary_load, singular_integral(source, metric) / kappa


class GreenBundle:
    """Regular part of the Green function for one source, on one metric"""

    def __init__(self, source: SourcePoint, regular_part: ScalarField, metric: ConformalMetric):
        self.source = source
        self.regular_part = regular_part
        self.metric = metric

    @property
    def mesh(self):
        return self.metric.mesh

    def regular(self, x, smooth=True):
        """H(x, xi): moving least squares recovery, or linear interpolation with ``smooth=False``"""
        if smooth:
            return self.regular_part.recover(x)
        return self.regular_part(x, extrapolate=True)

    def regular_gradient(self, x):
        return self.regular_part.recover_gradient(x)

    def normal_slope(self, params):
        """Outward normal derivative of H at curve points; G itself has none away from the pole"""
        return log_normal_flux(self.source, self.mesh.curve, params) / self.source.kappa

    def regular_on_boundary(self, params):
        """H at the curve points of parameters `params`, recovered with the known normal slope"""
        return self.regular_part.recover_boundary(params, self.normal_slope(params))

    def regular_boundary_derivative(self, params):
        """d/dt of :any:`regular_on_boundary`, by fourth-order central differences"""
        params = np.atleast_1d(np.asarray(params, dtype=float))
        step = 1e-3 * self.regular_part._recovery_radius / self.mesh.curve.speed(params)
        values = {k: self.regular_on_boundary(params + k * step) for k in (-2, -1, 1, 2)}
        return (values[-2] - 8 * values[-1] + 8 * values[1] - values[2]) / (12 * step)

    def __call__(self, x, smooth=True):
        return green_eval(self, x, smooth=smooth)

    def mean(self):
        """``int G dv_g``: the measure of the solved H plus the analytic integral of the singular part"""
        singular = singular_integral(self.source, self.metric)
        return integrate(self.regular_part, self.metric) - singular / self.source.kappa

    @property
    def robin(self):
        return robin_from_bundle(self)

    def vertex_values(self):
        """(G, H, singular) at the mesh vertices; NaN where a vertex coincides with the pole"""
        vertices = self.mesh.vertices
        r = np.linalg.norm(vertices - np.asarray(self.source.position), axis=1)
        singular = np.full(len(vertices), np.nan)
        ok = r > 0
        singular[ok] = singular_part(self.source, vertices[ok])
        h = self.regular_part.values
        return h + singular, h, singular

    def to_csv(self, path):
        g, h, singular = self.vertex_values()
        with open(path, "w", newline="") as stream:
            writer = csv.writer(stream)
            writer.writerow(["vertex", "G", "H", "singular"])
            for index, row in enumerate(zip(g, h, singular)):
                writer.writerow([index, *(f"{value:.17g}" for value in row)])

    def record(self):
        return {
            "source": list(self.source.position),
            "location_class": self.source.location_class.value,
            "kappa": self.source.kappa,
            "delta": self.source.delta,
            "robin": self.robin,
        }

    def to_json(self):
        return json.dumps(self.record(), indent=2, sort_keys=True)


def regular_part(mesh: Mesh, metric: ConformalMetric, source: SourcePoint) -> GreenBundle:
    """Solve for H(., xi); the factorization of `metric` is reused across sources"""
    if metric.mesh is not mesh:
        raise UsageError("The metric belongs to another mesh")
    if not source.is_boundary and not mesh.contains([source.position])[0]:
        raise GeometryError(f"Source {source.position} is outside the domain")
    volume_load, boundary_load, target_mean = regular_loads(mesh, metric, source)
    values = metric.operators.solve(volume_load, boundary_load, target_mean)
    logger.debug("Regular part solved for %s source at %s", source.location_class.value, source.position)
    return GreenBundle(source, ScalarField(mesh, values), metric)


def green_eval(bundle: GreenBundle, x, smooth=True):
    """G(x, xi) = singular part + regular part"""
    return singular_part(bundle.source, x) + bundle.regular(x, smooth=smooth)


def green_gradient(bundle: GreenBundle, x):
    """Gradient of G(., xi) at x: analytic singular part plus recovered regular part"""
    return singular_gradient(bundle.source, x) + bundle.regular_gradient(x)


def robin_from_bundle(bundle: GreenBundle) -> float:
    source = bundle.source
    position = np.asarray(source.position)[None, :]
    if source.is_boundary:
        h = float(bundle.regular_on_boundary([source.boundary_param])[0])
    else:
        h = float(bundle.regular_part.recover(position)[0])
    psi = float(bundle.metric.evaluate(position)[0])
    return h + math.log(psi) / (2 * bundle.source.kappa)


def robin(mesh: Mesh, metric: ConformalMetric, source: SourcePoint) -> float:
    """R(xi) = H(xi, xi) + log(psi(xi)) / (2 kappa)"""
    return robin_from_bundle(regular_part(mesh, metric, source))


def singularity_strength(bundle: GreenBundle, n_radii=8, n_angles=24, r_min=None, r_max=None):
    """Fit c in ``G ~ -c log|x - xi| + a + b.(x - xi)`` near the source

    Sample radii run geometrically from `r_min` (default 4 h_max) to `r_max`
    (default delta); only samples inside the domain are used.
    """
    source = bundle.source
    r_min = r_min or 4 * bundle.mesh.h_max
    r_max = r_max or source.delta
    if r_min >= r_max:
        raise UsageError("Mesh too coarse to resolve the singularity inside the cutoff plateau")
    radii = np.geomspace(r_min, r_max, n_radii)
    angles = 2 * math.pi * np.arange(n_angles) / n_angles
    offsets = (radii[:, None, None] * np.stack([np.cos(angles), np.sin(angles)], axis=-1)[None]).reshape(-1, 2)
    points = np.asarray(source.position) + offsets
    inside = bundle.mesh.contains(points)
    points, offsets = points[inside], offsets[inside]
    values = green_eval(bundle, points, smooth=False)
    design = np.column_stack([-np.log(np.linalg.norm(offsets, axis=1)), np.ones(len(points)), offsets])
    coeffs, *_ = np.linalg.lstsq(design, values, rcond=None)
    return float(coeffs[0])


class GreenFunction:
    """Green and Robin functions of one metric, caching one regular part per source

    Sources are keyed by their position (and class), so repeated finite
    difference stencils reuse earlier solves.
    """

    def __init__(self, metric: ConformalMetric, cache_size=512):
        self.metric = metric
        self.mesh = metric.mesh
        self.cache_size = cache_size
        self._bundles = {}

    def source(self, point=None, param=None):
        if param is not None:
            return SourcePoint.on_boundary(self.mesh, param)
        return SourcePoint.interior(self.mesh, point)

    def bundle(self, source: SourcePoint) -> GreenBundle:
        key = (source.location_class, source.position)
        if key not in self._bundles:
            if len(self._bundles) >= self.cache_size:
                self._bundles.pop(next(iter(self._bundles)))
            self._bundles[key] = regular_part(self.mesh, self.metric, source)
        return self._bundles[key]

    def robin(self, source: SourcePoint) -> float:
        return self.bundle(source).robin

    def green(self, x, source: SourcePoint) -> float:
        return float(green_eval(self.bundle(source), [x])[0])

    def green_gradient(self, x, source: SourcePoint):
        return green_gradient(self.bundle(source), [x])[0]

    def green_on_boundary(self, param, source: SourcePoint) -> float:
        """G(gamma(t), xi) for a curve point, with H recovered from the inside"""
        point = self.mesh.curve.position(param)
        bundle = self.bundle(source)
        return float(singular_part(source, point)[0] + bundle.regular_on_boundary([param])[0])

    def green_tangent_derivative(self, param, source: SourcePoint) -> float:
        """d/dt G(gamma(t), xi)"""
        curve = self.mesh.curve
        singular = singular_gradient(source, curve.position(param))[0] @ curve.derivative(param)[0]
        return float(singular + self.bundle(source).regular_boundary_derivative([param])[0])
