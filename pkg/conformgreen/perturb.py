"""Derivative of the regular part with respect to the conformal factor.

For ``psi -> psi (1 + t theta)`` the derivative of ``H(x, xi)`` at t = 0 is::

    D H(x, xi)[theta] = -(1/|Sigma|_g) int (G(z, x) + G(z, xi)) theta(z) dv_g(z)

and, as a function of x, it solves the Neumann problem::

    -Delta_g w = (1/|Sigma|_g**2) int theta dv_g - theta / |Sigma|_g,   d/dnu w = 0,
    int w dv_g = -int G(., xi) theta dv_g

Both forms are available, together with a plain finite difference quotient
and the genericity experiment built on them.
"""
import logging
import math
import typing as T
from dataclasses import dataclass

import numpy as np

from .critical import config_distance, newton_search
from .errors import DomainError, UsageError
from .fem import ConformalMetric, ScalarField, integrate
from .green import GreenFunction, SourcePoint, regular_part, singular_integral
from .interaction import Configuration, HessianReport, InteractionEnergy
from .utils import TRIANGLE_7, Expression


logger = logging.getLogger(__name__)


class PerturbationDirection:
    """A direction theta in the conformal factor

    Args:
      - mesh (Mesh): the domain
      - values (array (nv,)): theta at the vertices
      - analytic (callable or None): closed form ``theta(x, y)``
      - relative (bool): True for ``psi (1 + t theta)``, False for ``psi + t theta``
    """

    def __init__(self, mesh, values, analytic: T.Optional[T.Callable] = None, relative=True):
        values = np.array(values, dtype=float).reshape(-1)
        if values.shape != (mesh.n_vertices,):
            raise UsageError("theta needs one value per mesh vertex")
        values.setflags(write=False)
        self.mesh = mesh
        self.values = values
        self.analytic = analytic
        self.relative = relative

    @classmethod
    def from_function(cls, mesh, func, relative=True):
        return cls(mesh, func(mesh.vertices[:, 0], mesh.vertices[:, 1]), func, relative)

    @classmethod
    def from_expression(cls, mesh, source: str, relative=True):
        return cls.from_function(mesh, Expression(source), relative)

    @classmethod
    def constant(cls, mesh, value=1.0):
        return cls.from_function(mesh, lambda x, y: np.full(np.shape(x), float(value)))

    @classmethod
    def random(cls, mesh, amplitude=1.0, seed=0, degree=4):
        """Random trigonometric field of total degree 1..`degree` on the bounding box, sup norm `amplitude`"""
        rng = np.random.default_rng(seed)
        low = mesh.vertices.min(axis=0)
        width = mesh.vertices.max(axis=0) - low
        modes = [(j, k) for j in range(degree + 1) for k in range(degree + 1) if 1 <= j + k <= degree]
        terms = [(j, k, a, b, rng.uniform(-1, 1)) for j, k in modes for a in (np.cos, np.sin) for b in (np.cos, np.sin)]

        def raw(x, y):
            u = math.pi * (np.asarray(x, dtype=float) - low[0]) / width[0]
            v = math.pi * (np.asarray(y, dtype=float) - low[1]) / width[1]
            return sum(c * a(j * u) * b(k * v) for j, k, a, b, c in terms)

        sup = float(np.max(np.abs(raw(mesh.vertices[:, 0], mesh.vertices[:, 1]))))
        scale = amplitude / sup if sup > 0 else 0.0
        return cls.from_function(mesh, lambda x, y: scale * raw(x, y))

    @classmethod
    def radial(cls, mesh, amplitude=1.0, center=None):
        """``amplitude * cos(pi |x - center| / R)``, R the largest vertex distance from center"""
        if center is None:
            center = mesh.curve.center if mesh.curve is not None else (0.0, 0.0)
        center = np.asarray(center, dtype=float)
        reach = float(np.max(np.linalg.norm(mesh.vertices - center, axis=1)))

        def profile(x, y):
            r = np.hypot(np.asarray(x, dtype=float) - center[0], np.asarray(y, dtype=float) - center[1])
            return amplitude * np.cos(math.pi * r / reach)

        return cls.from_function(mesh, profile)

    @property
    def norm(self):
        """Sup norm over the vertices"""
        return float(np.max(np.abs(self.values)))

    @property
    def field(self):
        return ScalarField(self.mesh, self.values)

    def evaluate(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.analytic is not None:
            return np.asarray(self.analytic(points[:, 0], points[:, 1]), dtype=float)
        return self.field(points, extrapolate=True)

    def scaled(self, factor):
        analytic = None
        if self.analytic is not None:
            base = self.analytic
            analytic = lambda x, y: factor * base(x, y)
        return PerturbationDirection(self.mesh, factor * self.values, analytic, self.relative)

    def __add__(self, other):
        if other.mesh is not self.mesh or other.relative != self.relative:
            raise UsageError("Directions live on different meshes or have different kinds")
        analytic = None
        if self.analytic is not None and other.analytic is not None:
            first, second = self.analytic, other.analytic
            analytic = lambda x, y: first(x, y) + second(x, y)
        return PerturbationDirection(self.mesh, self.values + other.values, analytic, self.relative)

    def relative_to(self, metric: ConformalMetric) -> "PerturbationDirection":
        """The relative direction equivalent to this one at base `metric` (absolute theta is theta / psi)"""
        if self.relative:
            return self
        analytic = None
        if self.analytic is not None:
            theta = self.analytic
            analytic = lambda x, y: theta(x, y) / metric.evaluate(np.column_stack([np.ravel(x), np.ravel(y)]))
        return PerturbationDirection(self.mesh, self.values / metric.psi, analytic, relative=True)

    def __repr__(self):
        kind = "relative" if self.relative else "absolute"
        return f"<PerturbationDirection {kind}, sup norm {self.norm:.4g}>"


def green_moment(metric: ConformalMetric, theta: PerturbationDirection) -> ScalarField:
    """The field ``p -> int G(z, p) theta(z) dv_g(z)`` of the discrete Green kernel

    By the Green representation it solves ``-Delta_g u = theta - mean(theta)``,
    ``d/dnu u = 0``, ``int u dv_g = 0``: one Neumann solve serves every pole.
    """
    theta = theta.relative_to(metric)
    measure = metric.vertex_measure
    volume = measure * (theta.values - float(measure @ theta.values) / metric.area)
    values = metric.operators.solve(volume, np.zeros(metric.mesh.n_vertices), 0.0)
    return ScalarField(metric.mesh, values)


def _at_source(field: ScalarField, source: SourcePoint):
    if source.is_boundary:
        return float(field.recover_boundary([source.boundary_param])[0])
    return float(field.recover([source.position])[0])


def split_green_integral(green: GreenFunction, source: SourcePoint, theta: PerturbationDirection):
    """``int G(z, source) theta(z) dv_g(z)`` from the bundle of `source`

    The regular part is integrated with the degree five triangle rule against the
    closed forms of theta and psi, the logarithmic part by polar quadrature.
    """
    metric = green.metric
    mesh = metric.mesh
    h = green.bundle(source).regular_part.values
    bary, weights = TRIANGLE_7
    corners = mesh.vertices[mesh.triangles]
    points = np.einsum("qk,tkd->tqd", bary, corners).reshape(-1, 2)
    h_points = (h[mesh.triangles] @ bary.T).ravel()
    integrand = (h_points * theta.evaluate(points) * metric.evaluate(points)).reshape(mesh.n_triangles, -1)
    smooth = float(np.sum((integrand @ weights) * mesh.signed_areas))
    singular = -singular_integral(source, metric, weight=theta.evaluate) / source.kappa
    return smooth + singular


def _green_for(metric, green):
    if green is None:
        return GreenFunction(metric)
    if green.metric is not metric:
        raise UsageError("The Green function belongs to another metric")
    return green


def source_green_integral(green: GreenFunction, source: SourcePoint, theta: PerturbationDirection):
    """``int G(z, source) theta(z) dv_g(z)`` in the measure the Neumann solves use

    H is integrated with the lumped mass of the mean constraint, the logarithmic
    part by polar quadrature.
    """
    metric = green.metric
    bundle = green.bundle(source)
    smooth = integrate(ScalarField(metric.mesh, bundle.regular_part.values * theta.values), metric)
    singular = -singular_integral(source, metric, weight=theta.evaluate) / source.kappa
    return smooth + singular


def dpsi_H_integral(
    x: SourcePoint, xi: SourcePoint, theta: PerturbationDirection, metric: ConformalMetric, green=None, rule="kernel"
):
    """D H(x, xi)[theta] from the Green function integrals; `x` may equal `xi`

    With ``rule="kernel"`` the pole at `xi` is integrated through its bundle
    (:any:`source_green_integral`) and the pole at `x` against the discrete
    Green kernel (:any:`green_moment`); this is the derivative of the discrete
    regular part. ``rule="split"`` integrates both bundles with the degree five
    rule (:any:`split_green_integral`), is symmetric in x and xi, and agrees at
    discretization order.
    """
    green = _green_for(metric, green)
    theta = theta.relative_to(metric)
    if rule == "kernel":
        total = source_green_integral(green, xi, theta) + _at_source(green_moment(metric, theta), x)
    elif rule == "split":
        total = split_green_integral(green, xi, theta)
        total += total if x == xi else split_green_integral(green, x, theta)
    else:
        raise UsageError(f"Unknown integration rule {rule!r}")
    return -total / metric.area


def dpsi_H_pde(xi: SourcePoint, theta: PerturbationDirection, metric: ConformalMetric, green=None) -> ScalarField:
    """x -> D H(x, xi)[theta] from a single Neumann solve"""
    green = _green_for(metric, green)
    theta = theta.relative_to(metric)
    area = metric.area
    mean_theta = float(metric.vertex_measure @ theta.values)
    volume = metric.vertex_measure * (mean_theta / area ** 2 - theta.values / area)
    target = -source_green_integral(green, xi, theta)
    values = metric.operators.solve(volume, np.zeros(metric.mesh.n_vertices), target)
    return ScalarField(metric.mesh, values)


def _regular_at(bundle, x):
    if getattr(x, "is_boundary", False):
        return float(bundle.regular_on_boundary([x.boundary_param])[0])
    point = np.atleast_2d(np.asarray(getattr(x, "position", x), dtype=float))
    return float(bundle.regular(point)[0])


def dpsi_H_fd(x, xi: SourcePoint, theta: PerturbationDirection, metric: ConformalMetric, t=1e-4, green=None):
    """``(H^{psi (1 + t theta)}(x, xi) - H^psi(x, xi)) / t``

    `x` is a point or a :any:`SourcePoint`. Raises :any:`DomainError` when
    ``1 + t theta`` is not positive.
    """
    if t == 0:
        raise UsageError("Finite difference step must be nonzero")
    green = _green_for(metric, green)
    if not theta.relative and np.any(metric.psi + t * theta.values <= 0):
        raise DomainError("psi + t*theta must stay positive")
    perturbed = metric.perturbed(theta, t, relative=theta.relative)
    base = _regular_at(green.bundle(xi), x)
    moved = _regular_at(regular_part(metric.mesh, perturbed, xi), x)
    return (moved - base) / t


def dpsi_robin(xi: SourcePoint, theta: PerturbationDirection, metric: ConformalMetric, green=None):
    """D R(xi)[theta] = D H(xi, xi)[theta] + theta(xi) / (2 kappa)"""
    theta = theta.relative_to(metric)
    value = dpsi_H_integral(xi, xi, theta, metric, green)
    return value + float(theta.evaluate(np.asarray(xi.position))[0]) / (2 * xi.kappa)


@dataclass
class GenericityTrial:
    before: HessianReport
    after: T.Optional[HessianReport]
    theta: PerturbationDirection
    status: str
    config_after: T.Optional[Configuration] = None

    @property
    def restored(self):
        """Did the perturbation lift the smallest eigenvalue tenfold?"""
        if self.after is None:
            return False
        return self.after.min_abs_eigenvalue >= 10 * self.before.min_abs_eigenvalue

    def to_dict(self):
        return {
            "status": self.status,
            "theta_norm": self.theta.norm,
            "before": self.before.to_dict(),
            "after": None if self.after is None else self.after.to_dict(),
            "restored": self.restored,
            "config_after": None if self.config_after is None else self.config_after.to_dict(),
        }


def genericity_trial(
    config: Configuration,
    metric: ConformalMetric,
    amplitude=0.05,
    seed=0,
    theta: T.Optional[PerturbationDirection] = None,
    track_radius=None,
    energy: T.Optional[InteractionEnergy] = None,
) -> GenericityTrial:
    """Perturb psi by a random direction and follow the critical point at `config`

    The critical point is "tracked" when a Newton search from `config` under
    the perturbed metric converges within `track_radius` (default a tenth of
    the diameter), and "migrated" otherwise.
    """
    energy = energy or InteractionEnergy(metric)
    before = energy.hessian(config)
    if not before.degenerate:
        logger.warning("Configuration is not flagged degenerate (margin %.3g)", before.morse_margin)
    if theta is None:
        theta = PerturbationDirection.random(metric.mesh, amplitude, seed)
    if theta.norm == 0:
        return GenericityTrial(before, before, theta, "tracked", config)

    track_radius = 0.1 * metric.mesh.diameter if track_radius is None else track_radius
    perturbed = InteractionEnergy(metric.perturbed(theta, 1.0, relative=theta.relative))
    gtol = max(2 * before.gradient_norm, 1e-10)
    try:
        result = newton_search(perturbed, config, gtol)
    except DomainError as error:
        logger.info("Critical point lost under perturbation: %s", error)
        return GenericityTrial(before, None, theta, "migrated")
    if not result.converged or config_distance(config, result.config, perturbed.curve) > track_radius:
        return GenericityTrial(before, None, theta, "migrated", result.config)
    after = perturbed.hessian(result.config)
    logger.info("Smallest |eigenvalue| %.3g -> %.3g", before.min_abs_eigenvalue, after.min_abs_eigenvalue)
    return GenericityTrial(before, after, theta, "tracked", result.config)


def genericity_study(config, metric, amplitude=0.05, trials=20, seed=0):
    """Run `trials` independent trials with seeds ``seed, seed + 1, ...``; returns trials and summary"""
    energy = InteractionEnergy(metric)
    results = [genericity_trial(config, metric, amplitude, seed + k, energy=energy) for k in range(trials)]
    restored = sum(trial.restored for trial in results)
    summary = {
        "trials": trials,
        "amplitude": amplitude,
        "seed": seed,
        "restored": restored,
        "restored_fraction": restored / trials if trials else 0.0,
        "migrated": sum(trial.status == "migrated" for trial in results),
    }
    return results, summary
