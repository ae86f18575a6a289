"""The interaction energy of m weighted points::

    f(x) = sum_i s_i**2 R(x_i) + sum_{i != j} s_i s_j G(x_i, x_j) + h(x_1, ..., x_m)

on the configuration space of l interior points and m - l boundary points.

Coordinates are laid out as ``[x_1, y_1, ..., x_l, y_l, t_{l+1}, ..., t_m]``:
interior points contribute two chart coordinates, boundary points their curve
parameter.
"""
import json
import logging
import math
import typing as T
import weakref
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalError, UsageError
from .fem import ConformalMetric
from .green import GreenFunction, SourcePoint
from .utils import Expression
from .values import (
    DEDUP_EPS_FACTOR,
    DEGENERACY_NOISE_FACTOR,
    HESSIAN_STEP_FACTOR,
    ROBIN_STEP_FACTOR,
)


logger = logging.getLogger(__name__)


class ZeroPotential:
    """h == 0"""

    symmetric = True

    def value(self, points):
        return 0.0

    def gradient(self, points):
        return np.zeros_like(np.asarray(points, dtype=float))

    def to_dict(self):
        return {"kind": "zero"}


class LogPotential:
    """``h(x) = sum_i c_i log V(x_i)`` for a positive field V

    Args:
      - field (str or callable): V as an expression in x, y, or a vectorised callable
      - weights (sequence of float): the c_i; one per point
    """

    #: Central difference step for the gradient of log V
    STEP = 1e-6

    def __init__(self, field, weights):
        self.source = field if isinstance(field, str) else getattr(field, "source", None)
        self.field = Expression(field) if isinstance(field, str) else field
        self.weights = np.asarray(weights, dtype=float)

    @property
    def symmetric(self):
        return bool(np.all(self.weights == self.weights[0]))

    def _log_field(self, points):
        values = np.asarray(self.field(points[:, 0], points[:, 1]), dtype=float)
        if np.any(values <= 0):
            raise DomainError("Potential field must be positive at every point")
        return np.log(values)

    def value(self, points):
        points = np.asarray(points, dtype=float)
        self._check(points)
        return float(self.weights @ self._log_field(points))

    def gradient(self, points):
        points = np.asarray(points, dtype=float)
        self._check(points)
        grad = np.empty_like(points)
        for axis in range(2):
            shift = np.zeros(2)
            shift[axis] = self.STEP
            grad[:, axis] = (self._log_field(points + shift) - self._log_field(points - shift)) / (2 * self.STEP)
        return self.weights[:, None] * grad

    def _check(self, points):
        if len(points) != len(self.weights):
            raise UsageError(f"LogPotential has {len(self.weights)} weights for {len(points)} points")

    def to_dict(self):
        return {"kind": "log", "field": self.source, "weights": self.weights.tolist()}


@dataclass
class Configuration:
    """m weighted points: l interior ones followed by m - l on the boundary curve"""

    interior_points: np.ndarray
    boundary_params: np.ndarray
    sigmas: np.ndarray
    h_term: T.Any = field(default_factory=ZeroPotential)

    def __post_init__(self):
        self.interior_points = np.asarray(self.interior_points, dtype=float).reshape(-1, 2)
        self.boundary_params = np.asarray(self.boundary_params, dtype=float).reshape(-1)
        self.sigmas = np.asarray(self.sigmas, dtype=float).reshape(-1)
        if len(self.sigmas) != self.m:
            raise UsageError(f"Need {self.m} weights, got {len(self.sigmas)}")
        if self.m == 0:
            raise UsageError("A configuration needs at least one point")
        if np.any(self.sigmas == 0):
            raise UsageError("Point weights must be nonzero")

    @property
    def l(self):
        return len(self.interior_points)

    @property
    def m(self):
        return self.l + len(self.boundary_params)

    @property
    def dimension(self):
        return 2 * self.l + len(self.boundary_params)

    def coordinates(self):
        return np.concatenate([self.interior_points.ravel(), self.boundary_params])

    def with_coordinates(self, coords, curve=None):
        coords = np.asarray(coords, dtype=float)
        params = coords[2 * self.l:]
        if curve is not None:
            params = curve.wrap(params)
        return Configuration(coords[: 2 * self.l].reshape(-1, 2), params, self.sigmas, self.h_term)

    def points(self, curve):
        if len(self.boundary_params) and curve is None:
            raise UsageError("Boundary points need the boundary curve")
        boundary = curve.position(self.boundary_params) if len(self.boundary_params) else np.empty((0, 2))
        return np.vstack([self.interior_points, boundary])

    def check(self, mesh):
        """Raise :any:`DomainError` for points outside the domain or closer than the coincidence guard"""
        if self.l and not np.all(mesh.contains(self.interior_points)):
            raise DomainError("Interior points must lie strictly inside the domain")
        points = self.points(mesh.curve)
        eps = DEDUP_EPS_FACTOR * mesh.diameter
        if self.m > 1:
            gaps = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
            gaps[np.diag_indices(self.m)] = np.inf
            if np.min(gaps) <= eps:
                raise DomainError("Configuration has coincident points")

    def to_dict(self):
        return {
            "interior_points": self.interior_points.tolist(),
            "boundary_params": self.boundary_params.tolist(),
            "sigmas": self.sigmas.tolist(),
            "h_term": self.h_term.to_dict(),
        }


@dataclass
class HessianReport:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    gradient_norm: float
    morse_margin: float
    noise: float = 0.0
    degenerate: bool = False

    @property
    def index(self):
        """Number of negative eigenvalues"""
        return int(np.sum(self.eigenvalues < 0))

    @property
    def min_abs_eigenvalue(self):
        return float(np.min(np.abs(self.eigenvalues)))

    def to_dict(self):
        return {
            "matrix": self.matrix.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "gradient_norm": self.gradient_norm,
            "morse_margin": self.morse_margin,
            "noise": self.noise,
            "degenerate": self.degenerate,
            "index": self.index,
        }


class InteractionEnergy:
    """Value, gradient and Hessian of the interaction energy on one metric

    Args:
      - metric (ConformalMetric): the metric; its factorization and Green bundles are shared
      - robin_step_factor (float): Robin finite difference step, in units of h_max
      - hessian_step_factor (float): Hessian finite difference step, in units of the diameter
    """

    def __init__(
        self,
        metric: ConformalMetric,
        robin_step_factor=ROBIN_STEP_FACTOR,
        hessian_step_factor=HESSIAN_STEP_FACTOR,
    ):
        self.metric = metric
        self.mesh = metric.mesh
        self.curve = metric.mesh.curve
        self.green = GreenFunction(metric)
        self.robin_step = max(1e-3 * self.mesh.r_domain, robin_step_factor * self.mesh.h_max)
        self.hessian_step = hessian_step_factor * self.mesh.diameter

    def sources(self, config: Configuration) -> T.List[SourcePoint]:
        interior = [self.green.source(point=p) for p in config.interior_points]
        boundary = [self.green.source(param=t) for t in config.boundary_params]
        return interior + boundary

    def _pair_green(self, config, points, i, source):
        """G(x_i, source); boundary points go through the boundary recovery"""
        if i < config.l:
            return self.green.green(points[i], source)
        return self.green.green_on_boundary(config.boundary_params[i - config.l], source)

    def value(self, config: Configuration) -> float:
        config.check(self.mesh)
        sources = self.sources(config)
        points = config.points(self.curve)
        sigmas = config.sigmas
        total = sum(s * s * self.green.robin(src) for s, src in zip(sigmas, sources))
        for i, j in np.ndindex(config.m, config.m):
            if i != j:
                total += sigmas[i] * sigmas[j] * self._pair_green(config, points, i, sources[j])
        return float(total + config.h_term.value(points))

    def _robin_at(self, point=None, param=None):
        return self.green.robin(self.green.source(point=point, param=param))

    def _stencil(self, func, step):
        # fourth order central difference
        return (func(-2 * step) - 8 * func(-step) + 8 * func(step) - func(2 * step)) / (12 * step)

    def robin_gradient(self, source: SourcePoint):
        """Chart gradient of R: a 2-vector inside, d/dt along the curve on the boundary"""
        if source.is_boundary:
            t0 = source.boundary_param
            dt = self.robin_step / float(self.curve.speed(t0)[0])
            return np.array([self._stencil(lambda s: self._robin_at(param=t0 + s), dt)])
        center = np.asarray(source.position)
        step = self.robin_step
        # shrink the stencil until it fits in the domain
        for _ in range(6):
            offsets = step * np.array([[2, 0], [-2, 0], [0, 2], [0, -2]])
            if np.all(self.mesh.contains(center + offsets)):
                break
            step /= 2
        else:
            raise DomainError(f"Point {source.position} is too close to the boundary for a Robin derivative")
        if step < self.robin_step:
            logger.debug("Robin stencil at %s shrunk to %.3g", source.position, step)
        grad = np.empty(2)
        for axis in range(2):
            unit = np.eye(2)[axis]
            grad[axis] = self._stencil(lambda s: self._robin_at(point=center + s * unit), step)
        return grad

    def gradient(self, config: Configuration):
        """Chart gradient (length ``dimension``) and its g-norm"""
        config.check(self.mesh)
        sources = self.sources(config)
        points = config.points(self.curve)
        sigmas = config.sigmas
        spatial = np.asarray(config.h_term.gradient(points), dtype=float).copy()
        along = np.zeros(config.m)
        for i in range(config.m):
            for j in range(config.m):
                if i == j:
                    continue
                # both G(x_i, x_j) and G(x_j, x_i) depend on x_i; G is symmetric
                weight = 2 * sigmas[i] * sigmas[j]
                if i < config.l:
                    spatial[i] += weight * self.green.green_gradient(points[i], sources[j])
                else:
                    param = config.boundary_params[i - config.l]
                    along[i] += weight * self.green.green_tangent_derivative(param, sources[j])

        blocks, norms = [], []
        psi = self.metric.evaluate(points)
        for i, src in enumerate(sources):
            robin_part = sigmas[i] ** 2 * self.robin_gradient(src)
            if src.is_boundary:
                tangent = self.curve.derivative(src.boundary_param)[0]
                d = float(spatial[i] @ tangent + along[i] + robin_part[0])
                blocks.append([d])
                norms.append(d / (np.linalg.norm(tangent) * math.sqrt(psi[i])))
            else:
                g = spatial[i] + robin_part
                blocks.append(g)
                norms.append(np.linalg.norm(g) / math.sqrt(psi[i]))
        vector = np.concatenate([np.atleast_1d(b) for b in blocks])
        # interior blocks first, matching the coordinate layout
        return vector, float(np.linalg.norm(norms))

    def _steps(self, config, scale):
        steps = np.full(config.dimension, scale)
        if len(config.boundary_params):
            steps[2 * config.l:] = scale / self.curve.speed(config.boundary_params)
        return steps

    def _second_differences(self, config, scale):
        n = config.dimension
        x0 = config.coordinates()
        steps = self._steps(config, scale)
        cache = {}

        def f(*moves):
            key = tuple(sorted(moves))
            if key not in cache:
                x = x0.copy()
                for k, sign in moves:
                    x[k] += sign * steps[k]
                cache[key] = self.value(config.with_coordinates(x, self.curve))
            return cache[key]

        f0 = f()
        matrix = np.empty((n, n))
        for k in range(n):
            matrix[k, k] = (f((k, 1)) - 2 * f0 + f((k, -1))) / steps[k] ** 2
            for j in range(k):
                matrix[k, j] = (
                    f((k, 1), (j, 1)) - f((k, 1)) - f((j, 1)) + 2 * f0
                    - f((k, -1)) - f((j, -1)) + f((k, -1), (j, -1))
                ) / (2 * steps[k] * steps[j])
                # the quotient is symmetric in (k, j)
                matrix[j, k] = matrix[k, j]
        return matrix

    def reference_curvature(self, config: Configuration):
        """Curvature scale ``sum s_i**2 / (2 pi r_domain**2)``; floors the Hessian norm in margins"""
        return float(np.sum(config.sigmas ** 2) / (2 * math.pi * self.mesh.r_domain ** 2))

    def hessian(self, config: Configuration, gradient_bound=None) -> HessianReport:
        """Second differences of the value, with a step-halving noise estimate

        With `gradient_bound` set, the configuration must be near-critical.
        """
        _, gradient_norm = self.gradient(config)
        if gradient_bound is not None and gradient_norm > gradient_bound:
            raise UsageError(f"Gradient norm {gradient_norm:.3g} exceeds the bound {gradient_bound:.3g}")
        matrix = self._second_differences(config, self.hessian_step)
        if not np.all(np.isfinite(matrix)):
            raise NumericalError("Second differences of the energy are not finite")
        coarse = self._second_differences(config, 2 * self.hessian_step)
        norm = max(np.linalg.norm(matrix, 2), self.reference_curvature(config))
        noise = float(np.linalg.norm(matrix - coarse, 2) / norm)
        eigenvalues = np.sort(np.linalg.eigvalsh(matrix))
        margin = float(np.min(np.abs(eigenvalues)) / norm)
        degenerate = margin < DEGENERACY_NOISE_FACTOR * noise
        logger.debug("Hessian eigenvalues %s, margin %.3g, noise %.3g", eigenvalues, margin, noise)
        return HessianReport(matrix, eigenvalues, gradient_norm, margin, noise, degenerate)

    def report(self, config: Configuration, hessian=False):
        value = self.value(config)
        gradient, gradient_norm = self.gradient(config)
        record = {
            "config": config.to_dict(),
            "value": value,
            "gradient": gradient.tolist(),
            "gradient_norm_g": gradient_norm,
            "hessian_eigenvalues": None,
        }
        if hessian:
            record["hessian_eigenvalues"] = self.hessian(config).eigenvalues.tolist()
        return record

    def to_json(self, config, hessian=False):
        return json.dumps(self.report(config, hessian), indent=2)


_energies = weakref.WeakKeyDictionary()


def energy_for(metric: ConformalMetric) -> InteractionEnergy:
    """The shared :any:`InteractionEnergy` of `metric`"""
    if metric not in _energies:
        _energies[metric] = InteractionEnergy(metric)
    return _energies[metric]


def f_value(config: Configuration, metric: ConformalMetric) -> float:
    return energy_for(metric).value(config)


def f_gradient(config: Configuration, metric: ConformalMetric):
    return energy_for(metric).gradient(config)


def f_hessian(config: Configuration, metric: ConformalMetric, gradient_bound=None) -> HessianReport:
    return energy_for(metric).hessian(config, gradient_bound)
