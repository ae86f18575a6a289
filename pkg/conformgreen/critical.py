"""Critical points of the interaction energy, and its blow-up near the singular set.

The search is a damped Newton iteration in chart coordinates with Armijo
backtracking on the squared gradient. Starts are drawn with a seeded numpy
generator and processed in order, so results are reproducible.
"""
import itertools
import logging
import math
import typing as T
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UsageError
from .fem import ConformalMetric
from .interaction import Configuration, HessianReport, InteractionEnergy, energy_for
from .utils import PowerLawFit, fit_power_law
from .values import DEDUP_RADIUS_FACTOR, GTOL_FACTOR, START_GUARD_FACTOR


logger = logging.getLogger(__name__)

#: Armijo sufficient decrease constant
ARMIJO = 1e-4
#: Maximal number of step halvings per Newton iteration
MAX_HALVINGS = 12


def sample_configuration(energy: InteractionEnergy, template: Configuration, rng, guard=None, tries=1000):
    """A random configuration shaped like `template`, away from the diagonal and the boundary"""
    mesh = energy.mesh
    curve = energy.curve
    guard = START_GUARD_FACTOR * mesh.diameter if guard is None else guard
    low = mesh.vertices.min(axis=0)
    high = mesh.vertices.max(axis=0)
    boundary = curve.position(curve.samples)
    for _ in range(tries):
        interior = rng.uniform(low, high, size=(template.l, 2))
        params = rng.uniform(0, curve.period, size=len(template.boundary_params))
        if template.l:
            if not np.all(mesh.contains(interior)):
                continue
            clearance = np.min(np.linalg.norm(interior[:, None, :] - boundary[None, :, :], axis=2), axis=1)
            if np.any(clearance < guard):
                continue
        config = Configuration(interior, params, template.sigmas, template.h_term)
        points = config.points(curve)
        gaps = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
        gaps[np.diag_indices(config.m)] = np.inf
        if config.m == 1 or np.min(gaps) > guard:
            return config
    raise UsageError("Could not place a start configuration; the guard tube fills the domain")


def typical_gradient_scale(energy: InteractionEnergy, template: Configuration, rng, samples=100):
    """Median g-norm of the gradient over random configurations"""
    norms = []
    for _ in range(samples):
        try:
            _, norm = energy.gradient(sample_configuration(energy, template, rng))
        except DomainError:
            continue
        norms.append(norm)
    if not norms:
        raise UsageError("No admissible configuration to calibrate the gradient scale")
    return float(np.median(norms))


def config_distance(a: Configuration, b: Configuration, curve) -> float:
    """Largest point displacement, minimised over relabelings that keep blocks and weights"""
    pa, pb = a.points(curve), b.points(curve)
    best = math.inf
    blocks = [range(a.l), range(a.l, a.m)]
    for perms in itertools.product(*(itertools.permutations(block) for block in blocks)):
        order = [i for perm in perms for i in perm]
        if np.any(a.sigmas[order] != b.sigmas):
            continue
        best = min(best, float(np.max(np.linalg.norm(pa[order] - pb, axis=1))))
    return best


@dataclass
class NewtonResult:
    config: Configuration
    gradient_norm: float
    iterations: int
    converged: bool


def _try_gradient(energy, config):
    try:
        return energy.gradient(config)
    except DomainError:
        return None


def newton_search(energy: InteractionEnergy, start: Configuration, gtol: float, max_iter=30) -> NewtonResult:
    """Drive the gradient to zero from `start`"""
    config = start
    vector, norm = energy.gradient(config)
    for iteration in range(max_iter):
        if norm <= gtol:
            return NewtonResult(config, norm, iteration, True)
        hessian = energy._second_differences(config, energy.hessian_step)
        merit = vector @ vector
        directions = []
        try:
            directions.append((-np.linalg.solve(hessian, vector), merit))
        except np.linalg.LinAlgError:
            pass
        descent = -hessian @ vector
        directions.append((descent, descent @ descent))
        x0 = config.coordinates()
        accepted = None
        for direction, decrease in directions:
            alpha = 1.0
            for _ in range(MAX_HALVINGS):
                trial = config.with_coordinates(x0 + alpha * direction, energy.curve)
                result = _try_gradient(energy, trial)
                if result is not None and result[0] @ result[0] <= merit - 2 * ARMIJO * alpha * decrease:
                    accepted = trial, result
                    break
                alpha /= 2
            if accepted:
                break
        if accepted is None:
            logger.debug("Line search failed at iteration %d with gradient norm %.3g", iteration, norm)
            return NewtonResult(config, norm, iteration, False)
        config, (vector, norm) = accepted
    return NewtonResult(config, norm, max_iter, norm <= gtol)


def find_critical(
    metric: ConformalMetric,
    template: Configuration,
    starts=8,
    seed=0,
    gtol=None,
    dedup_radius=None,
    max_iter=30,
    scale_samples=100,
    energy: T.Optional[InteractionEnergy] = None,
    initial: T.Sequence[Configuration] = (),
) -> T.List[T.Tuple[Configuration, HessianReport]]:
    """Multi-start Newton search for critical points shaped like `template`

    Args:
      - starts (int): number of random starts
      - seed (int): seed of the start generator; equal seeds give equal results
      - gtol (float or None): gradient g-norm tolerance; by default 1e-6 times the
        typical gradient scale
      - dedup_radius (float or None): by default 1e-2 times the diameter
      - initial (sequence of Configuration): extra starts tried before the random ones

    Returns a list of (configuration, HessianReport), sorted by value then
    coordinates, with no two entries closer than `dedup_radius`. Starts that do
    not converge are dropped; an empty list is a valid result.
    """
    energy = energy or energy_for(metric)
    rng = np.random.default_rng(seed)
    if gtol is None:
        scale = typical_gradient_scale(energy, template, rng, scale_samples)
        gtol = GTOL_FACTOR * scale
        logger.info("Gradient tolerance %.3g from typical scale %.3g", gtol, scale)
    dedup_radius = DEDUP_RADIUS_FACTOR * energy.mesh.diameter if dedup_radius is None else dedup_radius

    configs = list(initial) + [sample_configuration(energy, template, rng) for _ in range(starts)]
    found = []
    for index, start in enumerate(configs):
        try:
            result = newton_search(energy, start, gtol, max_iter)
        except DomainError as error:
            logger.debug("Start %d left the admissible set: %s", index, error)
            continue
        if result.converged:
            found.append((energy.value(result.config), result.config))
        else:
            logger.debug("Start %d did not converge (gradient norm %.3g)", index, result.gradient_norm)

    found.sort(key=lambda item: (round(item[0], 10), tuple(item[1].coordinates())))
    kept = []
    for _, config in found:
        if all(config_distance(config, other, energy.curve) > dedup_radius for other in kept):
            kept.append(config)
    logger.info("%d critical point(s) from %d start(s)", len(kept), len(configs))
    return [(config, energy.hessian(config)) for config in kept]


class ProbePath:
    """A one-parameter family of configurations approaching the singular set as rho -> 0"""

    name = "path"

    def configuration(self, rho: float, energy: InteractionEnergy) -> Configuration:
        raise NotImplementedError

    def measure(self, rho: float, energy: InteractionEnergy) -> float:
        raise NotImplementedError

    def predicted_prefactor(self) -> float:
        raise NotImplementedError

    def default_rho_max(self, energy):
        return energy.mesh.r_domain / 2


class BoundaryApproach(ProbePath):
    """One interior point at distance rho inside the boundary point of parameter `param`

    Measures the inward normal derivative of f; it behaves as ``-sigma**2 / (2 pi rho)``.
    """

    name = "boundary"

    def __init__(self, param=0.0, sigma=1.0):
        self.param = param
        self.sigma = sigma

    def _frame(self, energy):
        curve = energy.curve
        return curve.position(self.param)[0], curve.normal(self.param)[0]

    def configuration(self, rho, energy):
        base, normal = self._frame(energy)
        return Configuration([base - rho * normal], [], [self.sigma])

    def measure(self, rho, energy):
        _, normal = self._frame(energy)
        vector, _ = energy.gradient(self.configuration(rho, energy))
        return float(-vector[:2] @ normal)

    def predicted_prefactor(self):
        return self.sigma ** 2 / (2 * math.pi)


class Collision(ProbePath):
    """Two interior points at distance rho, symmetric about `center`

    Measures the gradient block norm of the first point; it behaves as
    ``2 |s_1 s_2| / (2 pi rho)``.
    """

    name = "collision"

    def __init__(self, center=(0.0, 0.0), angle=0.0, sigmas=(1.0, 1.0)):
        self.center = np.asarray(center, dtype=float)
        self.direction = np.array([math.cos(angle), math.sin(angle)])
        self.sigmas = tuple(sigmas)

    def configuration(self, rho, energy):
        offset = rho / 2 * self.direction
        return Configuration([self.center + offset, self.center - offset], [], self.sigmas)

    def measure(self, rho, energy):
        vector, _ = energy.gradient(self.configuration(rho, energy))
        return float(np.linalg.norm(vector[:2]))

    def predicted_prefactor(self):
        return 2 * abs(self.sigmas[0] * self.sigmas[1]) / (2 * math.pi)


class MixedCollision(Collision):
    """:any:`Collision` with opposite weights"""

    name = "mixed"

    def __init__(self, center=(0.0, 0.0), angle=0.0, sigmas=(1.0, -1.0)):
        super().__init__(center, angle, sigmas)


PATHS = {cls.name: cls for cls in (BoundaryApproach, Collision, MixedCollision)}


@dataclass
class BlowupResult:
    path: str
    rho: np.ndarray
    values: np.ndarray
    fit: PowerLawFit
    predicted_prefactor: float

    @property
    def prefactor_ratio(self):
        return self.fit.prefactor / self.predicted_prefactor

    def rows(self):
        return [(float(r), float(v)) for r, v in zip(self.rho, self.values)]

    def to_dict(self):
        return {
            "path": self.path,
            "slope": self.fit.slope,
            "prefactor": self.fit.prefactor,
            "offset": self.fit.offset,
            "loglog_slope": self.fit.loglog_slope,
            "predicted_prefactor": self.predicted_prefactor,
        }


def blowup_probe(path: ProbePath, metric: ConformalMetric, rhos=None, samples=8, energy=None) -> BlowupResult:
    """Tabulate the path's gradient measure against rho and fit ``a rho**(-p) + b``

    Distances below 4 h_max are dropped with a warning.
    """
    energy = energy or energy_for(metric)
    floor = 4 * energy.mesh.h_max
    if rhos is None:
        rho_max = path.default_rho_max(energy)
        if rho_max <= floor:
            raise UsageError("Mesh too coarse for a blow-up probe")
        rhos = np.geomspace(rho_max, floor, samples)
    rhos = np.asarray(rhos, dtype=float)
    if np.any(rhos < floor):
        logger.warning("Dropping %d distance(s) below the mesh resolution %.3g", int(np.sum(rhos < floor)), floor)
        rhos = rhos[rhos >= floor]
    values = np.array([path.measure(rho, energy) for rho in rhos])
    for rho, value in zip(rhos, values):
        logger.debug("%s probe: rho=%.4g measure=%.6g", path.name, rho, value)
    fit = fit_power_law(rhos, values)
    return BlowupResult(path.name, rhos, values, fit, path.predicted_prefactor())
