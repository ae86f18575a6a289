"""Piecewise-linear finite elements for the Neumann problem of a conformal metric.

For ``g = psi * (Euclidean)`` on a planar domain::

    Delta_g = Delta / psi,   dv_g = psi dx,   d/dnu_g = psi**-0.5 d/dn,   ds_g = psi**0.5 ds

so the weak form of ``-Delta_g u = f, d/dnu_g u = h`` reads
``int grad u . grad v dx = int f v dv_g + oint h v ds_g``: the stiffness matrix
does not depend on psi, only the (lumped) mass and boundary mass do.
The mean value ``int u dv_g`` is imposed by one Lagrange multiplier row.
"""
import csv
import functools
import logging
import math
import typing as T

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .errors import DomainError, GeometryError, IllPosedError, NumericalError, UsageError
from .mesh import BoundaryCurve, Mesh, build_domain
from .utils import Expression
from .values import COMPAT_RTOL, RESIDUAL_FAIL_RTOL, RESIDUAL_WARN_RTOL


logger = logging.getLogger(__name__)

#: Moving least squares support radius, in mean edge lengths
RECOVERY_RADIUS = 2.5


class ConformalMetric:
    """Conformal factor psi sampled at mesh vertices

    Args:
      - mesh (Mesh): the domain
      - psi (array (nv,)): positive vertex values
      - analytic (callable or None): ``analytic(x, y)`` closed form of psi, used
        wherever psi is needed away from vertices
    """

    def __init__(self, mesh: Mesh, psi, analytic: T.Optional[T.Callable] = None):
        psi = np.array(psi, dtype=float).reshape(-1)
        if psi.shape != (mesh.n_vertices,):
            raise UsageError("psi needs one value per mesh vertex")
        if not np.all(psi > 0):
            raise UsageError("The conformal factor must be positive at every vertex")
        psi.setflags(write=False)
        self.mesh = mesh
        self.psi = psi
        self.analytic = analytic

    @classmethod
    def flat(cls, mesh):
        return cls.constant(mesh, 1.0)

    @classmethod
    def constant(cls, mesh, value):
        return cls(mesh, np.full(mesh.n_vertices, float(value)), lambda x, y: np.full(np.shape(x), float(value)))

    @classmethod
    def from_function(cls, mesh, func):
        """`func(x, y)` is evaluated at the vertices and kept as closed form"""
        return cls(mesh, func(mesh.vertices[:, 0], mesh.vertices[:, 1]), func)

    @classmethod
    def from_expression(cls, mesh, source: str):
        return cls.from_function(mesh, Expression(source))

    @property
    def is_flat(self):
        return bool(np.all(self.psi == 1.0))

    def evaluate(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.analytic is not None:
            return np.asarray(self.analytic(points[:, 0], points[:, 1]), dtype=float)
        return ScalarField(self.mesh, self.psi)(points, extrapolate=True)

    @functools.cached_property
    def vertex_measure(self):
        """Lumped dv_g weight of each vertex"""
        return self.mesh.vertex_areas * self.psi

    @functools.cached_property
    def area(self):
        """|Sigma|_g"""
        return float(np.sum(self.vertex_measure))

    @functools.cached_property
    def operators(self):
        """The assembled and factored :any:`OperatorBundle`, built once per metric"""
        return assemble(self.mesh, self)

    def perturbed(self, theta, t=1.0, relative=True):
        """Metric ``psi * (1 + t theta)`` (relative) or ``psi + t theta`` (absolute)

        Args:
          - theta (ScalarField or PerturbationDirection-like with `.values` and optional `.analytic`)
        """
        values = np.asarray(getattr(theta, "values", theta), dtype=float)
        if relative:
            factor = 1 + t * values
            if np.any(factor <= 0):
                raise DomainError("1 + t*theta must stay positive")
            psi = self.psi * factor
        else:
            psi = self.psi + t * values
        analytic = None
        theta_analytic = getattr(theta, "analytic", None)
        if self.analytic is not None and theta_analytic is not None:
            base = self.analytic
            if relative:
                analytic = lambda x, y: base(x, y) * (1 + t * theta_analytic(x, y))
            else:
                analytic = lambda x, y: base(x, y) + t * theta_analytic(x, y)
        return ConformalMetric(self.mesh, psi, analytic)

    def __repr__(self):
        return f"<ConformalMetric psi in [{self.psi.min():.4g}, {self.psi.max():.4g}], area={self.area:.6g}>"


class ScalarField:
    """Piecewise-linear field given by its vertex values"""

    def __init__(self, mesh: Mesh, values):
        values = np.array(values, dtype=float).reshape(-1)
        if values.shape != (mesh.n_vertices,):
            raise UsageError("A field needs one value per mesh vertex")
        values.setflags(write=False)
        self.mesh = mesh
        self.values = values

    @classmethod
    def from_function(cls, mesh, func):
        return cls(mesh, func(mesh.vertices[:, 0], mesh.vertices[:, 1]))

    @classmethod
    def constant(cls, mesh, value):
        return cls(mesh, np.full(mesh.n_vertices, float(value)))

    def _check(self, other):
        if isinstance(other, ScalarField):
            if other.mesh is not self.mesh:
                raise UsageError("Fields live on different meshes")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.mesh, self.values + self._check(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.mesh, self.values - self._check(other))

    def __mul__(self, other):
        return ScalarField(self.mesh, self.values * self._check(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.mesh, -self.values)

    def __call__(self, points, extrapolate=False):
        """Linear interpolation; NaN outside the mesh unless `extrapolate`"""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        triangles, coords = self.mesh.locate_many(points, extrapolate=extrapolate)
        result = np.full(len(points), np.nan)
        ok = triangles >= 0
        vertex_values = self.values[self.mesh.triangles[triangles[ok]]]
        result[ok] = np.sum(vertex_values * coords[ok], axis=1)
        return result

    @functools.cached_property
    def _recovery_radius(self):
        e = self.mesh.edges
        mean_edge = np.mean(np.linalg.norm(self.mesh.vertices[e[:, 0]] - self.mesh.vertices[e[:, 1]], axis=1))
        return RECOVERY_RADIUS * mean_edge

    def _recover_one(self, point):
        radius = self._recovery_radius
        vertices = self.mesh.vertices
        while True:
            near = self.mesh.vertex_tree.query_ball_point(point, radius)
            if len(near) >= 10:
                break
            radius *= 1.5
        near = np.asarray(near)
        local = (vertices[near] - point) / radius
        d = np.linalg.norm(local, axis=1)
        weights = (1 - d) ** 4 * (4 * d + 1)
        u, v = local[:, 0], local[:, 1]
        basis = np.column_stack([np.ones_like(u), u, v, u * u, u * v, v * v])
        sw = np.sqrt(weights)
        coeffs, *_ = np.linalg.lstsq(basis * sw[:, None], self.values[near] * sw, rcond=None)
        return coeffs[0]

    def recover(self, points):
        """Quadratic moving least squares value at each point (smooth in the point)"""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.array([self._recover_one(p) for p in points])

    def _recover_boundary_one(self, point, tangent, normal, slope):
        radius = self._recovery_radius
        vertices = self.mesh.vertices
        while True:
            near = self.mesh.vertex_tree.query_ball_point(point, radius)
            if len(near) >= 10:
                break
            radius *= 1.5
        near = np.asarray(near)
        offsets = vertices[near] - point
        d = np.linalg.norm(offsets, axis=1) / radius
        weights = (1 - d) ** 4 * (4 * d + 1)
        across = offsets @ normal
        u, v = offsets @ tangent / radius, across / radius
        basis = np.column_stack([np.ones_like(u), u, u * u, u * v, v * v])
        sw = np.sqrt(weights)
        target = self.values[near] - slope * across
        coeffs, *_ = np.linalg.lstsq(basis * sw[:, None], target * sw, rcond=None)
        return coeffs[0]

    def recover_boundary(self, params, normal_slope=0.0):
        """Moving least squares value at the curve points of parameters `params`

        The outward normal derivative is prescribed by `normal_slope` (one value
        per parameter, or a scalar) and only the remaining quadratic terms are
        fitted, so the value is not extrapolated across the curve.
        """
        curve = self.mesh.curve
        if curve is None:
            raise UsageError("Boundary recovery needs the boundary curve")
        params = np.atleast_1d(np.asarray(params, dtype=float))
        slopes = np.broadcast_to(np.asarray(normal_slope, dtype=float), params.shape)
        points, tangents, normals = curve.position(params), curve.tangent(params), curve.normal(params)
        return np.array(
            [self._recover_boundary_one(*frame) for frame in zip(points, tangents, normals, slopes)]
        )

    def recover_gradient(self, points):
        """Gradient of :any:`recover`, by fourth-order central differences"""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        step = 1e-3 * self._recovery_radius
        gradient = np.zeros_like(points)
        for axis in range(2):
            shift = np.zeros(2)
            shift[axis] = step
            plus = self.recover(points + shift)
            minus = self.recover(points - shift)
            plus2 = self.recover(points + 2 * shift)
            minus2 = self.recover(points - 2 * shift)
            gradient[:, axis] = (8 * (plus - minus) - (plus2 - minus2)) / (12 * step)
        return gradient

    def to_csv(self, path):
        with open(path, "w", newline="") as stream:
            writer = csv.writer(stream)
            writer.writerow(["vertex_index", "value"])
            writer.writerows((i, f"{v:.17g}") for i, v in enumerate(self.values))

    @classmethod
    def from_csv(cls, mesh, path):
        values = np.full(mesh.n_vertices, np.nan)
        with open(path, newline="") as stream:
            for row in csv.DictReader(stream):
                values[int(row["vertex_index"])] = float(row["value"])
        if np.any(np.isnan(values)):
            raise UsageError(f"{path} does not give a value for every vertex")
        return cls(mesh, values)

    def __repr__(self):
        return f"<ScalarField on {self.mesh.n_vertices} vertices>"


class OperatorBundle:
    """Stiffness, mass and boundary mass of a metric, with the factored mean-constrained system"""

    def __init__(self, mesh, metric, stiffness, mass, boundary_mass):
        self.mesh = mesh
        self.metric = metric
        self.stiffness = stiffness
        self.mass = mass
        self.boundary_mass = boundary_mass
        self.constraint = metric.vertex_measure
        saddle = sparse.bmat(
            [[stiffness, sparse.csr_matrix(self.constraint[:, None])], [sparse.csr_matrix(self.constraint[None, :]), None]],
            format="csc",
        )
        self.saddle = saddle
        try:
            self._lu = splinalg.splu(saddle)
        except RuntimeError as error:
            raise NumericalError(f"Factorization of the Neumann system failed: {error}") from None
        logger.info("Factored Neumann system with %d unknowns", saddle.shape[0])

    def compatibility_tolerance(self, volume_load, boundary_load):
        scale = np.sum(np.abs(volume_load)) + np.sum(np.abs(boundary_load))
        return (COMPAT_RTOL + self.mesh.h_max ** 2) * scale

    def solve(self, volume_load, boundary_load, target_mean):
        """Solve with assembled load vectors; returns the vertex values

        The loads are the discrete ``int f phi_v dv_g`` and ``oint h phi_v ds_g``.
        """
        if not math.isfinite(target_mean):
            raise UsageError("target_mean must be finite")
        volume_load = np.asarray(volume_load, dtype=float)
        boundary_load = np.asarray(boundary_load, dtype=float)
        defect = float(np.sum(volume_load) + np.sum(boundary_load))
        tolerance = self.compatibility_tolerance(volume_load, boundary_load)
        if abs(defect) > tolerance:
            raise IllPosedError(f"Neumann data violates compatibility: defect {defect:.3g} > {tolerance:.3g}")
        load = volume_load + boundary_load - defect * self.constraint / np.sum(self.constraint)
        logger.debug("Compatibility defect %.3g orthogonalized", defect)

        rhs = np.append(load, target_mean)
        solution = self._lu.solve(rhs)
        if not np.all(np.isfinite(solution)):
            raise NumericalError("Neumann solve produced non-finite values")
        residual = np.linalg.norm(self.saddle @ solution - rhs) / max(np.linalg.norm(rhs), np.finfo(float).tiny)
        if residual > RESIDUAL_FAIL_RTOL:
            raise NumericalError(f"Neumann solve residual {residual:.3g} too large")
        if residual > RESIDUAL_WARN_RTOL:
            logger.warning("Neumann solve relative residual %.3g", residual)
        return solution[:-1]


def assemble(mesh: Mesh, metric: ConformalMetric) -> OperatorBundle:
    """Assemble stiffness, lumped psi-weighted mass and sqrt(psi)-weighted boundary mass"""
    if metric.mesh is not mesh:
        raise UsageError("The metric belongs to another mesh")
    area = mesh.signed_areas
    if np.min(area) <= 0:
        raise GeometryError("Degenerate triangle in assembly")
    tri = mesh.triangles
    p = mesh.vertices[tri]
    opposite = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    local = np.einsum("tik,tjk->tij", opposite, opposite) / (4 * area)[:, None, None]
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_vertices
    stiffness = sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()

    mass = sparse.diags(metric.vertex_measure).tocsr()

    edges = mesh.boundary_edges
    lengths = np.linalg.norm(mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]], axis=1)
    boundary_weight = np.bincount(edges.ravel(), weights=np.repeat(lengths / 2, 2), minlength=n)
    boundary_mass = sparse.diags(boundary_weight * np.sqrt(metric.psi)).tocsr()
    return OperatorBundle(mesh, metric, stiffness, mass, boundary_mass)


def solve_neumann(bundle: OperatorBundle, volume_rhs: ScalarField, boundary_flux: ScalarField, target_mean: float) -> ScalarField:
    """Solve ``-Delta_g u = volume_rhs``, ``d/dnu_g u = boundary_flux``, ``int u dv_g = target_mean``"""
    for field in (volume_rhs, boundary_flux):
        if field.mesh is not bundle.mesh:
            raise UsageError("Data fields belong to another mesh")
    values = bundle.solve(bundle.mass @ volume_rhs.values, bundle.boundary_mass @ boundary_flux.values, target_mean)
    return ScalarField(bundle.mesh, values)


def integrate(field: ScalarField, metric: ConformalMetric) -> float:
    """``int field dv_g`` with the lumped mass"""
    if field.mesh is not metric.mesh:
        raise UsageError("Field and metric live on different meshes")
    return float(metric.vertex_measure @ field.values)


def manufactured_disk_study(target_h: float = 0.1, levels: int = 2):
    """Errors of the ``u = x**2 + y**2`` Neumann problem on the unit disk under refinement

    Solves ``-Delta u = -4``, ``du/dn = 2``, ``int u = pi / 2`` on the flat disk.
    Returns a list of dicts with keys ``h_max``, ``linf`` and ``l2``.
    """
    mesh = build_domain(BoundaryCurve.disk(), target_h)
    rows = []
    for level in range(levels):
        if level:
            mesh = mesh.refine()
        metric = ConformalMetric.flat(mesh)
        u = solve_neumann(
            metric.operators, ScalarField.constant(mesh, -4.0), ScalarField.constant(mesh, 2.0), math.pi / 2
        )
        error = u.values - np.sum(mesh.vertices ** 2, axis=1)
        rows.append(
            {
                "h_max": mesh.h_max,
                "linf": float(np.max(np.abs(error))),
                "l2": float(np.sqrt(metric.vertex_measure @ error ** 2)),
            }
        )
    return rows
