"""Triangulations of planar domains bounded by a smooth closed Fourier curve.

Meshes are built as rings scaled from the boundary curve towards a center, so
the boundary cycle and the curve parameter of every boundary vertex are known
by construction. Meshes are immutable after construction.
"""
import functools
import logging
import math
import typing as T
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .errors import GeometryError, ResourceError, UsageError
from .utils import V2, points_in_polygon
from .values import BOUNDARY_SNAP_RTOL, MAX_VERTICES


logger = logging.getLogger(__name__)

#: Samples used for curve-level checks and estimates
CURVE_SAMPLES = 2048


class BoundaryCurve:
    """Closed curve ``center + sum_k A_k cos(k w t) + B_k sin(k w t)``, with ``w = 2 pi / period``

    Args:
      - fourier_coeffs (sequence): one ``((ax, ay), (bx, by))`` pair per mode k = 1, 2, ...
      - period (float): parameter length L
      - center (2-sequence): constant term; the mesh rings shrink towards it

    The curve must be positively oriented, simple and star-shaped with respect
    to `center`: a :any:`GeometryError` is raised otherwise.
    """

    def __init__(self, fourier_coeffs, period=2 * math.pi, center=(0.0, 0.0)):
        coeffs = np.asarray(fourier_coeffs, dtype=float)
        if coeffs.ndim != 3 or coeffs.shape[1:] != (2, 2) or not len(coeffs):
            raise UsageError("fourier_coeffs must be a sequence of ((ax, ay), (bx, by)) pairs")
        if not period > 0:
            raise UsageError("period must be positive")
        self.fourier_coeffs = coeffs
        self.period = float(period)
        self.center = V2(center)
        self._modes = np.arange(1, len(coeffs) + 1)
        self._omega = 2 * math.pi / self.period
        self._validate()

    @classmethod
    def disk(cls, radius=1.0, center=(0.0, 0.0)):
        return cls([((radius, 0.0), (0.0, radius))], center=center)

    @classmethod
    def ellipse(cls, a=1.0, b=0.6, center=(0.0, 0.0)):
        return cls([((a, 0.0), (0.0, b))], center=center)

    @classmethod
    def wavy(cls, amplitude=0.1, mode=3, radius=1.0):
        """Star-shaped curve ``r(t) = radius * (1 + amplitude * cos(mode * t))`` in polar form"""
        if mode < 2:
            raise UsageError("wavy curves need mode >= 2")
        half = radius * amplitude / 2
        coeffs = np.zeros((mode + 1, 2, 2))
        coeffs[0] = ((radius, 0.0), (0.0, radius))
        coeffs[mode] += ((half, 0.0), (0.0, half))
        coeffs[mode - 2] += ((half, 0.0), (0.0, -half))
        return cls(coeffs)

    def _phases(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return t, np.outer(t, self._modes * self._omega)

    def position(self, t):
        """Points on the curve, shape (n, 2)"""
        _, phase = self._phases(t)
        return (
            np.asarray(self.center)
            + np.cos(phase) @ self.fourier_coeffs[:, 0, :]
            + np.sin(phase) @ self.fourier_coeffs[:, 1, :]
        )

    def derivative(self, t):
        _, phase = self._phases(t)
        kw = self._modes * self._omega
        return -(np.sin(phase) * kw) @ self.fourier_coeffs[:, 0, :] + (
            np.cos(phase) * kw
        ) @ self.fourier_coeffs[:, 1, :]

    def second_derivative(self, t):
        _, phase = self._phases(t)
        kw2 = (self._modes * self._omega) ** 2
        return -(np.cos(phase) * kw2) @ self.fourier_coeffs[:, 0, :] - (
            np.sin(phase) * kw2
        ) @ self.fourier_coeffs[:, 1, :]

    def speed(self, t):
        return np.linalg.norm(self.derivative(t), axis=1)

    def tangent(self, t):
        d = self.derivative(t)
        return d / np.linalg.norm(d, axis=1)[:, None]

    def normal(self, t):
        """Outward unit normal"""
        tangent = self.tangent(t)
        return np.column_stack([tangent[:, 1], -tangent[:, 0]])

    def curvature(self, t):
        d1 = self.derivative(t)
        d2 = self.second_derivative(t)
        return (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / np.linalg.norm(d1, axis=1) ** 3

    def wrap(self, t):
        return np.mod(t, self.period)

    @functools.cached_property
    def samples(self):
        return self.period * np.arange(CURVE_SAMPLES) / CURVE_SAMPLES

    @functools.cached_property
    def length(self):
        # trapezoidal rule is spectrally accurate for periodic integrands
        return float(np.mean(self.speed(self.samples)) * self.period)

    @functools.cached_property
    def area(self):
        p = self.position(self.samples)
        d = self.derivative(self.samples)
        return float(np.mean(p[:, 0] * d[:, 1] - p[:, 1] * d[:, 0]) * self.period / 2)

    @functools.cached_property
    def max_speed(self):
        return float(np.max(self.speed(self.samples)))

    @functools.cached_property
    def diameter(self):
        p = self.position(self.samples[::4])
        return float(np.max(np.linalg.norm(p[:, None, :] - p[None, :, :], axis=2)))

    @functools.cached_property
    def max_radius(self):
        """Largest distance between the center and the curve"""
        return float(np.max(np.linalg.norm(self.position(self.samples) - self.center, axis=1)))

    @functools.cached_property
    def inradius(self):
        """Radius of the largest disk inside the domain, estimated on a polar grid"""
        boundary = cKDTree(self.position(self.samples))
        s = np.arange(64) / 64
        t = self.samples[::8]
        radial = self.position(t) - self.center
        points = np.asarray(self.center) + s[:, None, None] * radial[None, :, :]
        distances, _ = boundary.query(points.reshape(-1, 2))
        return float(np.max(distances))

    @functools.cached_property
    def r_domain(self):
        """Chart-scale constant: half the smaller of inradius and minimal curvature radius"""
        kappa = np.max(np.abs(self.curvature(self.samples)))
        curvature_radius = 1 / kappa if kappa > 0 else math.inf
        return min(self.inradius, curvature_radius) / 2

    def nearest_param(self, point):
        """Curve parameter of the curve point closest to `point`"""
        point = np.asarray(point, dtype=float)
        t = float(self.samples[np.argmin(np.linalg.norm(self.position(self.samples) - point, axis=1))])
        for _ in range(8):
            gap = self.position(t)[0] - point
            d1 = self.derivative(t)[0]
            d2 = self.second_derivative(t)[0]
            step = (gap @ d1) / (d1 @ d1 + gap @ d2)
            t -= step
            if abs(step) < 1e-15 * self.period:
                break
        return float(self.wrap(t))

    def _validate(self):
        t = self.samples
        speed = self.speed(t)
        if np.min(speed) <= 1e-12 * np.max(speed):
            raise GeometryError("Curve tangent vanishes")
        if self.area <= 0:
            raise GeometryError("Curve must be positively (counter-clockwise) oriented")
        radial = self.position(t) - self.center
        derivative = self.derivative(t)
        if np.min(radial[:, 0] * derivative[:, 1] - radial[:, 1] * derivative[:, 0]) <= 0:
            raise GeometryError("Curve is not star-shaped with respect to its center")
        if not _polyline_is_simple(self.position(t[::4])):
            raise GeometryError("Curve intersects itself")

    def __repr__(self):
        return f"BoundaryCurve(modes={len(self.fourier_coeffs)}, period={self.period}, center={self.center})"


def _polyline_is_simple(points):
    p0 = points
    p1 = np.roll(points, -1, axis=0)
    n = len(points)

    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (
            c[..., 0] - a[..., 0]
        )

    a, b = p0[:, None, :], p1[:, None, :]
    c, d = p0[None, :, :], p1[None, :, :]
    crossing = (orient(a, b, c) * orient(a, b, d) < 0) & (orient(c, d, a) * orient(c, d, b) < 0)
    i, j = np.indices((n, n))
    adjacent = (np.abs(i - j) <= 1) | (np.abs(i - j) == n - 1)
    return not np.any(crossing & ~adjacent)


class Mesh:
    """Triangulation of a planar domain

    Args:
      - vertices (array (nv, 2)): vertex coordinates
      - triangles (array (nt, 3)): counter-clockwise vertex indices
      - boundary_vertices (array (nb,)): boundary vertices in curve order
      - boundary_params (array (nb,)): curve parameter of each boundary vertex
      - curve (BoundaryCurve or None): the exact boundary, needed by :any:`refine`
    """

    def __init__(self, vertices, triangles, boundary_vertices, boundary_params, curve=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.boundary_vertices = np.ascontiguousarray(boundary_vertices, dtype=np.int64)
        self.boundary_params = np.ascontiguousarray(boundary_params, dtype=float)
        self.curve = curve
        for array in (self.vertices, self.triangles, self.boundary_vertices, self.boundary_params):
            array.setflags(write=False)
        self._validate()

    def _validate(self):
        if np.min(self.signed_areas) <= 0:
            raise GeometryError("Mesh has triangles with non-positive area")
        unique_keys, counts = np.unique(self._edge_keys(self.triangles), return_counts=True)
        boundary_keys = self._edge_keys_of(self.boundary_edges)
        position = np.minimum(np.searchsorted(unique_keys, boundary_keys), len(unique_keys) - 1)
        if np.any(unique_keys[position] != boundary_keys):
            raise GeometryError("Boundary edges are not mesh edges")
        if np.any(counts[position] != 1):
            raise GeometryError("Boundary edges must belong to exactly one triangle")
        if np.count_nonzero(counts == 1) != len(self.boundary_vertices):
            raise GeometryError("Boundary cycle does not cover every boundary edge")
        if len(np.unique(self.boundary_vertices)) != len(self.boundary_vertices):
            raise GeometryError("Boundary cycle visits a vertex twice")
        if self.curve is not None:
            on_curve = self.curve.position(self.boundary_params)
            gap = np.max(np.linalg.norm(on_curve - self.vertices[self.boundary_vertices], axis=1))
            if gap > BOUNDARY_SNAP_RTOL * self.curve.diameter:
                raise GeometryError(f"Boundary vertices are off the curve by {gap:.3g}")

    def _edge_keys(self, triangles):
        edges = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
        return self._edge_keys_of(edges)

    def _edge_keys_of(self, edges):
        lo = np.minimum(edges[:, 0], edges[:, 1])
        hi = np.maximum(edges[:, 0], edges[:, 1])
        return lo * len(self.vertices) + hi

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @functools.cached_property
    def signed_areas(self):
        a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
        return ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])) / 2

    @functools.cached_property
    def area(self):
        return float(np.sum(self.signed_areas))

    @functools.cached_property
    def edges(self):
        """Unique edges as sorted vertex pairs"""
        keys = np.unique(self._edge_keys(self.triangles))
        return np.column_stack([keys // self.n_vertices, keys % self.n_vertices])

    @functools.cached_property
    def h_max(self):
        e = self.edges
        return float(np.max(np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)))

    @functools.cached_property
    def boundary_edges(self):
        return np.column_stack([self.boundary_vertices, np.roll(self.boundary_vertices, -1)])

    @property
    def boundary_param(self):
        """Map boundary vertex -> curve parameter"""
        return dict(zip(self.boundary_vertices.tolist(), self.boundary_params.tolist()))

    @functools.cached_property
    def boundary_length(self):
        e = self.boundary_edges
        return float(np.sum(np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)))

    @functools.cached_property
    def is_boundary(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_vertices] = True
        return mask

    @functools.cached_property
    def polygon(self):
        return self.vertices[self.boundary_vertices]

    @functools.cached_property
    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    @functools.cached_property
    def vertex_areas(self):
        """Lumped (one third) vertex areas"""
        return np.bincount(
            self.triangles.ravel(), weights=np.repeat(self.signed_areas / 3, 3), minlength=self.n_vertices
        )

    @functools.cached_property
    def adjacency(self):
        """Symmetric vertex adjacency as a sparse boolean matrix"""
        e = self.edges
        data = np.ones(2 * len(e), dtype=bool)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n_vertices,) * 2)

    @functools.cached_property
    def diameter(self):
        if self.curve is not None:
            return self.curve.diameter
        p = self.polygon
        return float(np.max(np.linalg.norm(p[:, None, :] - p[None, :, :], axis=2)))

    @functools.cached_property
    def r_domain(self):
        if self.curve is None:
            raise UsageError("r_domain needs the boundary curve")
        return self.curve.r_domain

    @functools.cached_property
    def _centroid_tree(self):
        return cKDTree(self.centroids)

    @functools.cached_property
    def vertex_tree(self):
        return cKDTree(self.vertices)

    def barycentric(self, triangle_indices, points):
        a, b, c = (self.vertices[self.triangles[triangle_indices, k]] for k in range(3))
        d = 2 * self.signed_areas[triangle_indices]
        pa = points - a
        lb = (pa[..., 0] * (c[..., 1] - a[..., 1]) - pa[..., 1] * (c[..., 0] - a[..., 0])) / d
        lc = ((b[..., 0] - a[..., 0]) * pa[..., 1] - (b[..., 1] - a[..., 1]) * pa[..., 0]) / d
        return np.stack([1 - lb - lc, lb, lc], axis=-1)

    def locate_many(self, points, extrapolate=False, tol=1e-12):
        """Containing triangle (-1 when outside) and barycentric coordinates of each point

        With `extrapolate`, points outside the mesh get the nearby triangle whose
        barycentric coordinates are least negative (used for points on the exact
        curve, which may sit just outside the polygonal boundary).
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        k = min(12, self.n_triangles)
        _, candidates = self._centroid_tree.query(points, k=k)
        candidates = candidates.reshape(len(points), k)
        bary = self.barycentric(candidates, points[:, None, :])
        worst = bary.min(axis=2)
        best = np.argmax(worst, axis=1)
        rows = np.arange(len(points))
        found = worst[rows, best] >= -tol
        result = np.where(found, candidates[rows, best], -1)
        coords = bary[rows, best]

        missing = np.flatnonzero(~found)
        if len(missing):
            inside = points_in_polygon(points[missing], self.polygon)
            for index in missing[inside]:
                every = self.barycentric(np.arange(self.n_triangles), points[index])
                hit = np.argmax(every.min(axis=1))
                if every[hit].min() >= -tol:
                    result[index] = hit
                    coords[index] = every[hit]
        if extrapolate:
            outside = result < 0
            result[outside] = candidates[rows, best][outside]
        else:
            coords[result < 0] = np.nan
            coords = np.where(coords < 0, 0.0, coords)
            coords /= np.where(result[:, None] >= 0, coords.sum(axis=1, keepdims=True), 1.0)
        return result, coords

    def locate(self, p):
        """(triangle index, barycentric coordinates) of `p`, or None when it is outside"""
        index, coords = self.locate_many([p])
        if index[0] < 0:
            return None
        return int(index[0]), coords[0]

    def contains(self, points):
        return self.locate_many(points)[0] >= 0

    def refine(self):
        """Uniform 1->4 split; new boundary vertices are moved onto the curve"""
        if self.curve is None:
            raise UsageError("Refinement needs the boundary curve")
        nv = self.n_vertices
        tri = self.triangles
        keys = self._edge_keys(tri)
        unique_keys, inverse = np.unique(keys, return_inverse=True)
        inverse = inverse.reshape(3, -1).T + nv
        midpoints = (self.vertices[unique_keys // nv] + self.vertices[unique_keys % nv]) / 2

        b_keys = self._edge_keys_of(self.boundary_edges)
        b_mid = np.searchsorted(unique_keys, b_keys)
        start = self.boundary_params
        end = np.roll(self.boundary_params, -1)
        end = np.where(end <= start, end + self.curve.period, end)
        mid_params = self.curve.wrap((start + end) / 2)
        midpoints[b_mid] = self.curve.position(mid_params)

        a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
        ab, bc, ca = inverse[:, 0], inverse[:, 1], inverse[:, 2]
        triangles = np.concatenate(
            [
                np.column_stack([a, ab, ca]),
                np.column_stack([ab, b, bc]),
                np.column_stack([ca, bc, c]),
                np.column_stack([ab, bc, ca]),
            ]
        )
        boundary_vertices = np.column_stack([self.boundary_vertices, b_mid + nv]).ravel()
        boundary_params = np.column_stack([self.boundary_params, mid_params]).ravel()
        refined = Mesh(
            np.concatenate([self.vertices, midpoints]),
            triangles,
            boundary_vertices,
            boundary_params,
            curve=self.curve,
        )
        logger.info("Refined mesh: %d vertices, h_max %.4g", refined.n_vertices, refined.h_max)
        return refined

    def write(self, path):
        """Write the ASCII exchange format ("nv nt nb", vertices, triangles, boundary edges)"""
        lines = [f"{self.n_vertices} {self.n_triangles} {len(self.boundary_vertices)}"]
        lines.extend(f"{x:.17g} {y:.17g}" for x, y in self.vertices)
        lines.extend(f"{i} {j} {k}" for i, j, k in self.triangles)
        lines.extend(
            f"{i} {j} {t:.17g}"
            for (i, j), t in zip(self.boundary_edges.tolist(), self.boundary_params)
        )
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path, curve=None):
        rows = Path(path).read_text().split("\n")
        try:
            nv, nt, nb = (int(v) for v in rows[0].split())
            vertices = np.array([[float(v) for v in row.split()] for row in rows[1 : 1 + nv]])
            triangles = np.array([[int(v) for v in row.split()] for row in rows[1 + nv : 1 + nv + nt]])
            boundary = [row.split() for row in rows[1 + nv + nt : 1 + nv + nt + nb]]
            boundary_vertices = np.array([int(row[0]) for row in boundary])
            boundary_params = np.array([float(row[2]) for row in boundary])
        except (ValueError, IndexError) as error:
            raise UsageError(f"Malformed mesh file {path}: {error}") from None
        return cls(vertices.reshape(nv, 2), triangles.reshape(nt, 3), boundary_vertices, boundary_params, curve)

    def __repr__(self):
        return f"<Mesh {self.n_vertices} vertices, {self.n_triangles} triangles, h_max={self.h_max:.4g}>"


def build_domain(curve: BoundaryCurve, target_h: float, max_vertices: int = MAX_VERTICES) -> Mesh:
    """Triangulate the domain bounded by `curve` with edges of length about `target_h`

    Vertices sit on rings ``center + s * (curve(t) - center)``, s = k / N, each
    ring sampled uniformly in the curve parameter; consecutive rings are zipped
    by parameter fraction. Every edge is at most ``2 * target_h`` long.
    """
    if not 0 < target_h < curve.diameter:
        raise UsageError("target_h must be positive and smaller than the curve diameter")
    rings = max(1, math.ceil(curve.max_radius / target_h))
    counts = [
        max(6, math.ceil((k / rings) * curve.max_speed * curve.period / target_h))
        for k in range(1, rings + 1)
    ]
    estimate = 1 + sum(counts)
    if estimate > max_vertices:
        raise ResourceError(f"Mesh would need about {estimate} vertices (budget {max_vertices})")

    center = np.asarray(curve.center)
    vertices = [center[None, :]]
    ring_indices = []
    offset = 1
    for k, count in enumerate(counts, start=1):
        t = curve.period * np.arange(count) / count
        vertices.append(center + (k / rings) * (curve.position(t) - center))
        ring_indices.append(np.arange(offset, offset + count))
        offset += count
    boundary_params = curve.period * np.arange(counts[-1]) / counts[-1]
    # boundary vertices must be exact curve points
    vertices[-1] = curve.position(boundary_params)

    triangles = []
    first = ring_indices[0]
    for i in range(len(first)):
        triangles.append((0, first[i], first[(i + 1) % len(first)]))
    for inner, outer in zip(ring_indices, ring_indices[1:]):
        triangles.extend(_zip_rings(inner, outer))

    mesh = Mesh(np.concatenate(vertices), np.array(triangles), ring_indices[-1], boundary_params, curve)
    logger.info("Built mesh: %d vertices, %d triangles, h_max %.4g", mesh.n_vertices, mesh.n_triangles, mesh.h_max)
    return mesh


def _zip_rings(inner, outer):
    na, nb = len(inner), len(outer)
    i = j = 0
    while i < na or j < nb:
        if j >= nb or (i < na and (i + 1) / na < (j + 1) / nb):
            yield inner[i], outer[j % nb], inner[(i + 1) % na]
            i += 1
        else:
            yield inner[i % na], outer[j], outer[(j + 1) % nb]
            j += 1


#: Domains shipped with the package, by configuration name
DOMAINS: T.Dict[str, T.Callable[[], BoundaryCurve]] = {
    "disk": BoundaryCurve.disk,
    "ellipse": BoundaryCurve.ellipse,
    "wavy": BoundaryCurve.wavy,
}
