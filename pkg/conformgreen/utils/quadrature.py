"""Quadrature rules on triangles, edges and polar sectors.

Rules are given in barycentric coordinates with weights summing to one, so the
integral over a triangle is ``area * sum(w * f(points))``.
"""
import functools
import typing as T

import numpy as np
from scipy.special import roots_legendre


# NB. annotations are documentation hints only


_A1, _B1, _W1 = 0.059715871789770, 0.470142064105115, 0.132394152788506
_A2, _B2, _W2 = 0.797426985353087, 0.101286507323456, 0.125939180544827

#: Degree 5 rule with 7 points (Dunavant)
TRIANGLE_7 = (
    np.array(
        [
            [1 / 3, 1 / 3, 1 / 3],
            [_A1, _B1, _B1],
            [_B1, _A1, _B1],
            [_B1, _B1, _A1],
            [_A2, _B2, _B2],
            [_B2, _A2, _B2],
            [_B2, _B2, _A2],
        ]
    ),
    np.array([0.225, _W1, _W1, _W1, _W2, _W2, _W2]),
)


@functools.lru_cache(maxsize=8)
def subdivided_rule(levels: int = 1):
    """7-point rule applied on the 4**levels children of a uniform 1->4 split"""
    corners = [np.eye(3)]
    for _ in range(levels):
        children = []
        for a, b, c in corners:
            ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
            children.extend(
                [np.array(t) for t in ((a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca))]
            )
        corners = children
    base_points, base_weights = TRIANGLE_7
    points = np.concatenate([base_points @ np.asarray(tri) for tri in corners])
    weights = np.tile(base_weights, len(corners)) / len(corners)
    return points, weights


@functools.lru_cache(maxsize=16)
def gauss_legendre(n: int):
    """Nodes and weights on [0, 1]"""
    nodes, weights = roots_legendre(n)
    return (nodes + 1) / 2, weights / 2


def points_in_polygon(points, polygon):
    """Crossing-number test; `polygon` is an (n, 2) closed vertex cycle without repetition"""
    points = np.atleast_2d(points)
    p0 = polygon
    p1 = np.roll(polygon, -1, axis=0)
    px = points[:, 0:1]
    py = points[:, 1:2]
    straddles = (p0[None, :, 1] > py) != (p1[None, :, 1] > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = p0[None, :, 0] + (py - p0[None, :, 1]) * (p1[None, :, 0] - p0[None, :, 0]) / (
            p1[None, :, 1] - p0[None, :, 1]
        )
    crossings = straddles & (px < x_cross)
    return np.count_nonzero(crossings, axis=1) % 2 == 1


def ray_hits(origin, directions, polygon):
    """Distances along each ray where it crosses the polygon boundary (NaN when missed)"""
    p0 = polygon
    d = np.roll(polygon, -1, axis=0) - p0
    e = directions
    w = p0 - origin
    denom = e[:, None, 0] * d[None, :, 1] - e[:, None, 1] * d[None, :, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = (w[None, :, 0] * d[None, :, 1] - w[None, :, 1] * d[None, :, 0]) / denom
        u = (w[None, :, 0] * e[:, None, 1] - w[None, :, 1] * e[:, None, 0]) / denom
    valid = (np.abs(denom) > 0) & (u >= 0) & (u < 1) & (rho > 0)
    return np.where(valid, rho, np.nan)


def polar_integral(
    origin: T.Sequence[float],
    integrand: T.Callable,
    polygon,
    radius: float,
    n_angles: int = 256,
    n_radial: int = 24,
) -> float:
    """Integrate over the polygon intersected with the disk of `radius` around `origin`

    The integrand is called once with ``(points, rho)`` for all nodes, where rho is
    the distance to the origin, and may be singular like log(rho) at the origin:
    radial nodes are clustered quadratically towards the start of each interval.
    """
    origin = np.asarray(origin, dtype=float)
    angles = 2 * np.pi * np.arange(n_angles) / n_angles
    directions = np.column_stack([np.cos(angles), np.sin(angles)])
    hits = ray_hits(origin, directions, polygon)
    tiny = 1e-13 * radius

    starts, ends, ray_index = [], [], []
    for k in range(n_angles):
        row = hits[k]
        row = np.sort(row[(row > tiny) & (row < radius)])
        breaks = np.concatenate([[0.0], row, [radius]])
        starts.append(breaks[:-1])
        ends.append(breaks[1:])
        ray_index.append(np.full(len(breaks) - 1, k))
    starts = np.concatenate(starts)
    ends = np.concatenate(ends)
    ray_index = np.concatenate(ray_index)
    mids = origin + ((starts + ends) / 2)[:, None] * directions[ray_index]
    keep = points_in_polygon(mids, polygon) & (ends - starts > 0)
    starts, ends, ray_index = starts[keep], ends[keep], ray_index[keep]
    if not len(starts):
        return 0.0

    u, wu = gauss_legendre(n_radial)
    span = (ends - starts)[:, None]
    rho = starts[:, None] + span * u[None, :] ** 2
    jac = 2 * span * u[None, :] * wu[None, :]
    points = origin + rho[..., None] * directions[ray_index][:, None, :]
    values = integrand(points.reshape(-1, 2), rho.ravel()).reshape(rho.shape)
    return float(np.sum(values * rho * jac) * (2 * np.pi / n_angles))
