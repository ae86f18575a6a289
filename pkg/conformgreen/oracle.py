"""Closed-form Neumann Green and Robin functions of the flat unit disk.

Method of images: with ``xi* = xi / |xi|**2``::

    N(x, xi) = -(1/2pi) [log|x - xi| + log(|xi| |x - xi*|)] + (|x|**2 + |xi|**2) / (4 pi) - 3 / (8 pi)

solves ``-Delta N = delta_xi - 1/pi``, ``dN/dr = 0`` on the circle and has zero
mean. ``|xi| |x - xi*|`` is evaluated as ``sqrt(|x|**2 |xi|**2 - 2 x.xi + 1)``,
which is symmetric in (x, xi) and needs no special case at xi = 0.
:any:`self_check` verifies the three defining conditions numerically.
"""
import math

import numpy as np

from .errors import SingularEvaluationError, UsageError
from .utils import gauss_legendre


#: Zero-mean constant of the image formula
MEAN_CONSTANT = -3 / (8 * math.pi)

#: Radii beyond 1 - this are treated as the boundary in :any:`disk_robin_exact`
EDGE_GUARD = 1e-8


def _as_points(p):
    return np.atleast_2d(np.asarray(p, dtype=float))


def _image_distance_sq(x, xi):
    return np.sum(x * x, axis=-1) * np.sum(xi * xi, axis=-1) - 2 * np.sum(x * xi, axis=-1) + 1


def disk_green_regular(x, xi):
    """``N + (1/2pi) log|x - xi|``, smooth in the open disk"""
    x, xi = np.broadcast_arrays(_as_points(x), _as_points(xi))
    return (
        -np.log(_image_distance_sq(x, xi)) / (4 * math.pi)
        + (np.sum(x * x, axis=-1) + np.sum(xi * xi, axis=-1)) / (4 * math.pi)
        + MEAN_CONSTANT
    )


def disk_green_exact(x, xi):
    """Neumann Green function of the unit disk (vectorised over points)"""
    x, xi = np.broadcast_arrays(_as_points(x), _as_points(xi))
    if np.any(np.sum(x * x, axis=-1) >= 1) or np.any(np.sum(xi * xi, axis=-1) >= 1):
        raise UsageError("Both points must lie in the open unit disk")
    distance_sq = np.sum((x - xi) ** 2, axis=-1)
    if np.any(distance_sq == 0):
        raise SingularEvaluationError("Green function evaluated at its pole")
    return -np.log(distance_sq) / (4 * math.pi) + disk_green_regular(x, xi)


def disk_green_gradient(x, xi):
    """Gradient of N with respect to x; valid up to the closed disk"""
    x, xi = np.broadcast_arrays(_as_points(x), _as_points(xi))
    diff = x - xi
    distance_sq = np.sum(diff * diff, axis=-1)
    if np.any(distance_sq == 0):
        raise SingularEvaluationError("Green function gradient evaluated at its pole")
    xi_sq = np.sum(xi * xi, axis=-1)
    image_grad = (xi_sq[..., None] * x - xi) / _image_distance_sq(x, xi)[..., None]
    return -(diff / distance_sq[..., None] + image_grad) / (2 * math.pi) + x / (2 * math.pi)


def disk_robin_exact(xi):
    """Robin function of the flat unit disk; +inf within 1e-8 of the circle"""
    xi = _as_points(xi)
    r2 = np.sum(xi * xi, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = -np.log1p(-r2) / (2 * math.pi) + r2 / (2 * math.pi) + MEAN_CONSTANT
    return np.where(np.sqrt(r2) > 1 - EDGE_GUARD, np.inf, value)


def disk_robin_radial_derivative(r):
    """d/dr of :any:`disk_robin_exact` along a radius"""
    r = np.asarray(r, dtype=float)
    return r / (math.pi * (1 - r * r)) + r / math.pi


def disk_mean(xi, n_angles=256, n_radial=48):
    """``int N(x, xi) dx`` over the disk by polar quadrature centered at xi

    The log term is integrated in closed form along each ray, the smooth
    remainder by Gauss-Legendre; the result is accurate to about 1e-13.
    """
    xi = np.asarray(xi, dtype=float)
    angles = 2 * math.pi * np.arange(n_angles) / n_angles
    e = np.column_stack([np.cos(angles), np.sin(angles)])
    along = e @ xi
    reach = -along + np.sqrt(along ** 2 + 1 - xi @ xi)
    # int_0^R rho log(rho) drho
    log_part = reach ** 2 / 2 * np.log(reach) - reach ** 2 / 4
    u, w = gauss_legendre(n_radial)
    rho = reach[:, None] * u[None, :]
    points = xi + rho[..., None] * e[:, None, :]
    smooth = disk_green_regular(points.reshape(-1, 2), xi).reshape(rho.shape)
    smooth_part = np.sum(smooth * rho * w[None, :], axis=1) * reach
    return float(np.sum(-log_part / (2 * math.pi) + smooth_part) * 2 * math.pi / n_angles)


def self_check(n_sources=10, n_angles=256, seed=0):
    """Verify the closed forms; returns a dict of named maximal residuals

    - ``laplacian``: |-Delta(regular part) - (-1/pi)| by a fourth-order stencil
    - ``normal_derivative``: |dN/dr| on the circle
    - ``symmetry``: |N(x, xi) - N(xi, x)|
    - ``mean``: |int N dx|
    - ``robin_limit``: |N + log|x - xi| / 2pi - R(xi)| extrapolated from x -> xi
    """
    rng = np.random.default_rng(seed)
    radius = np.sqrt(rng.uniform(0, 0.81, n_sources))
    angle = rng.uniform(0, 2 * math.pi, n_sources)
    sources = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])

    phi = 2 * math.pi * np.arange(n_angles) / n_angles
    circle = np.column_stack([np.cos(phi), np.sin(phi)])
    normal = max(float(np.max(np.abs(np.sum(disk_green_gradient(circle, s) * circle, axis=1)))) for s in sources)

    step = 1e-2
    laplacian = 0.0
    for s in sources:
        probe = s * 0.5 + np.array([0.05, -0.03])
        total = 0.0
        for shift in (np.array([step, 0]), np.array([0, step])):
            total += (
                -disk_green_regular(probe + 2 * shift, s)
                + 16 * disk_green_regular(probe + shift, s)
                - 30 * disk_green_regular(probe, s)
                + 16 * disk_green_regular(probe - shift, s)
                - disk_green_regular(probe - 2 * shift, s)
            ) / (12 * step ** 2)
        laplacian = max(laplacian, abs(float(-total[0]) + 1 / math.pi))

    others = rng.permutation(sources)
    mask = np.linalg.norm(others - sources, axis=1) > 0
    symmetry = float(
        np.max(np.abs(disk_green_exact(sources[mask], others[mask]) - disk_green_exact(others[mask], sources[mask])))
    )
    mean = max(abs(disk_mean(s)) for s in sources)

    limit = 0.0
    for s in sources:
        offsets = np.array([1e-3, 5e-4, 2.5e-4])
        values = disk_green_exact(s + offsets[:, None] * np.array([1.0, 0.0]), s) + np.log(offsets) / (2 * math.pi)
        # linear extrapolation to zero offset
        extrapolated = 2 * values[2] - values[1]
        limit = max(limit, abs(float(extrapolated - disk_robin_exact(s)[0])))

    return {
        "laplacian": laplacian,
        "normal_derivative": normal,
        "symmetry": symmetry,
        "mean": mean,
        "robin_limit": limit,
    }


#: Acceptance thresholds of :any:`self_check`
SELF_CHECK_TOLERANCES = {
    "laplacian": 1e-6,
    "normal_derivative": 1e-10,
    "symmetry": 1e-13,
    "mean": 1e-10,
    "robin_limit": 1e-6,
}
