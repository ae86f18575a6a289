import math
from enum import Enum


class LocationClass(Enum):
    """Where a source point lives: in the open domain or on its boundary curve"""

    INTERIOR = "interior"
    BOUNDARY = "boundary"

    @property
    def kappa(self):
        """Singularity weight: the full angle at interior points, half of it on the boundary"""
        return KAPPA_INTERIOR if self is LocationClass.INTERIOR else KAPPA_BOUNDARY


#: Log-singularity weight for interior sources
KAPPA_INTERIOR = 2 * math.pi
#: Log-singularity weight for boundary sources
KAPPA_BOUNDARY = math.pi

#: Boundary vertices must lie on the curve within this fraction of the diameter
BOUNDARY_SNAP_RTOL = 1e-12

#: Default upper bound on the number of mesh vertices
MAX_VERTICES = 2_000_000

#: Relative factor in the compatibility tolerance of Neumann solves (an h_max**2 term is added)
COMPAT_RTOL = 1e-8

#: Relative residual above which a solve is logged as inaccurate
RESIDUAL_WARN_RTOL = 1e-10
#: Relative residual above which a solve is considered failed
RESIDUAL_FAIL_RTOL = 1e-6

#: Coincidence guard for configuration points, as a fraction of the diameter
DEDUP_EPS_FACTOR = 1e-6

#: Robin finite difference step, as a multiple of h_max (floored at 1e-3 * r_domain)
ROBIN_STEP_FACTOR = 0.5

#: Default second-difference step for Hessians, as a fraction of the diameter
HESSIAN_STEP_FACTOR = 0.05

#: A Hessian is degenerate when its Morse margin is below this multiple of the difference noise
DEGENERACY_NOISE_FACTOR = 10

#: Default gradient tolerance of the critical point search, relative to the typical gradient scale
GTOL_FACTOR = 1e-6

#: Multi-start guard tube around the diagonal, as a fraction of the diameter
START_GUARD_FACTOR = 0.05

#: Deduplication radius of critical points, as a fraction of the diameter
DEDUP_RADIUS_FACTOR = 1e-2

#: Version of the JSON report layout written by the command line
SCHEMA_VERSION = 1
