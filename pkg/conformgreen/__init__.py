"""Conformgreen computes Neumann Green and Robin functions of planar domains with conformal metrics

Usage: build a mesh of a domain bounded by a smooth closed curve, attach a
conformal factor psi, and evaluate Green functions, Robin functions, the
interaction energy of weighted point configurations and its critical points.
Derivatives of the regular part with respect to psi are available in three
independent forms.
"""

from conformgreen.errors import (
    ConformGreenError,
    ConfigError,
    DomainError,
    GeometryError,
    IllPosedError,
    NumericalError,
    ResourceError,
    SingularEvaluationError,
    UsageError,
)
from conformgreen.values import LocationClass, KAPPA_INTERIOR, KAPPA_BOUNDARY
from conformgreen.utils import V2, Expression
from conformgreen.mesh import BoundaryCurve, Mesh, build_domain, DOMAINS
from conformgreen.fem import ConformalMetric, ScalarField, OperatorBundle, assemble, solve_neumann, integrate
from conformgreen.green import (
    SourcePoint,
    GreenBundle,
    GreenFunction,
    regular_part,
    green_eval,
    robin,
    singularity_strength,
)
from conformgreen.interaction import (
    Configuration,
    HessianReport,
    InteractionEnergy,
    LogPotential,
    ZeroPotential,
    f_value,
    f_gradient,
    f_hessian,
)
from conformgreen.critical import BoundaryApproach, Collision, MixedCollision, blowup_probe, find_critical
from conformgreen.perturb import (
    PerturbationDirection,
    dpsi_H_integral,
    dpsi_H_pde,
    dpsi_H_fd,
    dpsi_robin,
    genericity_trial,
)
from conformgreen.config import ExperimentConfig
# Import otherwise unused modules, so that they are
# always available after importing the main library:
import conformgreen.oracle


__version__ = "0.1.0"
__author__ = "The conformgreen developers"
