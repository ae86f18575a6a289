"""Exception hierarchy for conformgreen.

All public operations raise subclasses of :any:`ConformGreenError`, so callers
(and the command line front-end) can tell configuration mistakes apart from
numerical failures.
"""


class ConformGreenError(Exception):
    """Base class for every error raised by this package"""


class GeometryError(ConformGreenError):
    """Invalid domain geometry: bad curves, degenerate triangles, points outside"""


class ResourceError(ConformGreenError, MemoryError):
    """The requested discretization exceeds the configured vertex budget"""


class UsageError(ConformGreenError, ValueError):
    """Wrong arguments or objects that do not belong together"""


class ConfigError(UsageError):
    """Malformed experiment configuration file"""


class DomainError(ConformGreenError, ValueError):
    """Arguments outside the domain of a function (coincident points, too large steps)"""


class SingularEvaluationError(ConformGreenError, ZeroDivisionError):
    """A singular kernel was evaluated at its pole"""


class IllPosedError(ConformGreenError):
    """Neumann data violates the compatibility condition"""


class NumericalError(ConformGreenError):
    """Factorization or residual failures, non-finite second differences"""


#: Errors the command line reports with exit status 2; everything else is 3.
USER_ERRORS = (UsageError, GeometryError, DomainError)
