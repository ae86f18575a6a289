import logging
import typing as T
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from ..errors import UsageError


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PowerLawFit:
    """Result of fitting ``a * rho**(-p) + b``

    `slope` is the log-log exponent -p, `prefactor` the coefficient a and
    `loglog_slope` the plain least-squares slope of log(value) against log(rho).
    """

    slope: float
    prefactor: float
    offset: float
    loglog_slope: float


def _model(rho, a, p, b):
    return a * rho ** (-p) + b


def fit_power_law(rho: T.Sequence[float], values: T.Sequence[float]) -> PowerLawFit:
    rho = np.asarray(rho, dtype=float)
    values = np.abs(np.asarray(values, dtype=float))
    if len(rho) < 4:
        raise UsageError("At least four samples are needed for a power-law fit")
    loglog_slope, log_a = np.polyfit(np.log(rho), np.log(values), 1)
    guess = (np.exp(log_a), -loglog_slope, 0.0)
    try:
        (a, p, b), _ = curve_fit(_model, rho, values, p0=guess, maxfev=20000)
    except RuntimeError:
        logger.warning("Power-law fit did not converge; reporting the log-log slope only")
        a, p, b = np.exp(log_a), -loglog_slope, 0.0
    return PowerLawFit(slope=-float(p), prefactor=float(a), offset=float(b), loglog_slope=float(loglog_slope))
