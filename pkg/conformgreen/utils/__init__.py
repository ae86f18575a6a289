from .vector import V2
from .expression import Expression
from .fitting import PowerLawFit, fit_power_law
from .quadrature import TRIANGLE_7, subdivided_rule, gauss_legendre, polar_integral, points_in_polygon
