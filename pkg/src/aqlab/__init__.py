"""Numerical laboratory for half-integer multi-valued Dirichlet minimizers in the plane."""
from .aq import AqPoint, HalfAqPoint, metric_g, eta, diameter_separation, support_dist, retract, collapse, geodesic_interpolate

__all__ = ["AqPoint", "HalfAqPoint", "metric_g", "eta", "diameter_separation", "support_dist",
           "retract", "collapse", "geodesic_interpolate"]
__version__ = "0.1.0"
