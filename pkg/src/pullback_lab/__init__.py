"""Numerical verification of pullbacks of differential forms along uniform maps.

Chart-level Riemannian geometry, pullback disk bundles with Sasaki metrics,
Mathai–Quillen Thom forms, the operator T_f and homotopy-operator residuals.
"""
from .errors import *  # noqa: F401,F403
from .geometry import ChartManifold, euclidean, sphere_chart, torus
from .forms import DifferentialForm, form_from_expressions, intersection_pairing, wedge, pullback
from .maps import HomotopyMap, SmoothMap
from .bundles import PullbackBundle, fiber_integrate, tangent_bundle
from .thom import build_bump, thom_form
from .pullback import TfOperator, apply_Tf, make_tf, p_f, residual_T_id, t_f

__version__ = "0.1.0"

__all__ = [
    "ChartManifold", "euclidean", "sphere_chart", "torus", "DifferentialForm", "form_from_expressions",
    "intersection_pairing", "wedge", "pullback", "HomotopyMap", "SmoothMap", "PullbackBundle",
    "fiber_integrate", "tangent_bundle", "build_bump", "thom_form", "TfOperator", "apply_Tf", "make_tf",
    "p_f", "residual_T_id", "t_f",
]
