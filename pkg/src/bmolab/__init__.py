"""Numerical laboratory for parabolic equations with BMO skew drift on periodic grids."""

from .bmo import BmoEstimate, bmo_norm, linf_bmo_norm, mollify, mollify_coefficients
from .gallery import FAMILIES, CoefficientField, EllipticityError, MatrixFieldFrame, gallery_field
from .grid import FaceFluxField, Grid, ScalarField, integrate, norms
from .hardy import compensated_pairing, div_curl_pairing, fgradf_hardy_check, hardy_norm
from .kernel import DaviesTwist, KernelTable, ck_compose_check, kernel_table, scaling_check, twisted_mass
from .solver import SolveConfig, SolverError, solve_backward, solve_cauchy
from .estimates import aronson_fit, harnack_ratio, holder_exponent, nash_entropy, nash_iteration_check

__version__ = "0.1.0"

__all__ = [
    "BmoEstimate", "CoefficientField", "DaviesTwist", "EllipticityError", "FAMILIES", "FaceFluxField",
    "Grid", "KernelTable", "MatrixFieldFrame", "ScalarField", "SolveConfig", "SolverError",
    "aronson_fit", "bmo_norm", "ck_compose_check", "compensated_pairing", "div_curl_pairing",
    "fgradf_hardy_check", "gallery_field", "hardy_norm", "harnack_ratio", "holder_exponent",
    "integrate", "kernel_table", "linf_bmo_norm", "mollify", "mollify_coefficients", "nash_entropy",
    "nash_iteration_check", "norms", "scaling_check", "solve_backward", "solve_cauchy", "twisted_mass",
]
