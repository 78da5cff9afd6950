"""Characteristic functions of Hilbert-space contractions and their block factorizations."""

from .charfun import (
    PolyOpFunction,
    poly_degree,
    purely_contractive,
    theta_coeffs,
    theta_eval,
    verify_coincidence,
)
from .factor2 import Block2, Factorization2, extract_gamma, halmos, verify_factor2
from .factor3 import (
    alt_decomposition,
    corollary_factors,
    dim_report,
    factorize3,
    weak_converse_check,
)
from .linalg import classify, hermitian_eig, pinv, psd_sqrt, range_frame
from .operators import Coshift, Dense, Shift, StructuredOperator, StructuredSpace, defect

__version__ = "0.1.0"

__all__ = [
    "Block2", "Coshift", "Dense", "Factorization2", "PolyOpFunction", "Shift",
    "StructuredOperator", "StructuredSpace", "alt_decomposition", "classify",
    "corollary_factors", "defect", "dim_report", "extract_gamma", "factorize3", "halmos",
    "hermitian_eig", "pinv", "poly_degree", "psd_sqrt", "purely_contractive", "range_frame",
    "theta_coeffs", "theta_eval", "verify_coincidence", "verify_factor2", "weak_converse_check",
]
