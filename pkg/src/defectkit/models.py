"""Deterministic instance generators.

Every generator draws from ``numpy.random.default_rng(seed)``, i.e. PCG64
seeded through ``SeedSequence``.  Complex Gaussians are ``(x + i y)/sqrt(2)``
with the whole real array drawn before the imaginary one, so an
implementation in another language reproduces instances from the seed by
following the same draw order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg as la
from .factor2 import block2_from_gamma
from .factor3 import weak_converse_check
from .operators import (
    Dense,
    StructuredOperator,
    StructuredSpace,
    defect,
    nilpotent_order,
    structured_shapes,
)

GAMMA_MARGIN = 0.1
BLOCK_MARGIN = 0.1


def rng_for(seed: int) -> np.random.Generator:
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValueError(f"seed {seed} is not a 64-bit unsigned integer")
    return np.random.default_rng(seed)


def complex_gaussian(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    re = rng.standard_normal((rows, cols))
    im = rng.standard_normal((rows, cols))
    return (re + 1j * im) / np.sqrt(2.0)


def _rescale(a: np.ndarray, margin: float) -> np.ndarray:
    if not 0.0 <= margin < 1.0:
        raise ValueError(f"margin {margin} outside [0, 1)")
    if a.size == 0:
        return la.as_matrix(a)
    s = la.opnorm(a)
    if s == 0.0:
        return la.as_matrix(a)
    out = a * ((1.0 - margin) / s)
    return la.clamp_contraction(out) if margin == 0.0 else out


def random_rect_contraction(rows: int, cols: int, rng: np.random.Generator,
                            margin: float = GAMMA_MARGIN) -> np.ndarray:
    """Gaussian ``rows x cols`` matrix rescaled to norm ``1 - margin``."""
    return _rescale(complex_gaussian(rng, rows, cols), margin)


def random_contraction(n: int, seed: int, margin: float = 0.0) -> np.ndarray:
    """``n x n`` contraction with ``sigma_max = 1 - margin``."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return random_rect_contraction(n, n, rng_for(seed), margin)


def jordan_nilpotent(m: int, scale: float = 1.0) -> np.ndarray:
    """``scale`` on the superdiagonal of an ``m x m`` zero matrix."""
    if m < 1:
        raise ValueError("order m must be >= 1")
    if not 0.0 < scale <= 1.0:
        raise ValueError(f"scale {scale} outside (0, 1]")
    return np.diag(np.full(m - 1, scale, dtype=np.complex128), 1) if m > 1 else la.zeros(1, 1)


def random_nilpotent(n: int, rng: np.random.Generator, margin: float = BLOCK_MARGIN) -> np.ndarray:
    """``Q U Q*`` with ``U`` strictly upper triangular Gaussian and ``Q`` Haar-like unitary."""
    if n == 0:
        return la.zeros(0, 0)
    u = np.triu(complex_gaussian(rng, n, n), 1)
    q, r = np.linalg.qr(complex_gaussian(rng, n, n))
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    return _rescale(q @ u @ la.adj(q), margin)


def random_block3(dims, seed: int, margin: float = BLOCK_MARGIN) -> np.ndarray:
    """Dense upper triangular contraction on ``C^n1 + C^n0 + C^n-1``.

    Both couplings come from random strict contractions ``Gamma``, nested
    as ``X = D_{A*} Gamma D_B`` on the top pair and then once more against
    the bottom block, so the result is a contraction by construction.
    """
    n1, n0, nm1 = (int(d) for d in dims)
    if min(n1, n0, nm1) < 0:
        raise ValueError("block sizes must be >= 0")
    rng = rng_for(seed)
    a, b, c = (random_rect_contraction(k, k, rng, margin) for k in (n1, n0, nm1))
    da, db = defect(Dense(a)), defect(Dense(b))
    g = random_rect_contraction(da.dim_star, db.dim, rng, GAMMA_MARGIN)
    top = block2_from_gamma(a, b, g).operator
    dt, dc = defect(top), defect(Dense(c))
    g1 = random_rect_contraction(dt.dim_star, dc.dim, rng, GAMMA_MARGIN)
    return block2_from_gamma(top, c, g1).operator.matrix()


def random_block2(n1: int, n2: int, seed: int, margin: float = BLOCK_MARGIN):
    """Random 2x2 block instance, returned as a ``Block2``."""
    rng = rng_for(seed)
    a = random_rect_contraction(n1, n1, rng, margin)
    b = random_rect_contraction(n2, n2, rng, margin)
    g = random_rect_contraction(defect(Dense(a)).dim_star, defect(Dense(b)).dim, rng, GAMMA_MARGIN)
    return block2_from_gamma(a, b, g)


def random_structured(d1: int, n0: int, d3: int, seed: int, jordan: bool = False,
                      scale: float = 1.0, margin: float = GAMMA_MARGIN) -> StructuredOperator:
    """Shift + nilpotent + backward shift with random strict couplings.

    With ``jordan`` the middle block is ``jordan_nilpotent(n0, scale)``;
    otherwise a unitarily rotated random strictly triangular matrix.
    """
    space = StructuredSpace(d1, n0, d3)
    rng = rng_for(seed)
    if n0 == 0:
        n, m = la.zeros(0, 0), 0
    elif jordan:
        n, m = jordan_nilpotent(n0, scale), n0
    else:
        n = random_nilpotent(n0, rng)
        m = nilpotent_order(n)
    gshape, g1shape = structured_shapes(space, n, m)
    gamma = random_rect_contraction(*gshape, rng, margin)
    gamma1 = random_rect_contraction(*g1shape(gamma), rng, margin)
    return StructuredOperator(space, n, gamma, gamma1, m)


@dataclass
class Counterexample:
    n: np.ndarray
    m: int
    v1: np.ndarray
    v2: np.ndarray
    m_dim: int
    control: bool
    degree: int | None

    def to_json(self) -> dict:
        return {"N": la.matrix_to_json(self.n), "m": self.m, "V1": la.matrix_to_json(self.v1),
                "V2": la.matrix_to_json(self.v2), "Mdim": self.m_dim, "control": self.control,
                "degree": self.degree}


def _isometry(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    q, r = np.linalg.qr(complex_gaussian(rng, rows, cols))
    return q[:, :cols] * (np.diag(r) / np.abs(np.diag(r)))


def remark_counterexample(k: int, kstar: int, m: int, m_dim: int, seed: int = 0,
                          control: bool = False) -> Counterexample:
    """``(N, V1, V2)`` with ``ker V1 = D_{N*}`` and ``||V21 h|| = ||V22 h||``.

    ``k`` and ``kstar`` are the dimensions of the (abstract) defect spaces
    of ``T``.  ``N = J_m + 0_{k-1}`` so that ``D_N`` has room for the
    half-isometry ``V21``.  With ``control`` the first factor instead
    mixes in ``D_{N*}`` and the product is no longer forced to be constant.
    """
    if k < 1 or kstar < 0 or m < 1:
        raise ValueError("need k >= 1, kstar >= 0, m >= 1")
    if m_dim < max(k, kstar):
        raise ValueError(f"infeasible: M-dim {m_dim} must be >= max(k, kstar) = {max(k, kstar)}")
    rng = rng_for(seed)
    n = la.block_diag(jordan_nilpotent(m), la.zeros(k - 1, k - 1))
    dn = defect(Dense(n))
    w1 = _isometry(rng, dn.dim, k)
    w2 = _isometry(rng, m_dim, k)
    v2 = np.vstack([w1, w2]) / np.sqrt(2.0)
    if control:
        v1 = la.adj(_isometry(rng, dn.dim_star + m_dim, kstar)) if kstar else la.zeros(0, dn.dim_star + m_dim)
    else:
        w = la.adj(_isometry(rng, m_dim, kstar)) if kstar else la.zeros(0, m_dim)
        v1 = np.hstack([la.zeros(kstar, dn.dim_star), w])
    order = nilpotent_order(n)
    verdict = weak_converse_check(n, v1, v2, m_dim, m=order)
    return Counterexample(n, order, v1, v2, m_dim, control, verdict.degree)


def counterexample_residuals(ce: Counterexample) -> dict:
    """Coisometry/isometry residuals, the kernel and row-norm conditions."""
    dn = defect(Dense(ce.n, nil_order=ce.m))
    kernel = la.opnorm(ce.v1[:, :dn.dim_star])
    # ||V21 h|| = ||V22 h|| for every h iff V21*V21 = V22*V22
    gram = la.opnorm(la.adj(ce.v2[:dn.dim]) @ ce.v2[:dn.dim] - la.adj(ce.v2[dn.dim:]) @ ce.v2[dn.dim:])
    return {"V1coisometry": la.coisometry_residual(ce.v1), "V2isometry": la.isometry_residual(ce.v2),
            "kernel": kernel, "rowNorms": gram}


__all__ = [
    "Counterexample", "complex_gaussian", "counterexample_residuals", "jordan_nilpotent",
    "random_block2", "random_block3", "random_contraction", "random_nilpotent",
    "random_rect_contraction", "random_structured", "remark_counterexample", "rng_for",
]
