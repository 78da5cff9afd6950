"""Three-block upper triangular contractions.

``T = [[S, *, *], [0, N, *], [0, 0, C]]`` is grouped as
``T1 = [[S, X], [0, N]]`` and ``T = [[T1, X1], [0, C]]``; applying the
two-block factorization twice gives

    Theta_T = tau_1*^{-1} diag(Theta_C, I_E1) U1 diag(Theta_N, I_M) U2 diag(Theta_S, I_E2) tau~_1

with ``U1 = J[Gamma1] diag(tau_*^{-1}, I)``, ``U2 = diag(J[Gamma], I)`` and
``tau~_1 = diag(tau, I) tau_1``.  When ``S`` is a pure isometry and ``C`` a
pure coisometry the outer factors have empty defect spaces and the
identity collapses to ``Theta_T = V1 diag(Theta_N, I_M) V2``.

The alternative grouping ``T_-1 = [[N, X'], [0, C]]``,
``T = [[S, X_-1], [0, T_-1]]`` gives the same kind of identity with a
space ``M~`` whose dimension is compared to ``M`` by :func:`dim_report`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg as la
from .charfun import STANDARD_GRID, PolyOpFunction, pad, poly_degree, theta_coeffs, theta_eval
from .factor2 import (ACCEPT_TOL, Block2, FactorizationError, Halmos, NonTriangularError, build_tau_pair,
                      extract_gamma, halmos)
from .operators import (Contraction, Dense, StructuredOperator, UpperBlock, Window, as_operator,
                        check_nilpotent, defect, probe_block)


@dataclass
class Factorization3:
    inner: Block2
    outer: Block2
    j: Halmos
    j1: Halmos
    tau: np.ndarray
    tau_star: np.ndarray
    tau1: np.ndarray
    tau1_star: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    tau1_tilde: np.ndarray
    residual: float = float("nan")
    unitarity: dict = field(default_factory=dict)

    @property
    def s(self) -> Contraction:
        return self.inner.t1

    @property
    def n(self) -> Contraction:
        return self.inner.t2

    @property
    def c(self) -> Contraction:
        return self.outer.t2

    @property
    def operator(self) -> Contraction:
        return self.outer.operator

    @property
    def gamma(self):
        return self.inner.gamma

    @property
    def gamma1(self):
        return self.outer.gamma

    @property
    def e1_dim(self) -> int:
        return self.j1.dim_star

    @property
    def m_dim(self) -> int:
        return self.j.dim_star + self.j1.dim

    @property
    def e2_dim(self) -> int:
        return self.j.dim + self.j1.dim

    def rhs(self, z: complex) -> np.ndarray:
        left = pad(theta_eval(self.c, z), self.e1_dim) @ self.u1
        mid = pad(theta_eval(self.n, z), self.m_dim) @ self.u2
        right = pad(theta_eval(self.s, z), self.e2_dim) @ self.tau1_tilde
        return la.adj(self.tau1_star) @ left @ mid @ right

    def to_json(self) -> dict:
        mj = la.matrix_to_json
        return {"Gamma": mj(self.gamma), "Gamma1": mj(self.gamma1), "U1": mj(self.u1), "U2": mj(self.u2),
                "tau1Star": mj(self.tau1_star), "tau1Tilde": mj(self.tau1_tilde),
                "E1": self.e1_dim, "E2": self.e2_dim, "M": self.m_dim,
                "residual": self.residual, "unitarity": self.unitarity}


def _split_dense(t, split) -> tuple[Block2, Block2]:
    t = la.as_matrix(t)
    n1, n0, n3 = split
    n = n1 + n0 + n3
    if t.shape != (n, n):
        raise ValueError(f"split {split} does not match a {t.shape} matrix")
    a, b = slice(0, n1), slice(n1, n1 + n0)
    c, ab = slice(n1 + n0, n), slice(0, n1 + n0)
    low = max(la.opnorm(t[b, a]), la.opnorm(t[c, a]), la.opnorm(t[c, b]))
    if low > 1e-12:
        raise NonTriangularError(f"matrix is not block upper triangular for split {split} ({low:.3e})")
    inner = extract_gamma(Dense(t[a, a]), Dense(t[b, b]), t[a, b])
    outer = extract_gamma(inner.operator, Dense(t[c, c]), _fr(t[ab, c], inner.operator, n3))
    return inner, outer


def _fr(mat, t1: Contraction, n3: int):
    from .operators import FiniteRank, fin_space
    return FiniteRank(Window.full_fin(fin_space(n3)), Window.full_fin(t1.space), mat)


def _split_structured(t: StructuredOperator) -> tuple[Block2, Block2]:
    t1 = t.t1
    inner = Block2(t1.t1, t1.t2, t1.x, t.gamma, t1)
    outer = Block2(t1, t.t2, t.x, t.gamma1, t)
    return inner, outer


def split_blocks(t, split=None) -> tuple[Block2, Block2]:
    if isinstance(t, StructuredOperator):
        return _split_structured(t)
    if split is None:
        raise ValueError("a dense operator needs a block split (n1, n0, n_-1)")
    m = t.matrix() if isinstance(t, Contraction) else t
    return _split_dense(m, split)


def factorize3(t, split=None, grid=STANDARD_GRID, tol: float = ACCEPT_TOL,
               strict: bool = True) -> Factorization3:
    inner, outer = split_blocks(t, split)
    j, j1 = halmos(inner.gamma), halmos(outer.gamma)
    tau, tau_s = build_tau_pair(inner, j)
    tau1, tau1_s = build_tau_pair(outer, j1)
    u1 = j1.j @ la.block_diag(la.adj(tau_s), la.eye(j1.dim))
    u2 = la.block_diag(j.j, la.eye(j1.dim))
    tt = la.block_diag(tau, la.eye(j1.dim)) @ tau1
    fac = Factorization3(inner, outer, j, j1, tau, tau_s, tau1, tau1_s, u1, u2, tt)
    fac.unitarity = {"U1": la.unitary_residual(u1), "U2": la.unitary_residual(u2),
                     "tau1Star": la.unitary_residual(tau1_s), "tau1Tilde": la.unitary_residual(tt)}
    op = fac.operator
    fac.residual = max((la.opnorm(theta_eval(op, z) - fac.rhs(z)) for z in grid), default=0.0)
    if strict:
        _accept(fac.residual, fac.unitarity, tol)
    return fac


def _accept(residual: float, checks: dict, tol: float):
    bad = {k: v for k, v in checks.items() if v > tol}
    if bad:
        raise FactorizationError(f"isometry/unitarity checks failed: {bad}")
    if residual > tol:
        raise FactorizationError(f"factorization residual {residual:.3e} exceeds {tol:.0e}")


# -- pure isometry / coisometry ends ------------------------------------------

@dataclass
class CorollaryFactors:
    v1: np.ndarray
    v2: np.ndarray
    theta_n: PolyOpFunction
    m_dim: int
    residual: float = float("nan")
    coeff_residual: float = float("nan")
    checks: dict = field(default_factory=dict)

    def rhs(self, z: complex) -> np.ndarray:
        return self.v1 @ pad(self.theta_n(z), self.m_dim) @ self.v2

    def function(self) -> PolyOpFunction:
        return product_function(self.v1, self.theta_n, self.m_dim, self.v2)

    def to_json(self) -> dict:
        return {"V1": la.matrix_to_json(self.v1), "V2": la.matrix_to_json(self.v2),
                "ThetaN": self.theta_n.to_json(), "M": self.m_dim, "residual": self.residual,
                "coeffResidual": self.coeff_residual, "checks": self.checks}


def product_function(v1, theta_n: PolyOpFunction, m_dim: int, v2) -> PolyOpFunction:
    """``V1 diag(Theta_N, I_M) V2`` coefficient by coefficient."""
    padded = theta_n.padded(m_dim)
    v1, v2 = la.as_matrix(v1), la.as_matrix(v2)
    cs = [v1 @ c @ v2 for c in padded.coeffs]
    return PolyOpFunction(cs, v2.shape[1], v1.shape[0], theta_n.exact)


def zero_function_matrix(dim_in: int, dim_out: int) -> np.ndarray:
    """A characteristic function that is identically zero between the given dims."""
    return la.zeros(dim_out, dim_in)


def _check_structured(t) -> StructuredOperator:
    if not isinstance(t, StructuredOperator):
        raise TypeError("this construction needs a StructuredOperator (pure isometry and coisometry ends)")
    check_nilpotent(t.n, t.m)
    return t


def _compare_coeffs(t: Contraction, f: PolyOpFunction) -> float:
    g = theta_coeffs(t)
    # a side that is not exact is only known up to its own pmax
    top = max(g.pmax, f.pmax)
    if not g.exact:
        top = min(top, g.pmax)
    if not f.exact:
        top = min(top, f.pmax)
    res = 0.0
    for p in range(top + 1):
        res = max(res, la.opnorm(g.coeff(p) - f.coeff(p)))
    return res


def corollary_factors(t, grid=STANDARD_GRID, tol: float = ACCEPT_TOL, strict: bool = True) -> CorollaryFactors:
    t = _check_structured(t)
    fac = factorize3(t, grid=grid, tol=tol, strict=strict)
    dc, ds = defect(fac.c), defect(fac.s)
    if dc.dim_star or ds.dim:
        raise FactorizationError("outer blocks are not a pure coisometry / pure isometry")
    zero_c = la.block_diag(zero_function_matrix(dc.dim, 0), la.eye(fac.e1_dim))
    zero_s = la.block_diag(zero_function_matrix(0, ds.dim_star), la.eye(fac.e2_dim))
    v1 = la.adj(fac.tau1_star) @ zero_c @ fac.u1
    v2 = fac.u2 @ zero_s @ fac.tau1_tilde
    cf = CorollaryFactors(v1, v2, theta_coeffs(fac.n), fac.m_dim)
    cf.checks = {"V1coisometry": la.coisometry_residual(v1), "V2isometry": la.isometry_residual(v2)}
    cf.residual = max((la.opnorm(theta_eval(t, z) - cf.rhs(z)) for z in grid), default=0.0)
    cf.coeff_residual = _compare_coeffs(t, cf.function())
    if strict:
        _accept(max(cf.residual, cf.coeff_residual), cf.checks, tol)
    return cf


# -- alternative grouping -----------------------------------------------------

@dataclass
class AltFactors:
    v1: np.ndarray
    v2: np.ndarray
    theta_n: PolyOpFunction
    mtilde_dim: int
    gamma: np.ndarray
    gamma_m1: np.ndarray
    residual: float = float("nan")
    coeff_residual: float = float("nan")
    checks: dict = field(default_factory=dict)

    def rhs(self, z: complex) -> np.ndarray:
        return self.v1 @ pad(self.theta_n(z), self.mtilde_dim) @ self.v2

    def function(self) -> PolyOpFunction:
        return product_function(self.v1, self.theta_n, self.mtilde_dim, self.v2)

    def to_json(self) -> dict:
        return {"V1tilde": la.matrix_to_json(self.v1), "V2tilde": la.matrix_to_json(self.v2),
                "Gamma": la.matrix_to_json(self.gamma), "GammaMinus1": la.matrix_to_json(self.gamma_m1),
                "Mtilde": self.mtilde_dim, "residual": self.residual,
                "coeffResidual": self.coeff_residual, "checks": self.checks}


def alt_blocks(t: StructuredOperator) -> tuple[Block2, Block2]:
    """Regroup ``t`` bottom-first: ``T_-1 = [[N, X'], [0, C]]`` then ``[[S, X_-1], [0, T_-1]]``."""
    s, n, c = t.s, t.nop, t.c
    # X' : H_-1 -> H_0 and X_-1 : H_0 + H_-1 -> H_1, read off t's couplings
    x_c = t.x.dom_window
    inner = extract_gamma(n, c, probe_block(t, x_c, 2, (1, 2)))
    col = Window.full_fin(n.space) + x_c
    outer = extract_gamma(s, inner.operator, probe_block(t, col, 1, (0, 1)))
    outer = Block2(outer.t1, outer.t2, outer.x, outer.gamma, t, outer.recon_residual)
    return inner, outer


def alt_decomposition(t, grid=STANDARD_GRID, tol: float = ACCEPT_TOL, strict: bool = True) -> AltFactors:
    t = _check_structured(t)
    inner, outer = alt_blocks(t)
    j, jm = halmos(inner.gamma), halmos(outer.gamma)
    tau, tau_s = build_tau_pair(inner, j)
    taum, taum_s = build_tau_pair(outer, jm)
    dc, ds = defect(inner.t2), defect(outer.t1)
    if dc.dim_star or ds.dim:
        raise FactorizationError("outer blocks are not a pure coisometry / pure isometry")
    k = jm.dim_star
    psi0 = la.block_diag(zero_function_matrix(dc.dim, 0), la.eye(j.dim_star))
    v1 = (la.adj(taum_s) @ la.block_diag(la.adj(tau_s), la.eye(k))
          @ la.block_diag(psi0, la.eye(k)) @ la.block_diag(j.j, la.eye(k)))
    zero_s = la.block_diag(zero_function_matrix(0, ds.dim_star), la.eye(jm.dim))
    v2 = la.block_diag(tau, la.eye(k)) @ jm.j @ zero_s @ taum
    mt = j.dim + k
    af = AltFactors(v1, v2, theta_coeffs(inner.t1), mt, inner.gamma, outer.gamma)
    af.checks = {"V1coisometry": la.coisometry_residual(v1), "V2isometry": la.isometry_residual(v2)}
    af.residual = max((la.opnorm(theta_eval(t, z) - af.rhs(z)) for z in grid), default=0.0)
    af.coeff_residual = _compare_coeffs(t, af.function())
    if strict:
        _accept(max(af.residual, af.coeff_residual), af.checks, tol)
    return af


def dim_report(t, tol: float = ACCEPT_TOL) -> dict:
    """Dimensions of ``M`` (main grouping) and ``M~`` (alternative grouping)."""
    cf = corollary_factors(t, tol=tol)
    af = alt_decomposition(t, tol=tol)
    return {"M": cf.m_dim, "Mtilde": af.mtilde_dim, "equal": cf.m_dim == af.mtilde_dim}


# -- weak converse ------------------------------------------------------------

@dataclass
class DegreeVerdict:
    degree: int | None
    bound: int
    ok: bool
    function: PolyOpFunction = field(repr=False, default=None)


def weak_converse_check(n, v1, v2, m_dim: int, m: int | None = None, tol: float = 1e-10) -> DegreeVerdict:
    """Degree of ``V1 diag(Theta_N, I_M) V2`` against the nilpotency order of ``N``."""
    nop = n if isinstance(n, Contraction) else None
    nmat = n.matrix() if nop is not None else la.as_matrix(n)
    if m is None:
        from .operators import nilpotent_order
        m = nilpotent_order(nmat)
        if m is None:
            raise ValueError("N is not nilpotent")
    if nop is None or nop.nil_order is None:
        nop = Dense(nmat, nil_order=m)
    v1, v2 = la.as_matrix(v1), la.as_matrix(v2)
    dn = defect(nop)
    if v1.shape[1] != dn.dim_star + m_dim or v2.shape[0] != dn.dim + m_dim:
        raise ValueError(f"V1 {v1.shape} / V2 {v2.shape} do not fit D_N* + M = {dn.dim_star}+{m_dim} "
                         f"and D_N + M = {dn.dim}+{m_dim}")
    if la.coisometry_residual(v1) > tol:
        raise ValueError(f"V1 is not a coisometry ({la.coisometry_residual(v1):.3e})")
    if la.isometry_residual(v2) > tol:
        raise ValueError(f"V2 is not an isometry ({la.isometry_residual(v2):.3e})")
    f = product_function(v1, theta_coeffs(nop), m_dim, v2)
    deg = poly_degree(f)
    return DegreeVerdict(deg, m, deg is not None and deg <= m, f)
