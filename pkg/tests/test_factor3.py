import numpy as np
import pytest

from defectkit import linalg as la
from defectkit.charfun import poly_degree, theta_coeffs, theta_eval
from defectkit.factor2 import FactorizationError, NonTriangularError, extract_gamma, verify_factor2
from defectkit.factor3 import (
    alt_decomposition,
    corollary_factors,
    dim_report,
    factorize3,
    weak_converse_check,
)
from defectkit.models import jordan_nilpotent, random_block3, random_structured
from defectkit.operators import Dense, StructuredOperator, StructuredSpace, defect, structured_shapes


def decoupled(d1=1, n0=1, d3=1, n=None, m=1):
    space = StructuredSpace(d1, n0, d3)
    n = la.zeros(n0, n0) if n is None else n
    gshape, g1shape = structured_shapes(space, n, m)
    g = la.zeros(*gshape)
    return StructuredOperator(space, n, g, la.zeros(*g1shape(g)), m)


# -- factorize3 ---------------------------------------------------------------

def test_zero_couplings_three_scalars():
    fac = factorize3(la.zeros(3, 3), split=(1, 1, 1))
    assert fac.residual < 1e-10
    assert fac.m_dim == 2
    assert fac.gamma.shape == (1, 1) and fac.gamma1.shape == (2, 1)


def test_block3_seed5_factors():
    fac = factorize3(random_block3((2, 2, 2), 5), split=(2, 2, 2))
    assert fac.residual < 1e-9
    assert fac.unitarity["U1"] < 1e-9 and fac.unitarity["U2"] < 1e-9


def test_empty_middle_matches_two_block():
    t = random_block3((2, 0, 2), 8)
    fac = factorize3(t, split=(2, 0, 2))
    two = verify_factor2(extract_gamma(t[:2, :2], t[2:, 2:], t[:2, 2:]))
    assert abs(fac.residual - two.residual) < 1e-12


def test_dims_follow_gamma_defects():
    fac = factorize3(random_block3((2, 3, 1), 21), split=(2, 3, 1))

    def rank_of(g):
        g = la.as_matrix(g)
        return (la.range_frame(la.eye(g.shape[1]) - la.adj(g) @ g).dim,
                la.range_frame(la.eye(g.shape[0]) - g @ la.adj(g)).dim)

    dg, dgs = rank_of(fac.gamma)
    d1, d1s = rank_of(fac.gamma1)
    assert fac.e1_dim == d1s
    assert fac.m_dim == dgs + d1
    assert fac.e2_dim == dg + d1


def test_lower_triangle_is_rejected():
    t = la.zeros(3, 3)
    t[2, 0] = 0.5
    with pytest.raises(NonTriangularError):
        factorize3(t, split=(1, 1, 1))


def test_dense_needs_split():
    with pytest.raises(ValueError, match="split"):
        factorize3(la.zeros(3, 3))


def test_strict_mode_can_be_relaxed():
    t = random_block3((1, 2, 1), 4)
    with pytest.raises(FactorizationError):
        factorize3(t, split=(1, 2, 1), tol=1e-30)
    assert factorize3(t, split=(1, 2, 1), tol=1e-30, strict=False).residual < 1e-9


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("dims", [(1, 1, 1), (2, 1, 3), (3, 3, 3), (1, 0, 2), (0, 2, 1)])
def test_block3_population(seed, dims):
    fac = factorize3(random_block3(dims, seed), split=dims)
    assert fac.residual < 1e-9 and max(fac.unitarity.values()) < 1e-9


# -- pure ends ----------------------------------------------------------------

def test_corollary_decoupled_scalar_middle():
    t = decoupled()
    cf = corollary_factors(t)
    assert cf.m_dim == 2
    assert poly_degree(theta_coeffs(t)) == 1
    assert max(cf.checks.values()) < 1e-10 and cf.residual < 1e-10


def test_corollary_seed13_jordan():
    t = random_structured(1, 2, 1, 13, jordan=True)
    cf = corollary_factors(t)
    assert cf.residual < 1e-9 and cf.coeff_residual < 1e-9
    assert poly_degree(theta_coeffs(t)) == 2


def test_corollary_without_coshift():
    t = random_structured(1, 2, 0, 3, jordan=True)
    cf = corollary_factors(t)
    fac = factorize3(t)
    assert fac.gamma1.shape[1] == 0
    assert cf.m_dim == fac.j.dim_star
    assert cf.residual < 1e-9


def test_corollary_needs_structured_input():
    with pytest.raises(TypeError):
        corollary_factors(Dense(la.zeros(2, 2)))


def test_corollary_product_function_matches_theta():
    t = random_structured(2, 3, 1, 6)
    cf = corollary_factors(t)
    f, g = cf.function(), theta_coeffs(t)
    for z in (0.2, 0.7j):
        assert la.opnorm(f(z) - g(z)) < 1e-9


# -- alternative grouping -----------------------------------------------------

def test_alt_decoupled_agrees_with_main():
    t = decoupled()
    af, cf = alt_decomposition(t), corollary_factors(t)
    assert af.residual < 1e-10 and cf.residual < 1e-10
    rep = dim_report(t)
    assert rep["M"] == 2 and rep["equal"] == (rep["M"] == rep["Mtilde"])


def test_alt_seed13():
    t = random_structured(1, 2, 1, 13, jordan=True)
    af = alt_decomposition(t)
    assert af.residual < 1e-9 and max(af.checks.values()) < 1e-9
    assert af.mtilde_dim >= 0


def test_alt_empty_middle():
    t = random_structured(1, 0, 1, 2)
    af = alt_decomposition(t)
    assert af.theta_n.dim_in == 0 and af.theta_n.dim_out == 0
    assert af.residual < 1e-9


def test_dim_report_sweep_shape_121():
    table = [dim_report(random_structured(1, 2, 1, s)) for s in range(1, 51)]
    assert len(table) == 50
    assert all(isinstance(r["M"], int) and isinstance(r["Mtilde"], int) for r in table)


def test_dim_report_empty_middle():
    rep = dim_report(random_structured(2, 0, 1, 4))
    assert set(rep) == {"M", "Mtilde", "equal"}


@pytest.mark.parametrize("seed", range(8))
def test_alt_and_main_give_same_function(seed):
    t = random_structured(1 + seed % 2, 1 + seed % 3, 2 - seed % 2, seed)
    af, cf = alt_decomposition(t), corollary_factors(t)
    for z in (0.3, -0.6j, 0.9):
        assert la.opnorm(af.rhs(z) - cf.rhs(z)) < 1e-9


# -- weak converse ------------------------------------------------------------

@pytest.mark.parametrize("n0", [1, 2, 3])
def test_weak_converse_on_jordan_family(n0):
    t = random_structured(1, n0, 1, 40 + n0, jordan=True)
    cf = corollary_factors(t)
    v = weak_converse_check(t.nop, cf.v1, cf.v2, cf.m_dim)
    assert v.ok and v.degree == n0 == v.bound


def test_weak_converse_scalar_zero():
    v = weak_converse_check([[0.0]], la.eye(1), la.eye(1), 0)
    assert v.degree == 1 and v.ok


def test_weak_converse_shape_and_isometry_errors():
    with pytest.raises(ValueError, match="do not fit"):
        weak_converse_check([[0.0]], la.eye(2), la.eye(1), 0)
    with pytest.raises(ValueError, match="coisometry"):
        weak_converse_check([[0.0]], [[0.5]], la.eye(1), 0)
    with pytest.raises(ValueError, match="not nilpotent"):
        weak_converse_check([[0.5]], la.eye(1), la.eye(1), 0)


def test_bookkeeping_dims_cover_defects():
    t = random_structured(2, 2, 2, 9)
    cf = corollary_factors(t)
    dt, dn = defect(t), defect(t.nop)
    assert cf.v1.shape == (dt.dim_star, dn.dim_star + cf.m_dim)
    assert cf.v2.shape == (dn.dim + cf.m_dim, dt.dim)


def test_theta_at_zero_matches_v_factors():
    t = random_structured(1, 2, 1, 13, jordan=True)
    cf = corollary_factors(t)
    assert np.allclose(cf.rhs(0.0), theta_eval(t, 0.0), atol=1e-10)
