import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from defectkit import linalg as la
from defectkit.factor2 import (
    Block2,
    FactorizationError,
    NonTriangularError,
    build_tau_pair,
    extract_gamma,
    factorize2_dense,
    halmos,
    norm_identity_residual,
    verify_factor2,
)
from defectkit.models import (
    jordan_nilpotent,
    random_block2,
    random_rect_contraction,
    rng_for,
)
from defectkit.operators import Dense, FiniteRank, NotAContractionError, defect


def test_zero_diagonal_gamma_equals_x():
    x = random_rect_contraction(3, 2, rng_for(1), 0.2)
    b = extract_gamma(la.zeros(3, 3), la.zeros(2, 2), x)
    d1, d2 = defect(b.t1), defect(b.t2)
    back = d1.frame_star.vectors @ b.gamma @ la.adj(d2.frame.vectors)
    assert la.opnorm(back - x) < 1e-12
    assert np.isclose(la.opnorm(b.gamma), 0.8)


def test_zero_diagonal_rejects_big_x():
    with pytest.raises(NotAContractionError, match="Gamma"):
        extract_gamma(la.zeros(1, 1), la.zeros(1, 1), [[1.2]])


def test_jordan_pair_gamma_is_one():
    n = jordan_nilpotent(2)
    x = np.outer([0, 1], [1, 0])
    b = extract_gamma(n, n, x)
    assert b.gamma.shape == (1, 1) and np.isclose(abs(b.gamma[0, 0]), 1.0)
    big = np.block([[n, x], [np.zeros((2, 2)), n]])
    assert np.isclose(la.opnorm(big), 1.0)


def test_x_outside_range_is_rejected_with_both_diagnostics():
    n = jordan_nilpotent(2)
    with pytest.raises(NotAContractionError) as exc:
        extract_gamma(n, n, np.outer([1, 0], [1, 0]))
    msg = str(exc.value)
    assert "reconstruction residual" in msg and "||Gamma||" in msg and "direct check fails" in msg


def test_halmos_examples():
    assert np.allclose(halmos([[0.0]]).j, [[0, 1], [1, 0]])
    h = halmos([[0.6]])
    assert np.allclose(h.j, [[0.6, 0.8], [0.8, -0.6]])
    u = la.adj(np.array([[0, 1j], [1, 0]]))
    hu = halmos(la.adj(u))
    assert (hu.dim, hu.dim_star) == (0, 0)
    assert np.allclose(hu.j, u)


def test_halmos_rejects_non_contraction():
    with pytest.raises(NotAContractionError):
        halmos([[1.5]])


@given(st.integers(0, 2**32), st.integers(0, 8), st.integers(0, 8), st.floats(0.0, 0.9))
def test_halmos_unitary(seed, r, c, margin):
    g = random_rect_contraction(r, c, rng_for(seed), margin)
    assert la.unitary_residual(halmos(g).j) < 1e-9


def test_halmos_unitary_population_200():
    worst = 0.0
    for seed in range(200):
        rng = rng_for(seed)
        r, c = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        g = random_rect_contraction(r, c, rng, float(rng.choice([0.0, 0.3])))
        worst = max(worst, la.unitary_residual(halmos(g).j))
    assert worst < 1e-9


def test_tau_for_zero_gamma_is_a_permutation():
    a, c = jordan_nilpotent(2), [[0.5]]
    g = la.zeros(defect(Dense(a)).dim_star, defect(Dense(c)).dim)
    fac = verify_factor2(Block2(Dense(a), Dense(c), FiniteRank.dense(la.zeros(2, 1)), g))
    assert la.unitary_residual(fac.tau) < 1e-12
    mag = np.abs(fac.tau)
    assert np.allclose(mag * (1 - mag), 0) and np.allclose(mag.sum(axis=0), 1)
    assert fac.residual < 1e-10


def test_scalar_blocks_with_gamma_06():
    b = extract_gamma([[0.0]], [[0.0]], [[0.6]])
    fac = verify_factor2(b)
    assert fac.tau.shape == (2, 2) and fac.tau_star.shape == (2, 2)
    assert max(fac.unitarity.values()) < 1e-12
    assert fac.residual < 1e-10


def test_unitary_diagonal_gives_empty_tau():
    b = extract_gamma([[1j]], [[-1.0]], [[0.0]])
    fac = verify_factor2(b)
    assert fac.tau.shape == (0, 0) and fac.tau_star.shape == (0, 0)
    assert fac.residual == 0.0


def test_jordan_pair_random_gamma_seed3():
    n = jordan_nilpotent(2)
    g = random_rect_contraction(1, 1, rng_for(3), 0.1)
    from defectkit.factor2 import block2_from_gamma
    fac = verify_factor2(block2_from_gamma(n, n, g))
    assert fac.residual < 1e-9


def test_zero_coupling_residual():
    b = extract_gamma(jordan_nilpotent(2), [[0.4]], la.zeros(2, 1))
    assert verify_factor2(b).residual < 1e-10


def test_wrong_gamma_trips_norm_identity():
    b = extract_gamma([[0.0]], [[0.0]], [[0.6]])
    bad = Block2(b.t1, b.t2, b.x, 0.5 * b.gamma)
    assert norm_identity_residual(bad) > 1e-3
    with pytest.raises(FactorizationError, match="norm identity"):
        build_tau_pair(bad)


def test_factorize2_dense_checks_triangularity():
    with pytest.raises(NonTriangularError):
        factorize2_dense([[0, 0], [0.5, 0]], 1)
    with pytest.raises(ValueError, match="split"):
        factorize2_dense([[0, 0], [0, 0]], 3)


def test_strict_mode_raises_on_residual():
    b = extract_gamma([[0.2]], [[0.1]], [[0.3]])
    with pytest.raises(FactorizationError):
        verify_factor2(b, tol=1e-30)
    assert verify_factor2(b, tol=1e-30, strict=False).residual > 0


def test_json_bundle_fields():
    fac = verify_factor2(random_block2(2, 3, 4))
    doc = fac.to_json()
    assert {"J", "tau", "tauStar", "residual", "dims"} <= set(doc)
    d = doc["dims"]
    assert d["D_T"] == d["D_T1"] + d["D_Gamma"]
    assert d["D_T*"] == d["D_T2*"] + d["D_Gamma*"]


@given(st.integers(0, 2**32), st.integers(1, 6), st.integers(1, 6))
def test_block2_population(seed, n1, n2):
    fac = verify_factor2(random_block2(n1, n2, seed))
    d = fac.dims
    assert d["D_T"] == d["D_T1"] + d["D_Gamma"] and d["D_T*"] == d["D_T2*"] + d["D_Gamma*"]
    assert fac.residual < 1e-9 and max(fac.unitarity.values()) < 1e-9
    assert fac.norm_identity < 1e-8


@given(st.integers(0, 2**32), st.integers(1, 5), st.integers(1, 5))
def test_adjoint_arrangement_also_factors(seed, n1, n2):
    b = random_block2(n1, n2, seed)
    m = b.operator.matrix()
    a1, a2, x = m[:n1, :n1], m[n1:, n1:], m[:n1, n1:]
    # T* reordered as [[T2*, X*], [0, T1*]]
    dual = extract_gamma(la.adj(a2), la.adj(a1), la.adj(x))
    assert verify_factor2(dual).residual < 1e-9
