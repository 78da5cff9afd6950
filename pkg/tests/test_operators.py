import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from defectkit import linalg as la
from defectkit.charfun import theta_coeffs, theta_eval
from defectkit.models import jordan_nilpotent, random_contraction, random_structured, rng_for
from defectkit.operators import (
    COSHIFT,
    SHIFT,
    Block,
    Coshift,
    Dense,
    NotAContractionError,
    Shift,
    SpaceMismatchError,
    StructuredOperator,
    StructuredSpace,
    StructuredVector,
    Window,
    apply,
    apply_adjoint,
    check_nilpotent,
    defect,
    is_contraction,
    nilpotent_order,
    random_vector,
    structured_shapes,
    window_defect_residual,
)


def zero_structured(d1=1, n0=1, d3=1, n=None, m=1):
    space = StructuredSpace(d1, n0, d3)
    n = la.zeros(n0, n0) if n is None else n
    gshape, g1shape = structured_shapes(space, n, m)
    g = la.zeros(*gshape)
    return StructuredOperator(space, n, g, la.zeros(*g1shape(g)), m)


def unit(space, block, index=None, coord=0):
    v = StructuredVector.zeros(space)
    parts = list(v.parts)
    blk = space[block]
    if blk.kind == "fin":
        p = np.zeros(blk.dim, complex)
        p[coord] = 1
    else:
        p = np.zeros((index + 1, blk.dim), complex)
        p[index, coord] = 1
    parts[block] = p
    return StructuredVector(space, parts)


# -- apply --------------------------------------------------------------------

def test_dense_jordan_apply():
    assert np.allclose(apply(jordan_nilpotent(2), [0, 1]), [1, 0])
    assert np.allclose(apply_adjoint(jordan_nilpotent(2), [1, 0]), [0, 1])


def test_shift_moves_index_up():
    s = Shift(1)
    y = s.apply(unit(s.space, 0, 2))
    assert y.support_bound == 3 and y.parts[0][3, 0] == 1 and y.norm() == 1


def test_coshift_adjoint_moves_index_up():
    c = Coshift(1)
    y = c.apply_adjoint(unit(c.space, 0, 4))
    assert y.parts[0][5, 0] == 1
    assert c.apply(unit(c.space, 0, 0)).norm() == 0


def test_space_mismatch_is_rejected():
    with pytest.raises(SpaceMismatchError):
        Shift(1).apply(StructuredVector.dense([1.0]))
    with pytest.raises(SpaceMismatchError):
        StructuredVector((Block(SHIFT, 2),), [np.zeros((1, 3))])


def test_vector_arithmetic_pads_supports():
    sp = (Block(SHIFT, 1), Block(COSHIFT, 1))
    a = unit(sp, 0, 3)
    b = unit(sp, 1, 1)
    c = a + 2 * b
    assert c.support_bound == 3
    assert np.isclose(c.norm() ** 2, 5.0)
    assert np.isclose(c.inner(a), 1.0)
    assert (c - c).norm() == 0


def test_window_restrict_embed_round_trip():
    sp = StructuredSpace(2, 1, 1).blocks
    w = Window(sp, (2, 1, 3))
    assert w.size == 2 * 2 + 1 + 3
    flat = np.arange(w.size, dtype=complex)
    assert np.array_equal(w.restrict(w.embed(flat)), flat)
    assert Window.of(w.embed(flat)).layers == (2, 1, 3)


@given(st.integers(0, 2**32), st.integers(1, 2), st.integers(0, 3), st.integers(0, 2))
def test_apply_and_adjoint_are_exact_adjoints(seed, d1, n0, d3):
    t = random_structured(d1, n0, d3, seed)
    rng = rng_for(seed + 1)
    v, w = random_vector(t.space, rng, 4), random_vector(t.space, rng, 5)
    lhs = t.apply(v).inner(w)
    rhs = v.inner(t.apply_adjoint(w))
    assert abs(lhs - rhs) < 1e-12 * (1 + v.norm() * w.norm())


def test_adjoint_grows_coshift_support_by_one():
    t = random_structured(1, 2, 2, 3)
    v = random_vector(t.space, rng_for(0), 3)
    before = v.parts[2].shape[0]
    after = Window.of(t.apply_adjoint(v)).layers[2]
    assert after <= before + 1


# -- defect -------------------------------------------------------------------

def test_unitary_has_empty_frames():
    d = defect(Dense([[0, 1], [1, 0]]))
    assert (d.dim, d.dim_star) == (0, 0)


def test_jordan_defect_frames():
    d = defect(Dense(jordan_nilpotent(2)))
    assert (d.dim, d.dim_star) == (1, 1)
    assert np.allclose(d.frame.vectors[:, 0], [1, 0])
    assert np.allclose(d.frame_star.vectors[:, 0], [0, 1])


def test_structured_zero_couplings_defect_dims():
    t = zero_structured()
    d = defect(t)
    assert (d.dim, d.dim_star) == (2, 2)
    assert window_defect_residual(t) == 0.0


def test_not_a_contraction():
    with pytest.raises(NotAContractionError):
        Dense([[1.5]])
    with pytest.raises(NotAContractionError, match="Gamma"):
        StructuredOperator(StructuredSpace(1, 1, 1), la.zeros(1, 1), [[2.0]], la.zeros(1, 1), 1)


def test_nilpotency_is_checked():
    check_nilpotent(jordan_nilpotent(3), 3)
    with pytest.raises(ValueError, match="not zero"):
        check_nilpotent(jordan_nilpotent(3), 2)
    with pytest.raises(ValueError, match="order is below"):
        check_nilpotent(jordan_nilpotent(3), 4)
    assert nilpotent_order(jordan_nilpotent(4, 0.5)) == 4
    assert nilpotent_order([[0.5]]) is None


def test_gamma_shape_is_checked():
    with pytest.raises(ValueError, match="shape"):
        StructuredOperator(StructuredSpace(1, 1, 1), la.zeros(1, 1), la.zeros(2, 1), la.zeros(1, 1), 1)


@pytest.mark.parametrize("seed", range(6))
def test_intertwining_dense(seed):
    t = Dense(random_contraction(5, seed, 0.05))
    d = defect(t)
    m = t.matrix()
    assert la.opnorm(m @ d.d - d.d_star @ m) < 1e-9


@pytest.mark.parametrize("shape", [(1, 1, 1), (2, 2, 1), (1, 3, 2), (2, 0, 1), (1, 2, 0)])
def test_intertwining_structured(shape):
    t = random_structured(*shape, seed=sum(shape))
    d = defect(t)
    for f in d.frame_vectors():
        lhs = t.apply(d.apply_d(f))
        rhs = d.apply_d_star(t.apply(f))
        assert (lhs - rhs).norm() < 1e-9


@pytest.mark.parametrize("shape", [(1, 1, 1), (2, 2, 1), (1, 3, 2), (2, 0, 1)])
def test_structured_defect_rank_and_support(shape):
    t = random_structured(*shape, seed=7)
    d = defect(t)
    # rank of I - T*T on a much larger window agrees with the frame dimension
    big = (d.window | Window.full_fin(t.space)).grow(3)
    cols = [big.restrict(e - t.apply_adjoint(t.apply(e))) for e in big.basis()]
    g = np.column_stack(cols)
    assert la.range_frame(g).dim == d.dim
    bound = max(t.x.dom_window.layers + t.t1.x.dom_window.layers)
    assert all(v.support_bound <= bound + 1 for v in d.frame_vectors())
    assert window_defect_residual(t) < 1e-12


def test_assembly_zero_couplings_is_direct_sum():
    n = jordan_nilpotent(2)
    t = zero_structured(1, 2, 1, n, 2)
    v = random_vector(t.space, rng_for(1))
    y = t.apply(v)
    assert np.allclose(y.parts[1], n @ v.parts[1])
    assert np.allclose(y.parts[0][1:], v.parts[0])
    assert np.allclose(y.parts[2], v.parts[2][1:])
    # Theta of a direct sum is the direct sum of the pieces
    th = theta_coeffs(t)
    assert th.exact and th.pmax >= 3
    # Theta_S and Theta_C are zero maps, Theta_N(z) = z^2
    for z in (0.3, 0.5j):
        _, sv, _ = la.svd(theta_eval(t, z))
        assert np.allclose(sv, [abs(z) ** 2, 0.0])


def test_assembly_degenerate_middle():
    t = random_structured(1, 0, 1, 2)
    assert t.n.shape == (0, 0) and t.m == 0
    assert is_contraction(t)


def test_assembly_seed11_is_contraction():
    t = random_structured(1, 2, 1, 11, jordan=True)
    assert is_contraction(t)
    d = defect(t)
    assert np.all(np.linalg.eigvalsh(la.eye(d.window.size) - d.d @ d.d) > -1e-12)


def test_structured_json_round_trip():
    t = random_structured(2, 2, 1, 5)
    u = StructuredOperator.from_json(t.to_json())
    for a, b in ((t.n, u.n), (t.gamma, u.gamma), (t.gamma1, u.gamma1)):
        assert a.tobytes() == b.tobytes()
    assert u.m == t.m


def test_structured_space_needs_some_dimension():
    with pytest.raises(ValueError):
        StructuredSpace(0, 0, 0)
