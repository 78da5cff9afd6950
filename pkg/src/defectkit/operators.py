"""Exact contractions on direct sums of C^n and vector-valued l^2 spaces.

A :data:`Space` is a tuple of :class:`Block`\\ s.  ``fin`` blocks are C^n,
``shift`` blocks carry the forward shift of multiplicity ``dim`` and
``coshift`` blocks its adjoint.  Vectors are finitely supported, so every
operator here acts exactly: nothing is ever truncated, and a pure isometry
stays a pure isometry.

The operators in scope (shift, nilpotent, backward shift, finite-rank
couplings) have finite-rank defects.  :func:`defect` locates a finite
:class:`Window` that carries ``I - T*T`` (resp. ``I - TT*``), forms the
compression there and takes its square root.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from . import linalg as la

FIN, SHIFT, COSHIFT = "fin", "shift", "coshift"
NIL_TOL = 1e-12


class Block(NamedTuple):
    kind: str
    dim: int


Space = tuple  # tuple[Block, ...]


def fin_space(n: int) -> Space:
    return (Block(FIN, n),)


class NotAContractionError(ValueError):
    pass


class SpaceMismatchError(ValueError):
    pass


# -- vectors ----------------------------------------------------------------

class StructuredVector:
    """Finitely supported vector of a :data:`Space`.

    ``parts[i]`` is a length-``dim`` array for a fin block and an
    ``(L, dim)`` array for shift/coshift blocks, row ``k`` holding the
    ``k``-th coordinate.  Rows past ``L`` are zero.
    """

    __slots__ = ("space", "parts")

    def __init__(self, space: Space, parts: Sequence[np.ndarray]):
        if len(parts) != len(space):
            raise SpaceMismatchError(f"{len(parts)} parts for a space of {len(space)} blocks")
        fixed = []
        for blk, p in zip(space, parts):
            p = np.asarray(p, dtype=np.complex128)
            if blk.kind == FIN:
                if p.shape != (blk.dim,):
                    raise SpaceMismatchError(f"fin block of dim {blk.dim} got shape {p.shape}")
            elif p.ndim != 2 or p.shape[1] != blk.dim:
                raise SpaceMismatchError(f"{blk.kind} block of dim {blk.dim} got shape {p.shape}")
            fixed.append(p)
        self.space = tuple(space)
        self.parts = tuple(fixed)

    @classmethod
    def zeros(cls, space: Space) -> "StructuredVector":
        return cls(space, [np.zeros(b.dim, complex) if b.kind == FIN else np.zeros((0, b.dim), complex)
                           for b in space])

    @classmethod
    def dense(cls, x) -> "StructuredVector":
        x = np.asarray(x, dtype=np.complex128).reshape(-1)
        return cls(fin_space(x.size), [x])

    @property
    def support_bound(self) -> int:
        """Largest populated shift/coshift index, -1 when there is none."""
        b = -1
        for blk, p in zip(self.space, self.parts):
            if blk.kind != FIN and p.shape[0]:
                b = max(b, p.shape[0] - 1)
        return b

    def _combine(self, other: "StructuredVector", sign: float) -> "StructuredVector":
        if other.space != self.space:
            raise SpaceMismatchError("vectors live in different spaces")
        out = []
        for blk, a, b in zip(self.space, self.parts, other.parts):
            if blk.kind == FIN:
                out.append(a + sign * b)
            else:
                n = max(a.shape[0], b.shape[0])
                c = np.zeros((n, blk.dim), complex)
                c[:a.shape[0]] += a
                c[:b.shape[0]] += sign * b
                out.append(c)
        return StructuredVector(self.space, out)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __neg__(self):
        return StructuredVector(self.space, [-p for p in self.parts])

    def __mul__(self, c):
        return StructuredVector(self.space, [c * p for p in self.parts])

    __rmul__ = __mul__

    def inner(self, other: "StructuredVector") -> complex:
        """<self, other>, conjugate-linear in ``self``."""
        if other.space != self.space:
            raise SpaceMismatchError("vectors live in different spaces")
        s = 0j
        for blk, a, b in zip(self.space, self.parts, other.parts):
            if blk.kind == FIN:
                s += np.vdot(a, b)
            else:
                n = min(a.shape[0], b.shape[0])
                s += np.vdot(a[:n], b[:n])
        return complex(s)

    def norm(self) -> float:
        return float(np.sqrt(sum(np.vdot(p, p).real for p in self.parts)))

    def split(self, k: int) -> tuple["StructuredVector", "StructuredVector"]:
        return (StructuredVector(self.space[:k], self.parts[:k]),
                StructuredVector(self.space[k:], self.parts[k:]))

    @staticmethod
    def concat(a: "StructuredVector", b: "StructuredVector") -> "StructuredVector":
        return StructuredVector(a.space + b.space, a.parts + b.parts)

    def __repr__(self):
        return f"StructuredVector(space={self.space}, support_bound={self.support_bound})"


# -- windows ----------------------------------------------------------------

@dataclass(frozen=True)
class Window:
    """A finite coordinate subspace: per block, the number of leading layers.

    A fin block has one layer (the whole of C^n); a shift/coshift block
    with ``layers[i] = L`` contributes coordinates ``0..L-1``.  Flat
    coordinates run block by block, layer-major.
    """

    space: Space
    layers: tuple

    @classmethod
    def empty(cls, space: Space) -> "Window":
        return cls(tuple(space), (0,) * len(space))

    @classmethod
    def full_fin(cls, space: Space, shift_layers: int = 0) -> "Window":
        return cls(tuple(space), tuple(1 if b.kind == FIN else shift_layers for b in space))

    @classmethod
    def of(cls, v: StructuredVector, eps: float = 0.0) -> "Window":
        layers = []
        for blk, p in zip(v.space, v.parts):
            if blk.kind == FIN:
                layers.append(1 if np.any(np.abs(p) > eps) else 0)
            else:
                rows = np.flatnonzero(np.any(np.abs(p) > eps, axis=1)) if p.size else []
                layers.append(int(rows[-1]) + 1 if len(rows) else 0)
        return cls(v.space, tuple(layers))

    def __or__(self, other: "Window") -> "Window":
        if other.space != self.space:
            raise SpaceMismatchError("windows over different spaces")
        return Window(self.space, tuple(max(a, b) for a, b in zip(self.layers, other.layers)))

    def __add__(self, other: "Window") -> "Window":
        """Direct sum of windows over concatenated spaces."""
        return Window(self.space + other.space, self.layers + other.layers)

    def grow(self, k: int = 1) -> "Window":
        return Window(self.space, tuple(l if b.kind == FIN else l + k
                                        for b, l in zip(self.space, self.layers)))

    def block_sizes(self) -> list:
        return [l * b.dim if b.kind != FIN else (b.dim if l else 0)
                for b, l in zip(self.space, self.layers)]

    @property
    def size(self) -> int:
        return sum(self.block_sizes())

    def block_slices(self) -> list:
        out, i = [], 0
        for s in self.block_sizes():
            out.append(slice(i, i + s))
            i += s
        return out

    def restrict(self, v: StructuredVector) -> np.ndarray:
        if v.space != self.space:
            raise SpaceMismatchError("vector and window live in different spaces")
        chunks = []
        for blk, l, p in zip(self.space, self.layers, v.parts):
            if blk.kind == FIN:
                if l:
                    chunks.append(p)
            else:
                q = np.zeros((l, blk.dim), complex)
                n = min(l, p.shape[0])
                q[:n] = p[:n]
                chunks.append(q.reshape(-1))
        return np.concatenate(chunks) if chunks else np.zeros(0, complex)

    def embed(self, flat) -> StructuredVector:
        flat = np.asarray(flat, dtype=np.complex128).reshape(-1)
        if flat.size != self.size:
            raise SpaceMismatchError(f"flat vector of size {flat.size} for a window of size {self.size}")
        parts = []
        for blk, l, sl in zip(self.space, self.layers, self.block_slices()):
            seg = flat[sl]
            if blk.kind == FIN:
                parts.append(seg.copy() if l else np.zeros(blk.dim, complex))
            else:
                parts.append(seg.reshape(l, blk.dim).copy())
        return StructuredVector(self.space, parts)

    def basis(self) -> list:
        e = np.eye(self.size, dtype=np.complex128)
        return [self.embed(e[:, i]) for i in range(self.size)]

    def split(self, k: int) -> tuple["Window", "Window"]:
        return (Window(self.space[:k], self.layers[:k]),
                Window(self.space[k:], self.layers[k:]))


def reembed(flat: np.ndarray, src: Window, dst: Window) -> np.ndarray:
    """Move window coordinates from ``src`` to ``dst`` (columns of a matrix allowed)."""
    flat = np.asarray(flat)
    if flat.ndim == 2:
        return np.column_stack([reembed(flat[:, i], src, dst) for i in range(flat.shape[1])]) \
            if flat.shape[1] else np.zeros((dst.size, 0), complex)
    return dst.restrict(src.embed(flat))


# -- operators --------------------------------------------------------------

class Operator:
    """Exact bounded operator between two spaces."""

    dom: Space
    cod: Space

    def apply(self, v: StructuredVector) -> StructuredVector:
        raise NotImplementedError

    def apply_adjoint(self, w: StructuredVector) -> StructuredVector:
        raise NotImplementedError

    def _check(self, v: StructuredVector, space: Space):
        if v.space != space:
            raise SpaceMismatchError(f"expected a vector of {space}, got {v.space}")


class Contraction(Operator):
    """A contraction on a single space (``dom == cod == space``)."""

    space: Space
    nil_order: int | None = None

    @property
    def dom(self):
        return self.space

    @property
    def cod(self):
        return self.space

    @property
    def is_finite(self) -> bool:
        return all(b.kind == FIN for b in self.space)

    @property
    def dim(self) -> int:
        if not self.is_finite:
            raise ValueError("infinite-dimensional space")
        return sum(b.dim for b in self.space)

    def matrix(self) -> np.ndarray:
        if not self.is_finite:
            raise ValueError("matrix() needs a finite-dimensional space")
        w = Window.full_fin(self.space)
        cols = [w.restrict(self.apply(e)) for e in w.basis()]
        return np.column_stack(cols) if cols else la.zeros(0, 0)

    def defect_window(self) -> Window:
        raise NotImplementedError

    def codefect_window(self) -> Window:
        raise NotImplementedError

    @cached_property
    def defect_data(self) -> "DefectData":
        return _compute_defect(self)


class Dense(Contraction):
    def __init__(self, matrix, nil_order: int | None = None, check: bool = True, tol: float = 1e-9):
        m = la.as_matrix(matrix)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"dense contraction must be square, got {m.shape}")
        if check and la.opnorm(m) > 1 + tol:
            raise NotAContractionError(f"norm {la.opnorm(m):.12g} exceeds 1")
        self.mat = m
        self.space = fin_space(m.shape[0])
        if nil_order is not None:
            check_nilpotent(m, nil_order)
        self.nil_order = nil_order

    def matrix(self):
        return self.mat

    def apply(self, v):
        self._check(v, self.space)
        return StructuredVector(self.space, [self.mat @ v.parts[0]])

    def apply_adjoint(self, w):
        self._check(w, self.space)
        return StructuredVector(self.space, [la.adj(self.mat) @ w.parts[0]])

    def defect_window(self):
        return Window.full_fin(self.space)

    codefect_window = defect_window

    def __repr__(self):
        return f"Dense({self.mat.shape[0]}x{self.mat.shape[0]})"


class Shift(Contraction):
    """Forward shift of multiplicity ``d``: coordinate k moves to k+1."""

    nil_order = 0

    def __init__(self, d: int):
        self.d = d
        self.space = (Block(SHIFT, d),)

    def apply(self, v):
        self._check(v, self.space)
        p = v.parts[0]
        return StructuredVector(self.space, [np.vstack([np.zeros((1, self.d), complex), p])])

    def apply_adjoint(self, w):
        self._check(w, self.space)
        return StructuredVector(self.space, [w.parts[0][1:].copy()])

    def defect_window(self):
        return Window.empty(self.space)

    def codefect_window(self):
        return Window(self.space, (1,))

    def __repr__(self):
        return f"Shift({self.d})"


class Coshift(Contraction):
    """Backward shift of multiplicity ``d``; its adjoint is the forward shift."""

    nil_order = 0

    def __init__(self, d: int):
        self.d = d
        self.space = (Block(COSHIFT, d),)

    def apply(self, v):
        self._check(v, self.space)
        return StructuredVector(self.space, [v.parts[0][1:].copy()])

    def apply_adjoint(self, w):
        self._check(w, self.space)
        p = w.parts[0]
        return StructuredVector(self.space, [np.vstack([np.zeros((1, self.d), complex), p])])

    def defect_window(self):
        return Window(self.space, (1,))

    def codefect_window(self):
        return Window.empty(self.space)

    def __repr__(self):
        return f"Coshift({self.d})"


class FiniteRank(Operator):
    """Operator ``embed_cod . mat . restrict_dom`` between two windows."""

    def __init__(self, dom_window: Window, cod_window: Window, mat):
        self.dom_window = dom_window
        self.cod_window = cod_window
        self.mat = la.as_matrix(mat, cod_window.size, dom_window.size)
        self.dom = dom_window.space
        self.cod = cod_window.space

    @classmethod
    def dense(cls, mat) -> "FiniteRank":
        m = la.as_matrix(mat)
        return cls(Window.full_fin(fin_space(m.shape[1])), Window.full_fin(fin_space(m.shape[0])), m)

    def apply(self, v):
        self._check(v, self.dom)
        return self.cod_window.embed(self.mat @ self.dom_window.restrict(v))

    def apply_adjoint(self, w):
        self._check(w, self.cod)
        return self.dom_window.embed(la.adj(self.mat) @ self.cod_window.restrict(w))

    def norm(self) -> float:
        return la.opnorm(self.mat)


class UpperBlock(Contraction):
    """``[[T1, X], [0, T2]]`` on ``T1.space + T2.space``."""

    def __init__(self, t1: Contraction, t2: Contraction, x: FiniteRank):
        if x.dom != t2.space or x.cod != t1.space:
            raise SpaceMismatchError("coupling does not map T2's space into T1's space")
        self.t1, self.t2, self.x = t1, t2, x
        self.space = t1.space + t2.space
        self.split_at = len(t1.space)
        if t1.nil_order is not None and t2.nil_order is not None:
            self.nil_order = t1.nil_order + t2.nil_order
        else:
            self.nil_order = None

    def apply(self, v):
        self._check(v, self.space)
        v1, v2 = v.split(self.split_at)
        return StructuredVector.concat(self.t1.apply(v1) + self.x.apply(v2), self.t2.apply(v2))

    def apply_adjoint(self, w):
        self._check(w, self.space)
        w1, w2 = w.split(self.split_at)
        return StructuredVector.concat(self.t1.apply_adjoint(w1),
                                       self.x.apply_adjoint(w1) + self.t2.apply_adjoint(w2))

    def defect_window(self):
        # I - T*T = [[I - T1*T1, -T1*X], [-X*T1, I - X*X - T2*T2]]
        w1 = self.t1.defect_window()
        for e in self.x.cod_window.basis():
            w1 = w1 | Window.of(self.t1.apply_adjoint(e))
        return w1 + (self.x.dom_window | self.t2.defect_window())

    def codefect_window(self):
        # I - TT* = [[I - T1T1* - XX*, -XT2*], [-T2X*, I - T2T2*]]
        w2 = self.t2.codefect_window()
        for e in self.x.dom_window.basis():
            w2 = w2 | Window.of(self.t2.apply(e))
        return (self.t1.codefect_window() | self.x.cod_window) + w2

    def __repr__(self):
        return f"UpperBlock({self.t1!r}, {self.t2!r})"


def check_nilpotent(n, m: int, tol: float = NIL_TOL) -> None:
    """Raise unless ``N^m = 0`` and ``N^(m-1) != 0`` (relative to ``max(1, ||N||)``)."""
    n = la.as_matrix(n)
    k = n.shape[0]
    if k == 0:
        if m != 0:
            raise ValueError("a 0x0 nilpotent has order 0")
        return
    if m < 1:
        raise ValueError("nilpotency order must be >= 1 on a nonzero space")
    scale = max(1.0, la.opnorm(n))
    p = np.linalg.matrix_power(n, m - 1)
    if la.opnorm(p) <= tol * scale:
        raise ValueError(f"N^{m - 1} vanishes: order is below {m}")
    if la.opnorm(p @ n) > tol * scale:
        raise ValueError(f"N^{m} = {la.opnorm(p @ n):.3e} is not zero")


def nilpotent_order(n, tol: float = NIL_TOL) -> int | None:
    n = la.as_matrix(n)
    k = n.shape[0]
    if k == 0:
        return 0
    scale = max(1.0, la.opnorm(n))
    p = la.eye(k)
    for m in range(1, k + 1):
        p = p @ n
        if la.opnorm(p) <= tol * scale:
            return m
    return None


# -- defects ----------------------------------------------------------------

def gram_defect(g, tol: float = la.RANK_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Square root and range basis of a defect Gram matrix ``G = I - A*A``.

    Rank is decided on ``G`` itself: eigenvalues at or below
    ``tol * max(1, ||G||)`` are zeroed before taking square roots, so
    rounding noise of size eps never turns into a spurious sqrt(eps) defect
    direction.
    """
    w, u = la.hermitian_eig(g)
    if w.size and w[-1] < -tol:
        raise NotAContractionError(f"I - T*T has negative eigenvalue {w[-1]:.3e}")
    cut = tol * max(1.0, float(w[0]) if w.size else 0.0)
    keep = w > cut
    s = np.where(keep, np.sqrt(np.clip(w, 0.0, None)), 0.0)
    d = (u * s) @ la.adj(u)
    return d, u[:, keep]


def matrix_defect(a, tol: float = la.RANK_TOL):
    """``(D_A, frame of D_A, D_{A*}, frame of D_{A*})`` for a rectangular contraction."""
    a = la.as_matrix(a)
    d, f = gram_defect(la.eye(a.shape[1]) - la.adj(a) @ a, tol)
    ds, fs = gram_defect(la.eye(a.shape[0]) - a @ la.adj(a), tol)
    return d, la.Frame(f, tol), ds, la.Frame(fs, tol)


class DefectData:
    """Defect operators and defect-space frames of a contraction.

    ``d`` is ``D_T`` written on ``window`` (it vanishes off it), ``frame``
    an orthonormal basis of the defect space in that window's flat
    coordinates; the ``*_star`` fields are the same for ``T*``.
    """

    def __init__(self, op: Contraction, window: Window, d, frame: la.Frame,
                 window_star: Window, d_star, frame_star: la.Frame):
        self.op = op
        self.window, self.d, self.frame = window, d, frame
        self.window_star, self.d_star, self.frame_star = window_star, d_star, frame_star

    @property
    def dim(self) -> int:
        return self.frame.dim

    @property
    def dim_star(self) -> int:
        return self.frame_star.dim

    @cached_property
    def d_pinv(self):
        return la.pinv(self.d)

    @cached_property
    def d_star_pinv(self):
        return la.pinv(self.d_star)

    def apply_d(self, v: StructuredVector) -> StructuredVector:
        return self.window.embed(self.d @ self.window.restrict(v))

    def apply_d_star(self, v: StructuredVector) -> StructuredVector:
        return self.window_star.embed(self.d_star @ self.window_star.restrict(v))

    def pinv_d(self, v: StructuredVector) -> StructuredVector:
        return self.window.embed(self.d_pinv @ self.window.restrict(v))

    def pinv_d_star(self, v: StructuredVector) -> StructuredVector:
        return self.window_star.embed(self.d_star_pinv @ self.window_star.restrict(v))

    def to_frame(self, v: StructuredVector) -> np.ndarray:
        return self.frame.coords(self.window.restrict(v))

    def to_frame_star(self, v: StructuredVector) -> np.ndarray:
        return self.frame_star.coords(self.window_star.restrict(v))

    def from_frame(self, c) -> StructuredVector:
        return self.window.embed(self.frame.embed(np.asarray(c, complex)))

    def from_frame_star(self, c) -> StructuredVector:
        return self.window_star.embed(self.frame_star.embed(np.asarray(c, complex)))

    def frame_vectors(self) -> list:
        return [self.window.embed(self.frame.vectors[:, i]) for i in range(self.dim)]

    def frame_star_vectors(self) -> list:
        return [self.window_star.embed(self.frame_star.vectors[:, i]) for i in range(self.dim_star)]

    def __repr__(self):
        return f"DefectData(dim={self.dim}, dim_star={self.dim_star}, op={self.op!r})"


def _image_matrix(vectors: list, space: Space) -> tuple[np.ndarray, Window]:
    w = Window.empty(space)
    for v in vectors:
        w = w | Window.of(v)
    cols = [w.restrict(v) for v in vectors]
    return (np.column_stack(cols) if cols else la.zeros(w.size, 0)), w


def _compute_defect(op: Contraction, tol: float = la.RANK_TOL) -> DefectData:
    if op.is_finite:
        m = op.matrix()
        w = Window.full_fin(op.space)
        n = m.shape[0]
        d, f = gram_defect(la.eye(n) - la.adj(m) @ m, tol)
        ds, fs = gram_defect(la.eye(n) - m @ la.adj(m), tol)
        return DefectData(op, w, d, la.Frame(f, tol, w), w, ds, la.Frame(fs, tol, w))

    out = []
    for win, fwd in ((op.defect_window(), op.apply), (op.codefect_window(), op.apply_adjoint)):
        a, _ = _image_matrix([fwd(e) for e in win.basis()], op.space)
        d, f = gram_defect(la.eye(win.size) - la.adj(a) @ a, tol)
        out.append((win, d, la.Frame(f, tol, win)))
    (w, d, f), (ws, ds, fs) = out
    return DefectData(op, w, d, f, ws, ds, fs)


def defect(op: Contraction) -> DefectData:
    """Defect data of ``op`` (cached on the operator, so frames are stable)."""
    return op.defect_data


def window_defect_residual(op: Contraction, extra: int = 2) -> float:
    """How far ``I - T*T`` and ``I - TT*`` leak outside their declared windows.

    Probes every basis vector of the grown windows that is not in the
    declared window; the result should be rounding-level.
    """
    worst = 0.0
    for win, fwd, bwd in ((op.defect_window(), op.apply, op.apply_adjoint),
                          (op.codefect_window(), op.apply_adjoint, op.apply)):
        big = (win | Window.full_fin(op.space)).grow(extra)
        for e in big.basis():
            if np.any(win.restrict(e)):
                continue
            r = e - bwd(fwd(e))
            worst = max(worst, r.norm())
    return worst


# -- Gamma parametrisation of triangular contractions -------------------------

def coupling(t1: Contraction, t2: Contraction, gamma) -> FiniteRank:
    """``X = D_{T1*} Gamma D_{T2}`` with Gamma in defect-frame coordinates."""
    d1, d2 = defect(t1), defect(t2)
    g = la.as_matrix(gamma)
    if g.shape != (d1.dim_star, d2.dim):
        raise ValueError(f"Gamma has shape {g.shape}, defect frames need {(d1.dim_star, d2.dim)}")
    mat = d1.d_star @ d1.frame_star.vectors @ g @ la.adj(d2.frame.vectors) @ d2.d
    return FiniteRank(d2.window, d1.window_star, mat)


def probe_block(op: Operator, col_window: Window, col_offset: int, rows: tuple) -> FiniteRank:
    """Finite-rank block of ``op`` read off by applying it to a window's basis.

    ``col_window`` covers ``op.dom``'s blocks from ``col_offset`` on; the
    output keeps blocks ``rows[0]:rows[1]``.  Valid only when that block of
    ``op`` vanishes off ``col_window``.
    """
    lo, hi = rows
    pre = StructuredVector.zeros(op.dom[:col_offset]).parts
    post = StructuredVector.zeros(op.dom[col_offset + len(col_window.space):]).parts
    imgs = []
    for e in col_window.basis():
        y = op.apply(StructuredVector(op.dom, pre + e.parts + post))
        imgs.append(StructuredVector(op.cod[lo:hi], y.parts[lo:hi]))
    mat, rw = _image_matrix(imgs, op.cod[lo:hi])
    return FiniteRank(col_window, rw, mat)


# -- the structured family ----------------------------------------------------

@dataclass(frozen=True)
class StructuredSpace:
    d1: int
    n0: int
    d3: int

    def __post_init__(self):
        if min(self.d1, self.n0, self.d3) < 0 or self.d1 + self.n0 + self.d3 < 1:
            raise ValueError(f"invalid structured space {self}")

    @property
    def blocks(self) -> Space:
        return (Block(SHIFT, self.d1), Block(FIN, self.n0), Block(COSHIFT, self.d3))


class StructuredOperator(UpperBlock):
    """``T = [[S, *, *], [0, N, *], [0, 0, C]]`` built from nested couplings.

    ``S`` is the forward shift of multiplicity ``d1``, ``C`` the backward
    shift of multiplicity ``d3`` and ``N`` a nilpotent contraction of order
    ``m``.  The couplings are ``T1 = [[S, X], [0, N]]`` with
    ``X = D_{S*} Gamma D_N`` and ``T = [[T1, X1], [0, C]]`` with
    ``X1 = D_{T1*} Gamma1 D_C``.
    """

    def __init__(self, space: StructuredSpace, n, gamma, gamma1, m: int, tol: float = 1e-9):
        n = la.as_matrix(n, space.n0, space.n0)
        s, nop, c = Shift(space.d1), Dense(n, nil_order=m, tol=tol), Coshift(space.d3)
        gamma = _checked_contraction(gamma, "Gamma", tol)
        x = coupling(s, nop, gamma)
        t1 = UpperBlock(s, nop, x)
        gamma1 = _checked_contraction(gamma1, "Gamma1", tol)
        x1 = coupling(t1, c, gamma1)
        super().__init__(t1, c, x1)
        self.structure = space
        self.n = n
        self.gamma = gamma
        self.gamma1 = gamma1
        self.m = m
        self.nil_order = m

    @property
    def s(self) -> Shift:
        return self.t1.t1

    @property
    def nop(self) -> Dense:
        return self.t1.t2

    @property
    def c(self) -> Coshift:
        return self.t2

    def to_json(self) -> dict:
        return {"d1": self.structure.d1, "n0": self.structure.n0, "d3": self.structure.d3,
                "m": self.m, "N": la.matrix_to_json(self.n),
                "Gamma": la.matrix_to_json(self.gamma), "Gamma1": la.matrix_to_json(self.gamma1)}

    @classmethod
    def from_json(cls, doc: dict) -> "StructuredOperator":
        try:
            space = StructuredSpace(int(doc["d1"]), int(doc["n0"]), int(doc["d3"]))
            return cls(space, la.matrix_from_json(doc["N"]), la.matrix_from_json(doc["Gamma"]),
                       la.matrix_from_json(doc["Gamma1"]), int(doc["m"]))
        except KeyError as exc:
            raise ValueError(f"structured operator document lacks {exc}") from None

    def __repr__(self):
        st = self.structure
        return f"StructuredOperator(d1={st.d1}, n0={st.n0}, d3={st.d3}, m={self.m})"


def _checked_contraction(g, name: str, tol: float) -> np.ndarray:
    g = la.as_matrix(g)
    if la.opnorm(g) > 1 + tol:
        raise NotAContractionError(f"{name} has norm {la.opnorm(g):.12g} > 1")
    return la.clamp_contraction(g, tol)


def assemble_structured(space: StructuredSpace, n, gamma, gamma1, m: int) -> StructuredOperator:
    return StructuredOperator(space, n, gamma, gamma1, m)


def structured_shapes(space: StructuredSpace, n, m: int) -> tuple[tuple, "callable"]:
    """Shape of Gamma, and a function giving Gamma1's shape once Gamma is known."""
    s, nop, c = Shift(space.d1), Dense(n, nil_order=m), Coshift(space.d3)
    gshape = (defect(s).dim_star, defect(nop).dim)

    def gamma1_shape(gamma):
        t1 = UpperBlock(s, nop, coupling(s, nop, gamma))
        return (defect(t1).dim_star, defect(c).dim)

    return gshape, gamma1_shape


# -- module-level conveniences ------------------------------------------------

def as_operator(t) -> Contraction:
    if isinstance(t, Contraction):
        return t
    return Dense(t)


def apply(t, v):
    """``T v``; plain arrays are accepted for dense operators."""
    op = as_operator(t)
    if isinstance(v, StructuredVector):
        return op.apply(v)
    return op.apply(StructuredVector(op.space, [np.asarray(v, complex)])).parts[0]


def apply_adjoint(t, v):
    op = as_operator(t)
    if isinstance(v, StructuredVector):
        return op.apply_adjoint(v)
    return op.apply_adjoint(StructuredVector(op.space, [np.asarray(v, complex)])).parts[0]


def is_contraction(t, tol: float = 1e-9) -> bool:
    op = as_operator(t)
    if op.is_finite:
        return la.opnorm(op.matrix()) <= 1 + tol
    try:
        _compute_defect(op)
    except NotAContractionError:
        return False
    return True


def random_vector(space: Space, rng: np.random.Generator, layers: int = 3) -> StructuredVector:
    parts = []
    for b in space:
        shape = (b.dim,) if b.kind == FIN else (layers, b.dim)
        parts.append(rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return StructuredVector(space, parts)
