"""Dense complex linear algebra primitives.

Everything here works on plain ``numpy`` complex arrays.  Empty shapes
(0 x k, k x 0) are legal everywhere: they are how zero-dimensional defect
spaces are carried through products and direct sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np

RANK_TOL = 1e-10
PHASE_TOL = 1e-8


class NotHermitianError(ValueError):
    pass


class NotPSDError(ValueError):
    pass


def as_matrix(a, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Coerce to a 2-D complex128 array, checking finiteness and shape."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got array of ndim {m.ndim}")
    if rows is not None and m.shape[0] != rows:
        raise ValueError(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise ValueError(f"expected {cols} cols, got {m.shape[1]}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def adj(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def opnorm(a) -> float:
    """Spectral norm; 0.0 for empty matrices."""
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    if a.ndim == 1:
        return float(np.linalg.norm(a))
    return float(np.linalg.norm(a, 2))


def eye(n: int) -> np.ndarray:
    return np.eye(n, dtype=np.complex128)


def zeros(r: int, c: int) -> np.ndarray:
    return np.zeros((r, c), dtype=np.complex128)


def block_diag(*blocks) -> np.ndarray:
    """Direct sum of matrices, empty blocks allowed."""
    mats = [as_matrix(b) if np.asarray(b).ndim == 2 else as_matrix(np.asarray(b).reshape(0, 0))
            for b in blocks]
    r = sum(m.shape[0] for m in mats)
    c = sum(m.shape[1] for m in mats)
    out = zeros(r, c)
    i = j = 0
    for m in mats:
        out[i:i + m.shape[0], j:j + m.shape[1]] = m
        i += m.shape[0]
        j += m.shape[1]
    return out


def fix_phases(u: np.ndarray) -> np.ndarray:
    """Rotate each column so its first entry with modulus > PHASE_TOL is real positive."""
    u = u.copy()
    for k in range(u.shape[1]):
        col = u[:, k]
        idx = np.flatnonzero(np.abs(col) > PHASE_TOL)
        if idx.size:
            c = col[idx[0]]
            u[:, k] = col * (abs(c) / c)
    return u


def hermitian_eig(a) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix, eigenvalues descending.

    Eigenvector phases are pinned by :func:`fix_phases` so the result is
    reproducible for a given input.
    """
    a = as_matrix(a)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"hermitian_eig needs a square matrix, got {a.shape}")
    if n == 0:
        return np.zeros(0), zeros(0, 0)
    scale = opnorm(a)
    defect = opnorm(a - adj(a))
    if defect > 1e-12 * max(scale, 1e-300) and defect > 0:
        raise NotHermitianError(f"matrix is not Hermitian: ||A - A*|| = {defect:.3e} (||A|| = {scale:.3e})")
    w, u = np.linalg.eigh(0.5 * (a + adj(a)))
    w = w[::-1].copy()
    u = fix_phases(u[:, ::-1])
    return w, u


def psd_sqrt(a, floor: float = 1e-10) -> np.ndarray:
    """Positive square root of a PSD matrix.

    Eigenvalues in [-floor, 0) are clamped to zero; anything more negative
    raises :class:`NotPSDError`.
    """
    w, u = hermitian_eig(a)
    if w.size and w[-1] < -floor:
        raise NotPSDError(f"matrix is not PSD: eigenvalue {w[-1]:.3e}")
    s = np.sqrt(np.clip(w, 0.0, None))
    return (u * s) @ adj(u)


def svd(a) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full SVD ``a = U diag(s) V*`` with descending singular values.

    Returns ``(U, s, V)`` where ``U`` is rows x rows and ``V`` is cols x cols.
    """
    a = as_matrix(a)
    r, c = a.shape
    if a.size == 0:
        return eye(r), np.zeros(0), eye(c)
    u, s, vh = np.linalg.svd(a)
    return u, s, adj(vh)


def _cutoff(s: np.ndarray, tol: float) -> float:
    return tol * s[0] if s.size else 0.0


def pinv(a, tol: float = RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse with a relative singular value cutoff."""
    a = as_matrix(a)
    u, s, v = svd(a)
    k = int(np.sum(s > _cutoff(s, tol))) if s.size else 0
    return (v[:, :k] / s[:k]) @ adj(u[:, :k])


@dataclass(frozen=True)
class Frame:
    """Orthonormal basis of a finite-dimensional subspace.

    ``vectors`` holds the basis as columns.  ``layout`` is ``None`` for plain
    C^n, otherwise the :class:`~defectkit.operators.Window` whose flat
    coordinates the columns are written in.
    """

    vectors: np.ndarray
    tol: float = RANK_TOL
    layout: Any = field(default=None, compare=False)

    def __post_init__(self):
        v = as_matrix(self.vectors)
        if v.shape[1] > v.shape[0]:
            raise ValueError("frame has more vectors than the ambient dimension")
        object.__setattr__(self, "vectors", v)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def ambient(self) -> int:
        return self.vectors.shape[0]

    def gram_residual(self) -> float:
        return opnorm(adj(self.vectors) @ self.vectors - eye(self.dim))

    def coords(self, x: np.ndarray) -> np.ndarray:
        return adj(self.vectors) @ x

    def embed(self, c: np.ndarray) -> np.ndarray:
        return self.vectors @ c

    @classmethod
    def empty(cls, ambient: int, layout=None) -> "Frame":
        return cls(zeros(ambient, 0), layout=layout)


def range_frame(a, tol: float = RANK_TOL, layout=None) -> Frame:
    a = as_matrix(a)
    u, s, _ = svd(a)
    k = int(np.sum(s > _cutoff(s, tol))) if s.size else 0
    return Frame(fix_phases(u[:, :k]), tol, layout)


def kernel_frame(a, tol: float = RANK_TOL, layout=None) -> Frame:
    a = as_matrix(a)
    _, s, v = svd(a)
    k = int(np.sum(s > _cutoff(s, tol))) if s.size else 0
    return Frame(fix_phases(v[:, k:]), tol, layout)


class Classification(NamedTuple):
    contraction: bool
    isometry: bool
    coisometry: bool
    unitary: bool


def isometry_residual(a) -> float:
    a = as_matrix(a)
    return opnorm(adj(a) @ a - eye(a.shape[1]))


def coisometry_residual(a) -> float:
    a = as_matrix(a)
    return opnorm(a @ adj(a) - eye(a.shape[0]))


def unitary_residual(a) -> float:
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        return float("inf")
    return max(isometry_residual(a), coisometry_residual(a))


def classify(a, tol: float = 1e-9) -> Classification:
    a = as_matrix(a)
    contraction = opnorm(a) <= 1.0 + tol
    iso = isometry_residual(a) <= tol
    coiso = coisometry_residual(a) <= tol
    return Classification(contraction, iso, coiso, iso and coiso)


def clamp_contraction(a, tol: float = 1e-9) -> np.ndarray:
    """Pull singular values in (1, 1 + tol] back to exactly 1."""
    a = as_matrix(a)
    u, s, v = svd(a)
    if not s.size or s[0] <= 1.0:
        return a
    if s[0] > 1.0 + tol:
        raise ValueError(f"not a contraction: norm {s[0]:.12g}")
    k = s.size
    s = np.minimum(s, 1.0)
    return (u[:, :k] * s) @ adj(v[:, :k])


# -- JSON wire format -------------------------------------------------------

def matrix_to_json(a) -> dict:
    a = as_matrix(a)
    return {
        "rows": int(a.shape[0]),
        "cols": int(a.shape[1]),
        "entries": [[float(x.real), float(x.imag)] for x in a.reshape(-1)],
    }


def matrix_from_json(doc: dict) -> np.ndarray:
    try:
        r, c = int(doc["rows"]), int(doc["cols"])
        entries = doc["entries"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed matrix document: {exc}") from None
    if r < 0 or c < 0 or len(entries) != r * c:
        raise ValueError(f"matrix document has {len(entries)} entries for shape {r}x{c}")
    vals = np.array([complex(float(re), float(im)) for re, im in entries], dtype=np.complex128)
    return as_matrix(vals.reshape(r, c))
