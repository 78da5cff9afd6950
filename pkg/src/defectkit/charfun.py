"""Characteristic functions of contractions.

``Theta_T(z) = [-T + z D_{T*} (I - z T*)^{-1} D_T]`` restricted to the defect
space of ``T``, written as a matrix from the frame of ``D_T`` to the frame of
``D_{T*}`` (see :mod:`defectkit.operators`).  Finite operators are evaluated
through the resolvent; operators on shift spaces through their Taylor
series, which terminates when the nilpotent part does.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import linalg as la
from .operators import Contraction, as_operator, defect

DEGREE_TOL = 1e-9
TAIL_TOL = 1e-10
DENSE_PMAX_FACTOR = 2
STRUCTURED_PMAX_MARGIN = 5
FALLBACK_PMAX = 40


def z_grid(radii=(0.3, 0.6, 0.9), n_angles: int = 12) -> np.ndarray:
    """Default evaluation points: each radius times ``n_angles`` equispaced unit phases."""
    ang = 2 * np.pi * np.arange(n_angles) / n_angles
    return np.array([r * np.exp(1j * a) for r in radii for a in ang])


STANDARD_GRID = z_grid()


@dataclass
class PolyOpFunction:
    """``z -> sum_p coeffs[p] z^p`` between two finite-dimensional frames.

    ``exact`` records that coefficients past the list are known to vanish;
    otherwise the list is a truncation.
    """

    coeffs: list
    dim_in: int
    dim_out: int
    exact: bool = False
    source: Any = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        cs = [la.as_matrix(c) if np.asarray(c).size else la.zeros(self.dim_out, self.dim_in)
              for c in self.coeffs]
        for c in cs:
            if c.shape != (self.dim_out, self.dim_in):
                raise ValueError(f"coefficient of shape {c.shape}, expected {(self.dim_out, self.dim_in)}")
        self.coeffs = cs

    @property
    def pmax(self) -> int:
        return len(self.coeffs) - 1

    def coeff(self, p: int) -> np.ndarray:
        if p < len(self.coeffs):
            return self.coeffs[p]
        if self.exact:
            return la.zeros(self.dim_out, self.dim_in)
        raise IndexError(f"coefficient {p} was not computed (pmax={self.pmax})")

    def __call__(self, z: complex) -> np.ndarray:
        out = la.zeros(self.dim_out, self.dim_in)
        for c in reversed(self.coeffs):
            out = out * z + c
        return out

    def padded(self, k: int) -> "PolyOpFunction":
        """``diag(f, I_k)`` as a function."""
        cs = [la.block_diag(c, la.eye(k) if p == 0 else la.zeros(k, k))
              for p, c in enumerate(self.coeffs)]
        return PolyOpFunction(cs, self.dim_in + k, self.dim_out + k, self.exact, self.source)

    def to_json(self) -> dict:
        return {"dimIn": self.dim_in, "dimOut": self.dim_out, "exact": bool(self.exact),
                "coeffs": [la.matrix_to_json(c) for c in self.coeffs]}

    @classmethod
    def from_json(cls, doc: dict) -> "PolyOpFunction":
        return cls([la.matrix_from_json(c) for c in doc["coeffs"]], int(doc["dimIn"]),
                   int(doc["dimOut"]), bool(doc.get("exact", False)))


def pad(value: np.ndarray, k: int) -> np.ndarray:
    """``diag(value, I_k)``; the single padding helper used by every factorization."""
    return la.block_diag(value, la.eye(k))


def default_pmax(t: Contraction) -> int:
    if t.nil_order is not None:
        p = t.nil_order + STRUCTURED_PMAX_MARGIN
        return max(p, DENSE_PMAX_FACTOR * t.dim) if t.is_finite else p
    if t.is_finite:
        return DENSE_PMAX_FACTOR * t.dim
    return FALLBACK_PMAX


def theta_coeffs(t, pmax: int | None = None) -> PolyOpFunction:
    """Taylor coefficients ``C_0 = -T`` and ``C_{p+1} = D_{T*} T*^p D_T`` on the frames."""
    t = as_operator(t)
    if pmax is None:
        pmax = default_pmax(t)
    if pmax < 0:
        raise ValueError("pmax must be >= 0")
    cache = t.__dict__.setdefault("_theta_coeffs", {})
    if pmax in cache:
        return cache[pmax]
    dd = defect(t)
    fvecs = dd.frame_vectors()
    c0 = [dd.to_frame_star(-t.apply(f)) for f in fvecs]
    coeffs = [_cols(c0, dd.dim_star)]
    vs = [dd.apply_d(f) for f in fvecs]
    for p in range(pmax):
        coeffs.append(_cols([dd.to_frame_star(dd.apply_d_star(v)) for v in vs], dd.dim_star))
        vs = [t.apply_adjoint(v) for v in vs]
    exact = False
    m = t.nil_order
    if m is not None and pmax >= m + 1:
        exact = all(la.opnorm(c) < TAIL_TOL for c in coeffs[m + 1:])
    f = PolyOpFunction(coeffs, dd.dim, dd.dim_star, exact, source=dd)
    cache[pmax] = f
    return f


def _cols(cols: list, rows: int) -> np.ndarray:
    return np.column_stack(cols) if cols else la.zeros(rows, 0)


def _dense_parts(t: Contraction):
    cache = t.__dict__.get("_dense_parts")
    if cache is None:
        dd = defect(t)
        m = t.matrix()
        f, fs = dd.frame.vectors, dd.frame_star.vectors
        cache = (m, la.adj(fs) @ (-m) @ f, la.adj(fs) @ dd.d_star, dd.d @ f)
        t.__dict__["_dense_parts"] = cache
    return cache


def theta_eval(t, z: complex) -> np.ndarray:
    """Value of the characteristic function at ``|z| < 1``."""
    z = complex(z)
    if not abs(z) < 1:
        raise ValueError(f"|z| = {abs(z)} is not inside the unit disk")
    t = as_operator(t)
    if t.is_finite:
        m, c0, left, right = _dense_parts(t)
        n = m.shape[0]
        if c0.size == 0:
            return c0
        return c0 + z * left @ np.linalg.solve(la.eye(n) - z * la.adj(m), right)
    return theta_coeffs(t)(z)


def series_pmax(norm: float, radius: float, tol: float = 1e-12) -> int:
    """Smallest ``P`` whose Taylor tail is below ``tol`` on ``|z| <= radius``.

    Uses ``||C_p|| <= ||T||^(p-1)``, so the tail past ``P`` is at most
    ``q^P / (1 - q)`` with ``q = radius ||T||``.
    """
    q = radius * min(norm, 1.0)
    if q == 0.0:
        return 1
    if not q < 1.0:
        raise ValueError("series does not converge at this radius")
    return max(1, int(np.ceil(np.log(tol * (1.0 - q)) / np.log(q))))


def theta_series(t, radius: float = 0.9, tol: float = 1e-12) -> PolyOpFunction:
    """Taylor expansion truncated so that it matches ``theta_eval`` on ``|z| <= radius``."""
    t = as_operator(t)
    norm = la.opnorm(t.matrix()) if t.is_finite else 1.0
    return theta_coeffs(t, max(series_pmax(norm, radius, tol), default_pmax(t)))


def theta_function(t) -> "callable":
    t = as_operator(t)
    return lambda z: theta_eval(t, z)


def poly_degree(f: PolyOpFunction, tol: float = DEGREE_TOL) -> int | None:
    """Degree of ``f``, or ``None`` when it cannot be certified up to ``f.pmax``.

    The degree is the largest ``p`` with ``||C_p|| > tol (1 + max_q ||C_q||)``.
    A truncated expansion whose last coefficient is still above that
    threshold gives ``None`` ("not polynomial up to pmax").
    """
    norms = [la.opnorm(c) for c in f.coeffs]
    if not norms:
        return 0
    thr = tol * (1.0 + max(norms))
    if not f.exact and norms[-1] > thr:
        return None
    big = [p for p, n in enumerate(norms) if n > thr]
    return big[-1] if big else 0


def degree_label(deg: int | None, pmax: int) -> int | str:
    return deg if deg is not None else f"not polynomial up to {pmax}"


def purely_contractive(t, tol: float = 1e-9) -> bool:
    th0 = theta_coeffs(t, 0).coeffs[0]
    if th0.shape[1] == 0:
        return True
    return la.opnorm(th0) < 1 - tol


@dataclass
class CoincidenceCertificate:
    tau: np.ndarray
    tau_star: np.ndarray
    residual: float = float("nan")


class CertificateError(ValueError):
    pass


def verify_coincidence(f, g, cert: CoincidenceCertificate, grid=STANDARD_GRID,
                       unitary_tol: float = 1e-9) -> float:
    """Residual of ``f(z) = tau_*^{-1} g(z) tau`` over the grid and coefficientwise.

    ``f`` and ``g`` are :class:`PolyOpFunction`\\ s or callables; the
    coefficient check runs only when both are polynomial objects.
    """
    tau, tau_s = la.as_matrix(cert.tau), la.as_matrix(cert.tau_star)
    for name, u in (("tau", tau), ("tau_star", tau_s)):
        if la.unitary_residual(u) > unitary_tol:
            raise CertificateError(f"{name} is not unitary (residual {la.unitary_residual(u):.3e})")
    if isinstance(f, PolyOpFunction) and isinstance(g, PolyOpFunction):
        if tau.shape != (g.dim_in, f.dim_in) or tau_s.shape != (g.dim_out, f.dim_out):
            raise CertificateError("certificate shapes do not match the functions' frames")
    res = 0.0
    for z in grid:
        res = max(res, la.opnorm(f(z) - la.adj(tau_s) @ g(z) @ tau))
    if isinstance(f, PolyOpFunction) and isinstance(g, PolyOpFunction):
        top = max(f.pmax, g.pmax) if (f.exact and g.exact) else min(f.pmax, g.pmax)
        for p in range(top + 1):
            fp = f.coeff(p) if (p <= f.pmax or f.exact) else None
            gp = g.coeff(p) if (p <= g.pmax or g.exact) else None
            if fp is None or gp is None:
                continue
            res = max(res, la.opnorm(fp - la.adj(tau_s) @ gp @ tau))
    cert.residual = res
    return res


def grid_max(fn, grid=STANDARD_GRID) -> float:
    return max((fn(z) for z in grid), default=0.0)
