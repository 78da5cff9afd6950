"""Two-block upper triangular contractions and the factorization of their
characteristic functions.

For ``T = [[T1, X], [0, T2]]`` the coupling is ``X = D_{T1*} Gamma D_{T2}``
with ``Gamma`` a contraction from the defect space of ``T2`` into that of
``T1*``.  Then

    Theta_T(z) = tau_*^{-1} diag(Theta_T2(z), I) J[Gamma] diag(Theta_T1(z), I) tau

with ``J[Gamma]`` the Halmos unitary and ``tau``, ``tau_*`` built from

    tau   D_T  (h1 + h2) = (D_T1 h1 - T1* Gamma D_T2 h2) + D_Gamma D_T2 h2
    tau_* D_T* (h1 + h2) = (D_T2* h2 - T2 Gamma* D_T1* h1) + D_Gamma* D_T1* h1.

Gamma always maps the ``D_{T2}`` frame into the ``D_{T1*}`` frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg as la
from .charfun import STANDARD_GRID, pad, theta_eval
from .operators import (Contraction, FiniteRank, NotAContractionError, StructuredVector, UpperBlock,
                        Window, as_operator, defect, gram_defect, is_contraction, random_vector)

NORM_IDENTITY_TOL = 1e-8
ACCEPT_TOL = 1e-9


class FactorizationError(RuntimeError):
    pass


class NonTriangularError(ValueError):
    pass


@dataclass
class Halmos:
    """``J[A] = [[A*, D_A], [D_{A*}, -A]]`` on frames of the defect spaces of ``A``."""

    a: np.ndarray
    j: np.ndarray
    d: np.ndarray
    frame: la.Frame
    d_star: np.ndarray
    frame_star: la.Frame

    @property
    def dim(self) -> int:
        return self.frame.dim

    @property
    def dim_star(self) -> int:
        return self.frame_star.dim


def halmos(gamma, tol: float = ACCEPT_TOL) -> Halmos:
    a = la.as_matrix(gamma)
    if la.opnorm(a) > 1 + tol:
        raise NotAContractionError(f"J[A] needs a contraction, ||A|| = {la.opnorm(a):.12g}")
    a = la.clamp_contraction(a, tol)
    k, h = a.shape
    d, f = gram_defect(la.eye(h) - la.adj(a) @ a)
    ds, fs = gram_defect(la.eye(k) - a @ la.adj(a))
    f, fs = la.Frame(f), la.Frame(fs)
    j = la.zeros(h + fs.dim, k + f.dim)
    j[:h, :k] = la.adj(a)
    j[:h, k:] = d @ f.vectors
    j[h:, :k] = la.adj(fs.vectors) @ ds
    j[h:, k:] = -la.adj(fs.vectors) @ a @ f.vectors
    return Halmos(a, j, d, f, ds, fs)


@dataclass
class Block2:
    """``T = [[T1, X], [0, T2]]`` together with its Gamma.

    ``whole`` may carry a handle that already represents ``T`` (for example
    a structured operator assembled in a different grouping); its defect
    frames are then the ones the factorization is written in.
    """

    t1: Contraction
    t2: Contraction
    x: FiniteRank
    gamma: np.ndarray
    whole: Contraction | None = None
    recon_residual: float = 0.0

    def __post_init__(self):
        if self.whole is None:
            self.whole = UpperBlock(self.t1, self.t2, self.x)
        elif self.whole.space != self.t1.space + self.t2.space:
            raise ValueError("whole operator lives on a different space")

    @property
    def operator(self) -> Contraction:
        return self.whole

    @property
    def split_at(self) -> int:
        return len(self.t1.space)


@dataclass
class Factorization2:
    block: Block2
    j: Halmos
    tau: np.ndarray
    tau_star: np.ndarray
    residual: float = float("nan")
    unitarity: dict = field(default_factory=dict)
    norm_identity: float = 0.0

    @property
    def dims(self) -> dict:
        d1, d2, dt = defect(self.block.t1), defect(self.block.t2), defect(self.block.operator)
        return {"D_T": dt.dim, "D_T*": dt.dim_star, "D_T1": d1.dim, "D_T1*": d1.dim_star,
                "D_T2": d2.dim, "D_T2*": d2.dim_star, "D_Gamma": self.j.dim,
                "D_Gamma*": self.j.dim_star}

    def rhs(self, z: complex) -> np.ndarray:
        b = self.block
        mid = pad(theta_eval(b.t2, z), self.j.dim_star) @ self.j.j @ pad(theta_eval(b.t1, z), self.j.dim)
        return la.adj(self.tau_star) @ mid @ self.tau

    def to_json(self) -> dict:
        return {"J": la.matrix_to_json(self.j.j), "tau": la.matrix_to_json(self.tau),
                "tauStar": la.matrix_to_json(self.tau_star), "Gamma": la.matrix_to_json(self.block.gamma),
                "residual": self.residual, "unitarity": self.unitarity,
                "normIdentity": self.norm_identity, "dims": self.dims}


def _as_coupling(x, t1: Contraction, t2: Contraction) -> FiniteRank:
    if isinstance(x, FiniteRank):
        return x
    m = la.as_matrix(x)
    return FiniteRank(Window.full_fin(t2.space), Window.full_fin(t1.space), m)


def gamma_operator(t1: Contraction, t2: Contraction, gamma) -> FiniteRank:
    """``D_{T1*} Gamma D_{T2}`` as an operator."""
    from .operators import coupling
    return coupling(t1, t2, gamma)


def extract_gamma(t1, t2, x, tol: float = ACCEPT_TOL) -> Block2:
    """Recover Gamma from ``X`` and check ``[[T1, X], [0, T2]]`` is a contraction.

    Raises :class:`NotAContractionError` with both diagnostics (range
    reconstruction and norm of Gamma) when the coupling is not admissible.
    """
    t1, t2 = as_operator(t1), as_operator(t2)
    x = _as_coupling(x, t1, t2)
    d1, d2 = defect(t1), defect(t2)
    cols = []
    for f in d2.frame_vectors():
        y = x.apply(d2.pinv_d(f))
        cols.append(d1.frame_star.coords(d1.d_star_pinv @ d1.window_star.restrict(y)))
    gamma = np.column_stack(cols) if cols else la.zeros(d1.dim_star, 0)

    # D_{T1*} Gamma D_{T2} must give back X on every vector that either sees
    probe = x.dom_window | d2.window
    scale = max(1.0, x.norm())
    recon = 0.0
    for e in probe.basis():
        got = d1.apply_d_star(d1.from_frame_star(gamma @ d2.to_frame(d2.apply_d(e))))
        recon = max(recon, (got - x.apply(e)).norm())
    recon /= scale
    gnorm = la.opnorm(gamma)
    whole = UpperBlock(t1, t2, x)
    block_ok = is_contraction(whole, tol)
    if recon > tol or gnorm > 1 + tol:
        raise NotAContractionError(
            f"block matrix is not a contraction: reconstruction residual {recon:.3e}, "
            f"||Gamma|| = {gnorm:.12g}, direct check {'passes' if block_ok else 'fails'}")
    if not block_ok:
        raise FactorizationError("Gamma was accepted but the block matrix fails the direct contraction check")
    return Block2(t1, t2, x, la.clamp_contraction(gamma, tol), whole, recon)


def block2_from_gamma(t1, t2, gamma) -> Block2:
    t1, t2 = as_operator(t1), as_operator(t2)
    g = la.as_matrix(gamma)
    return Block2(t1, t2, gamma_operator(t1, t2, g), g)


def _tau_images(b: Block2, hal: Halmos, h: StructuredVector):
    d1, d2 = defect(b.t1), defect(b.t2)
    h1, h2 = h.split(b.split_at)
    g = d2.to_frame(d2.apply_d(h2))
    first = d1.apply_d(h1) - b.t1.apply_adjoint(d1.from_frame_star(hal.a @ g))
    return first, hal.d @ g


def _tau_star_images(b: Block2, hal: Halmos, h: StructuredVector):
    d1, d2 = defect(b.t1), defect(b.t2)
    h1, h2 = h.split(b.split_at)
    g = d1.to_frame_star(d1.apply_d_star(h1))
    first = d2.apply_d_star(h2) - b.t2.apply(d2.from_frame(la.adj(hal.a) @ g))
    return first, hal.d_star @ g


def norm_identity_residual(b: Block2, hal: Halmos | None = None, samples: int = 8, seed: int = 0) -> float:
    """Largest relative gap in ``||D_T h||^2 = ||first||^2 + ||second||^2`` (and the starred
    version) over random ``h``.
    """
    hal = hal or halmos(b.gamma)
    dt = defect(b.operator)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for win, dfun, images in ((dt.window, dt.apply_d, _tau_images),
                              (dt.window_star, dt.apply_d_star, _tau_star_images)):
        for _ in range(samples):
            h = win.embed(rng.standard_normal(win.size) + 1j * rng.standard_normal(win.size))
            lhs = dfun(h).norm() ** 2
            first, second = images(b, hal, h)
            rhs = first.norm() ** 2 + float(np.vdot(second, second).real)
            worst = max(worst, abs(lhs - rhs) / max(1.0, h.norm() ** 2))
    return worst


def build_tau_pair(b: Block2, hal: Halmos | None = None) -> tuple[np.ndarray, np.ndarray]:
    """The unitaries ``tau`` and ``tau_*`` in frame coordinates."""
    hal = hal or halmos(b.gamma)
    d1, d2, dt = defect(b.t1), defect(b.t2), defect(b.operator)
    if dt.dim != d1.dim + hal.dim or dt.dim_star != d2.dim_star + hal.dim_star:
        raise FactorizationError(
            f"defect dimensions do not add up: dim D_T = {dt.dim} vs {d1.dim} + {hal.dim}, "
            f"dim D_T* = {dt.dim_star} vs {d2.dim_star} + {hal.dim_star}")
    gap = norm_identity_residual(b, hal)
    if gap > NORM_IDENTITY_TOL:
        raise FactorizationError(f"norm identity violated by {gap:.3e}")

    cols = []
    for f in dt.frame_vectors():
        first, second = _tau_images(b, hal, dt.pinv_d(f))
        cols.append(np.concatenate([d1.to_frame(first), la.adj(hal.frame.vectors) @ second]))
    tau = np.column_stack(cols) if cols else la.zeros(d1.dim + hal.dim, 0)

    cols = []
    for f in dt.frame_star_vectors():
        first, second = _tau_star_images(b, hal, dt.pinv_d_star(f))
        cols.append(np.concatenate([d2.to_frame_star(first), la.adj(hal.frame_star.vectors) @ second]))
    tau_s = np.column_stack(cols) if cols else la.zeros(d2.dim_star + hal.dim_star, 0)
    return tau, tau_s


def verify_factor2(b: Block2, grid=STANDARD_GRID, tol: float = ACCEPT_TOL,
                   strict: bool = True) -> Factorization2:
    hal = halmos(b.gamma)
    tau, tau_s = build_tau_pair(b, hal)
    fac = Factorization2(b, hal, tau, tau_s)
    fac.norm_identity = norm_identity_residual(b, hal)
    fac.unitarity = {"J": la.unitary_residual(hal.j), "tau": la.unitary_residual(tau),
                     "tauStar": la.unitary_residual(tau_s)}
    t = b.operator
    fac.residual = max((la.opnorm(theta_eval(t, z) - fac.rhs(z)) for z in grid), default=0.0)
    if strict:
        bad = {k: v for k, v in fac.unitarity.items() if v > tol}
        if bad:
            raise FactorizationError(f"non-unitary factors: {bad}")
        if fac.residual > tol:
            raise FactorizationError(f"factorization residual {fac.residual:.3e} exceeds {tol:.0e}")
    return fac


def factorize2_dense(t, n1: int, tol: float = ACCEPT_TOL, strict: bool = True) -> Factorization2:
    """Split a dense upper triangular contraction after ``n1`` coordinates and factor it."""
    t = la.as_matrix(t)
    n = t.shape[0]
    if t.shape != (n, n) or not 0 <= n1 <= n:
        raise ValueError(f"cannot split a {t.shape} matrix at {n1}")
    low = la.opnorm(t[n1:, :n1])
    if low > 1e-12:
        raise NonTriangularError(f"matrix is not block upper triangular (lower block norm {low:.3e})")
    b = extract_gamma(t[:n1, :n1], t[n1:, n1:], t[:n1, n1:])
    return verify_factor2(b, tol=tol, strict=strict)
