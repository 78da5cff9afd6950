"""Seeded property populations.

Each ``check_*`` function runs one instance for one seed and returns a list
of :class:`Check` records.  :func:`run_suite` sweeps seeds and folds the
records into a report whose bytes depend only on the arguments.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import linalg as la
from .charfun import (
    STANDARD_GRID,
    TAIL_TOL,
    poly_degree,
    theta_coeffs,
    theta_eval,
    theta_series,
)
from .factor2 import ACCEPT_TOL, block2_from_gamma, verify_factor2
from .factor3 import alt_decomposition, corollary_factors, factorize3
from .models import (
    counterexample_residuals,
    jordan_nilpotent,
    random_block2,
    random_block3,
    random_contraction,
    random_rect_contraction,
    random_structured,
    remark_counterexample,
    rng_for,
)
from .operators import Dense, defect

PINV_INVOLUTION_TOL = 1e-8
MP_TOL = 1e-9
PSD_TOL = 1e-9
FRAME_TOL = 1e-10
EIG_TOL = 1e-10
SERIES_TOL = 1e-8
MODEL_TOL = 1e-10

# per-property seed offsets keep the populations independent of each other
_OFFSETS = {"numeric": 0, "charfun": 10_000, "factor2": 20_000, "factor3": 30_000,
            "structured": 40_000, "models": 50_000}


@dataclass
class Check:
    prop: str
    value: float
    threshold: float
    ok: bool | None = None

    def __post_init__(self):
        if self.ok is None:
            self.ok = bool(np.isfinite(self.value) and self.value < self.threshold)


def _dim(rng, lo: int, hi: int) -> int:
    return int(rng.integers(lo, hi + 1))


# -- numeric-core -------------------------------------------------------------

def householder_unitary(n: int, rng) -> np.ndarray:
    u = la.eye(n)
    for _ in range(n):
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        v = v / np.linalg.norm(v)
        u = (la.eye(n) - 2.0 * np.outer(v, v.conj())) @ u
    return u


def moore_penrose_residual(a: np.ndarray) -> float:
    p = la.pinv(a)
    scale = max(1.0, la.opnorm(a), la.opnorm(p))
    return max(la.opnorm(a @ p @ a - a), la.opnorm(p @ a @ p - p),
               la.opnorm(la.adj(a @ p) - a @ p), la.opnorm(la.adj(p @ a) - p @ a)) / scale


def check_numeric(seed: int, max_dim: int) -> list[Check]:
    rng = rng_for(seed + _OFFSETS["numeric"])
    n = _dim(rng, 1, max(1, max_dim))
    r = _dim(rng, 1, n)
    a = random_rect_contraction(n, n, rng, 0.0) + 0.5 * la.eye(n)
    low = random_rect_contraction(n, r, rng, 0.0) @ random_rect_contraction(r, n, rng, 0.0)
    out = [Check("numeric.pinv_involution", la.opnorm(la.pinv(la.pinv(a)) - a), PINV_INVOLUTION_TOL),
           Check("numeric.moore_penrose", moore_penrose_residual(low), MP_TOL)]
    psd = low @ la.adj(low)
    s = la.psd_sqrt(psd)
    out.append(Check("numeric.psd_sqrt", la.opnorm(s @ s - psd) / (1 + la.opnorm(psd)), PSD_TOL))
    fr = la.range_frame(low)
    span = la.opnorm(low - fr.vectors @ la.adj(fr.vectors) @ low) / max(1.0, la.opnorm(low))
    out.append(Check("numeric.range_frame", max(fr.gram_residual(), span), FRAME_TOL))
    h = psd + la.adj(psd) - la.eye(n) * 0.3
    w, u = la.hermitian_eig(h)
    out.append(Check("numeric.eig_reconstruction",
                     la.opnorm(u @ np.diag(w) @ la.adj(u) - h) / max(1.0, la.opnorm(h)), EIG_TOL))
    q = householder_unitary(n, rng)
    out.append(Check("numeric.householder_unitary", 0.0 if la.classify(q).unitary else 1.0, 0.5))
    return out


# -- charfun ------------------------------------------------------------------

def series_agreement(t, radius: float = 0.9, grid=STANDARD_GRID) -> float:
    f = theta_series(t, radius)
    pts = [z for z in grid if abs(z) <= radius + 1e-15]
    return max((la.opnorm(f(z) - theta_eval(t, z)) for z in pts), default=0.0)


def nilpotent_tail(m: int, scale: float) -> tuple[int | None, float]:
    """Degree of ``Theta_N`` for a Jordan block and the largest coefficient past ``m``."""
    t = Dense(jordan_nilpotent(m, scale), nil_order=m)
    f = theta_coeffs(t, m + 5)
    return poly_degree(f), max(la.opnorm(c) for c in f.coeffs[m + 1:])


def check_charfun(seed: int, max_dim: int) -> list[Check]:
    rng = rng_for(seed + _OFFSETS["charfun"])
    n = _dim(rng, 1, max(1, max_dim))
    t = Dense(random_contraction(n, seed + _OFFSETS["charfun"], float(rng.uniform(0.0, 0.3))))
    out = [Check("charfun.dense_vs_series", series_agreement(t), SERIES_TOL)]
    m = _dim(rng, 1, max(1, max_dim))
    scale = float(rng.choice([0.5, 1.0]))
    deg, tail = nilpotent_tail(m, scale)
    out.append(Check("charfun.nilpotent_degree", 0.0 if deg == m else 1.0, 0.5))
    out.append(Check("charfun.nilpotent_tail", tail, TAIL_TOL))
    return out


# -- factor2 ------------------------------------------------------------------

def check_factor2(seed: int, max_dim: int, tol: float = ACCEPT_TOL, fault: bool = False) -> list[Check]:
    rng = rng_for(seed + _OFFSETS["factor2"])
    n1, n2 = _dim(rng, 1, max(1, max_dim)), _dim(rng, 1, max(1, max_dim))
    b = random_block2(n1, n2, seed + _OFFSETS["factor2"])
    fac = verify_factor2(b, tol=tol, strict=False)
    res = fac.residual
    if fault:
        # self-test: factor a slightly different coupling and compare against the original
        other = verify_factor2(block2_from_gamma(b.t1, b.t2, 0.99 * b.gamma), tol=tol, strict=False)
        res = max((la.opnorm(theta_eval(b.operator, z) - other.rhs(z)) for z in STANDARD_GRID), default=0.0)
    return [Check("factor2.residual", res, tol),
            Check("factor2.unitarity", max(fac.unitarity.values()), tol)]


# -- factor3 ------------------------------------------------------------------

def check_factor3(seed: int, max_dim: int, shape=None, tol: float = ACCEPT_TOL) -> list[Check]:
    rng = rng_for(seed + _OFFSETS["factor3"])
    top = max(0, min(3, max_dim))
    dims = tuple(shape) if shape is not None else tuple(_dim(rng, 0, top) for _ in range(3))
    if sum(dims) == 0:
        dims = (1, 1, 1)
    t = random_block3(dims, seed + _OFFSETS["factor3"])
    fac = factorize3(t, split=dims, tol=tol, strict=False)
    g, g1 = halmos_dims(fac)
    ok_dims = (fac.e1_dim == g1["D_Gamma1*"] and fac.m_dim == g["D_Gamma*"] + g1["D_Gamma1"]
               and fac.e2_dim == g["D_Gamma"] + g1["D_Gamma1"])
    return [Check("factor3.residual", fac.residual, tol),
            Check("factor3.unitarity", max(fac.unitarity.values()), tol),
            Check("factor3.space_dims", 0.0 if ok_dims else 1.0, 0.5)]


def halmos_dims(fac) -> tuple[dict, dict]:
    """Defect dimensions of both Gammas, computed directly from the matrices."""
    def dims(gm):
        g = la.as_matrix(gm)
        dg = la.range_frame(la.eye(g.shape[1]) - la.adj(g) @ g).dim
        dgs = la.range_frame(la.eye(g.shape[0]) - g @ la.adj(g)).dim
        return dg, dgs
    a, b = dims(fac.gamma), dims(fac.gamma1)
    return {"D_Gamma": a[0], "D_Gamma*": a[1]}, {"D_Gamma1": b[0], "D_Gamma1*": b[1]}


# -- structured ---------------------------------------------------------------

def structured_instance(seed: int, max_dim: int, shape=None):
    rng = rng_for(seed + _OFFSETS["structured"])
    if shape is not None:
        d1, n0, d3 = (int(x) for x in shape)
    else:
        d1, d3 = _dim(rng, 1, 2), _dim(rng, 1, 2)
        n0 = _dim(rng, 1, max(1, min(3, max_dim)))
    jordan = bool(seed % 2 == 0)
    t = random_structured(d1, n0, d3, seed + _OFFSETS["structured"], jordan=jordan)
    return t, (d1, n0, d3), jordan


def structured_record(t, jordan: bool, tol: float = ACCEPT_TOL) -> tuple[list[Check], dict]:
    cf = corollary_factors(t, tol=tol, strict=False)
    af = alt_decomposition(t, tol=tol, strict=False)
    f = theta_coeffs(t)
    m = t.m
    deg = poly_degree(f)
    deg_ok = deg is not None and (deg == m if jordan else deg <= m)
    tail = max((la.opnorm(c) for c in f.coeffs[m + 1:]), default=0.0)
    dt = defect(t)
    dn = defect(t.nop)
    book = (dn.dim_star + cf.m_dim >= dt.dim_star and dn.dim + cf.m_dim >= dt.dim)
    agree = max((la.opnorm(cf.rhs(z) - af.rhs(z)) for z in STANDARD_GRID), default=0.0)
    checks = [
        Check("structured.corollary_residual", max(cf.residual, cf.coeff_residual), tol),
        Check("structured.corollary_isometries", max(cf.checks.values()), tol),
        Check("structured.degree", 0.0 if deg_ok else 1.0, 0.5),
        Check("structured.tail", tail, TAIL_TOL),
        Check("structured.dim_bookkeeping", 0.0 if book else 1.0, 0.5),
        Check("structured.alt_residual", max(af.residual, af.coeff_residual), tol),
        Check("structured.alt_isometries", max(af.checks.values()), tol),
        Check("structured.alt_vs_main", agree, tol),
    ]
    info = {"M": cf.m_dim, "Mtilde": af.mtilde_dim, "equal": cf.m_dim == af.mtilde_dim,
            "m": m, "degree": deg}
    return checks, info


def check_structured(seed: int, max_dim: int, shape=None, tol: float = ACCEPT_TOL):
    t, dims, jordan = structured_instance(seed, max_dim, shape)
    checks, info = structured_record(t, jordan, tol)
    info.update({"seed": seed, "shape": list(dims), "jordan": jordan})
    return checks, info


# -- models -------------------------------------------------------------------

def _digest(*mats) -> str:
    h = hashlib.sha256()
    for a in mats:
        a = np.ascontiguousarray(a)
        h.update(repr(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def check_models(seed: int, max_dim: int) -> list[Check]:
    s = seed + _OFFSETS["models"]
    rng = rng_for(s)
    n = _dim(rng, 0, max(1, max_dim))
    dims = tuple(_dim(rng, 0, min(2, max_dim)) for _ in range(3))
    same = (_digest(random_contraction(n, s)) == _digest(random_contraction(n, s))
            and _digest(random_block3(dims, s)) == _digest(random_block3(dims, s)))
    t1, t2 = random_structured(1, 2, 1, s), random_structured(1, 2, 1, s)
    same = same and _digest(t1.n, t1.gamma, t1.gamma1) == _digest(t2.n, t2.gamma, t2.gamma1)
    out = [Check("models.determinism", 0.0 if same else 1.0, 0.5)]
    contraction = la.classify(random_block3(dims, s)).contraction
    out.append(Check("models.contraction", 0.0 if contraction else 1.0, 0.5))
    k, kstar = _dim(rng, 1, 2), _dim(rng, 1, 2)
    m = _dim(rng, 1, max(1, min(4, max_dim)))
    ce = remark_counterexample(k, kstar, m, max(k, kstar) + _dim(rng, 0, 1), s)
    res = counterexample_residuals(ce)
    out.append(Check("models.counterexample_factors", max(res.values()), MODEL_TOL))
    out.append(Check("models.counterexample_degree", 0.0 if ce.degree == 0 else 1.0, 0.5))
    return out


# -- driver -------------------------------------------------------------------

PROPERTIES = ("numeric", "charfun", "factor2", "factor3", "structured", "models")


def thresholds(tol: float) -> dict:
    return {"accept": tol, "pinvInvolution": PINV_INVOLUTION_TOL, "moorePenrose": MP_TOL,
            "psdSqrt": PSD_TOL, "frame": FRAME_TOL, "eig": EIG_TOL, "series": SERIES_TOL,
            "tail": TAIL_TOL, "models": MODEL_TOL}


def run_seed(seed: int, max_dim: int, shapes=None, tol: float = ACCEPT_TOL, fault: bool = False,
             only: str | None = None):
    """All checks for one seed, plus the structured dimension row."""
    shape = shapes[seed % len(shapes)] if shapes else None
    if only is not None and only not in PROPERTIES:
        raise ValueError(f"unknown property group {only!r}")
    groups = [only] if only else PROPERTIES
    checks, row = [], None
    for g in groups:
        try:
            if g == "numeric":
                checks += check_numeric(seed, max_dim)
            elif g == "charfun":
                checks += check_charfun(seed, max_dim)
            elif g == "factor2":
                checks += check_factor2(seed, max_dim, tol, fault)
            elif g == "factor3":
                checks += check_factor3(seed, max_dim, shape, tol)
            elif g == "structured":
                cs, row = check_structured(seed, max_dim, shape, tol)
                checks += cs
            else:
                checks += check_models(seed, max_dim)
        except (ValueError, ArithmeticError, RuntimeError, np.linalg.LinAlgError):
            # a construction that raises counts as a failed check for this seed
            checks.append(Check(f"{g}.exception", float("inf"), 0.0, ok=False))
    return checks, row


def replay_line(seed: int, prop: str, max_dim: int, shapes, tol: float, fault: bool) -> str:
    parts = ["defectkit", "suite", "--only-seed", str(seed), "--max-dim", str(max_dim),
             "--property", prop.split(".")[0]]
    if shapes:
        parts += ["--shapes", ";".join(",".join(str(x) for x in s) for s in shapes)]
    if tol != ACCEPT_TOL:
        parts += ["--tol", repr(tol)]
    if fault:
        parts.append("--fault")
    return " ".join(parts)


def run_suite(seeds, max_dim: int = 4, shapes=None, tol: float = ACCEPT_TOL, fault: bool = False,
              only: str | None = None) -> dict:
    """Sweep ``seeds`` (an iterable of ints) and summarize; ordering is by seed."""
    seeds = sorted(int(s) for s in seeds)
    stats: dict[str, dict] = {}
    failures, table = [], []
    for seed in seeds:
        checks, row = run_seed(seed, max_dim, shapes, tol, fault, only)
        if row is not None:
            table.append(row)
        for c in checks:
            st = stats.setdefault(c.prop, {"checked": 0, "failed": 0, "max": 0.0, "threshold": c.threshold})
            st["checked"] += 1
            st["max"] = max(st["max"], float(c.value))
            if not c.ok:
                st["failed"] += 1
                failures.append({"property": c.prop, "seed": seed, "value": float(c.value),
                                 "threshold": c.threshold,
                                 "replay": replay_line(seed, c.prop, max_dim, shapes, tol, fault)})
    props = {k: stats[k] for k in sorted(stats)}
    return {"properties": props, "failures": failures, "dimTable": table,
            "counts": {"checks": sum(p["checked"] for p in props.values()),
                       "failed": len(failures), "seeds": len(seeds)},
            "passed": not failures}


def report_bytes(doc: dict) -> bytes:
    return json.dumps(doc, sort_keys=True, allow_nan=True).encode()
