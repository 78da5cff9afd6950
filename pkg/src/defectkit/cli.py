"""``defectkit`` command line: analyze, factorize, suite, gen.

Every invocation prints exactly one JSON document on stdout.  Exit codes:
0 success, 1 suite failure, 2 parse/usage error, 3 input is not a
contraction or not triangular, 4 a residual exceeded its threshold.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import linalg as la
from .charfun import (
    DEGREE_TOL,
    degree_label,
    default_pmax,
    poly_degree,
    purely_contractive,
    theta_coeffs,
)
from .factor2 import ACCEPT_TOL, FactorizationError, factorize2_dense, verify_factor2
from .factor3 import (
    NonTriangularError,
    alt_decomposition,
    corollary_factors,
    factorize3,
    split_blocks,
)
from .models import (
    jordan_nilpotent,
    random_block3,
    random_contraction,
    random_structured,
    remark_counterexample,
)
from .operators import (
    Dense,
    NotAContractionError,
    StructuredOperator,
    defect,
    nilpotent_order,
)
from .suite import report_bytes, run_suite, thresholds

EXIT_OK, EXIT_SUITE, EXIT_PARSE, EXIT_INPUT, EXIT_RESIDUAL = 0, 1, 2, 3, 4


class UsageError(ValueError):
    pass


def effective_tol(flag: float | None) -> float:
    if flag is not None:
        return flag
    env = os.environ.get("DEFECTKIT_TOL")
    if env:
        try:
            return float(env)
        except ValueError:
            raise UsageError(f"DEFECTKIT_TOL={env!r} is not a number") from None
    return ACCEPT_TOL


def emit(doc: dict, out=None) -> None:
    out = out or sys.stdout
    out.write(json.dumps(doc, sort_keys=True, allow_nan=True))
    out.write("\n")


# -- input --------------------------------------------------------------------

class Instance:
    """A parsed input file: a dense matrix (maybe with a split) or a structured operator."""

    def __init__(self, op, split=None, digest: str = ""):
        self.op = op
        self.split = split
        self.digest = digest

    @property
    def structured(self) -> bool:
        return isinstance(self.op, StructuredOperator)


def load_instance(path: str) -> Instance:
    try:
        raw = sys.stdin.buffer.read() if path == "-" else open(path, "rb").read()
        doc = json.loads(raw)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    digest = hashlib.sha256(raw).hexdigest()
    if not isinstance(doc, dict):
        raise UsageError("input must be a JSON object")
    if "d1" in doc:
        return Instance(StructuredOperator.from_json(doc), digest=digest)
    split = None
    if "matrix" in doc:
        split = doc.get("split")
        doc = doc["matrix"]
    if "rows" not in doc:
        raise UsageError("input is neither a matrix document nor a structured operator")
    m = la.matrix_from_json(doc)
    if m.shape[0] != m.shape[1]:
        raise UsageError(f"operator matrix must be square, got {m.shape}")
    if la.opnorm(m) > 1 + 1e-9:
        raise NotAContractionError(f"input has norm {la.opnorm(m):.12g} > 1")
    return Instance(Dense(la.clamp_contraction(m), nil_order=nilpotent_order(m)), split, digest)


def parse_triple(text: str) -> tuple:
    parts = [p for p in text.replace("(", "").replace(")", "").split(",") if p.strip()]
    try:
        vals = tuple(int(p) for p in parts)
    except ValueError:
        raise UsageError(f"bad dimension list {text!r}") from None
    if any(v < 0 for v in vals):
        raise UsageError(f"negative dimension in {text!r}")
    return vals


def parse_shapes(text: str | None):
    if not text:
        return None
    shapes = [parse_triple(s) for s in text.split(";") if s.strip()]
    if any(len(s) != 3 for s in shapes):
        raise UsageError("each shape needs three block sizes")
    return shapes


# -- unitary part (heuristic) -------------------------------------------------

def unitary_part_dim(m: np.ndarray, tol: float = 1e-9) -> int:
    """Dimension of ``{h : ||T^k h|| = ||h|| = ||T*^k h||, k <= n}``.

    In finite dimensions this is the largest reducing subspace on which
    ``T`` is unitary; reported as a heuristic since it rests on a rank
    decision.
    """
    n = m.shape[0]
    if n == 0:
        return 0
    rows, p, ps = [], la.eye(n), la.eye(n)
    for _ in range(n):
        p, ps = m @ p, la.adj(m) @ ps
        rows += [la.eye(n) - la.adj(p) @ p, la.eye(n) - la.adj(ps) @ ps]
    return la.kernel_frame(np.vstack(rows), tol).dim


# -- analyze ------------------------------------------------------------------

def cmd_analyze(args) -> tuple[dict, int]:
    tol = effective_tol(args.tol)
    inst = load_instance(args.input)
    t = inst.op
    pmax = args.pmax if args.pmax is not None else default_pmax(t)
    dd = defect(t)
    f = theta_coeffs(t, pmax)
    deg = poly_degree(f, DEGREE_TOL)
    res = {"defectDims": {"D_T": dd.dim, "D_T*": dd.dim_star},
           "purelyContractive": purely_contractive(t, tol) if dd.dim else "vacuous",
           "degree": degree_label(deg, f.pmax) if dd.dim or dd.dim_star else "vacuous",
           "theta0Norm": la.opnorm(f.coeffs[0]), "pmax": f.pmax, "exact": f.exact,
           "nilOrder": t.nil_order}
    if not inst.structured:
        res["unitaryPartDim"] = {"value": unitary_part_dim(t.matrix()), "heuristic": True}
    return _report("analyze", inst.digest, tol, res, {}, pmax=pmax), EXIT_OK


# -- factorize ----------------------------------------------------------------

def _verdict(value: float, tol: float) -> dict:
    return {"value": value, "threshold": tol, "ok": bool(value <= tol)}


def cmd_factorize(args) -> tuple[dict, int]:
    tol = effective_tol(args.tol)
    inst = load_instance(args.input)
    split = tuple(args.split) if args.split else (tuple(inst.split) if inst.split else None)
    mode = args.mode
    results, verdicts = {}, {}
    if mode in ("corollary", "alt", "both") and not inst.structured:
        raise UsageError(f"mode {mode} needs a structured operator input")
    if mode == "two":
        if inst.structured:
            fac = verify_factor2(split_blocks(inst.op)[1], tol=tol, strict=False)
        else:
            if not split:
                raise UsageError("mode two on a dense matrix needs --split n1 [n2]")
            fac = factorize2_dense(inst.op.matrix(), split[0], tol=tol, strict=False)
        results["factorization2"] = fac.to_json()
        verdicts["residual"] = _verdict(fac.residual, tol)
        verdicts.update({f"unitary.{k}": _verdict(v, tol) for k, v in fac.unitarity.items()})
    if mode == "three":
        if not inst.structured and (not split or len(split) != 3):
            raise UsageError("mode three on a dense matrix needs --split n1 n0 n-1")
        fac = factorize3(inst.op, split=None if inst.structured else split, tol=tol, strict=False)
        results["factorization3"] = fac.to_json()
        verdicts["residual"] = _verdict(fac.residual, tol)
        verdicts.update({f"unitary.{k}": _verdict(v, tol) for k, v in fac.unitarity.items()})
    if mode in ("corollary", "both"):
        cf = corollary_factors(inst.op, tol=tol, strict=False)
        results["corollary"] = cf.to_json()
        verdicts["corollary.residual"] = _verdict(max(cf.residual, cf.coeff_residual), tol)
        verdicts.update({f"corollary.{k}": _verdict(v, tol) for k, v in cf.checks.items()})
    if mode in ("alt", "both"):
        af = alt_decomposition(inst.op, tol=tol, strict=False)
        results["alt"] = af.to_json()
        verdicts["alt.residual"] = _verdict(max(af.residual, af.coeff_residual), tol)
        verdicts.update({f"alt.{k}": _verdict(v, tol) for k, v in af.checks.items()})
    if mode == "both":
        results["dimReport"] = {"M": cf.m_dim, "Mtilde": af.mtilde_dim, "equal": cf.m_dim == af.mtilde_dim}
    code = EXIT_OK if all(v["ok"] for v in verdicts.values()) else EXIT_RESIDUAL
    return _report("factorize", inst.digest, tol, results, verdicts, mode=mode), code


# -- suite --------------------------------------------------------------------

def cmd_suite(args) -> tuple[dict, int]:
    tol = effective_tol(args.tol)
    shapes = parse_shapes(args.shapes)
    seeds = [args.only_seed] if args.only_seed is not None else range(args.seed_start, args.seed_start + args.seeds)
    t0 = time.perf_counter()
    summary = run_suite(seeds, args.max_dim, shapes, tol, args.fault, args.property)
    flags = {"seeds": args.seeds, "seedStart": args.seed_start, "onlySeed": args.only_seed,
             "maxDim": args.max_dim, "shapes": shapes, "fault": args.fault, "property": args.property}
    digest = hashlib.sha256(report_bytes(flags)).hexdigest()
    doc = _report("suite", digest, tol, summary, {}, flags=flags)
    doc["thresholds"] = thresholds(tol)
    if args.timing:
        doc["wallTime"] = time.perf_counter() - t0
    if not summary["passed"]:
        for f in summary["failures"]:
            print(f"replay (seed {f['seed']}, {f['property']}): {f['replay']}", file=sys.stderr)
    return doc, EXIT_OK if summary["passed"] else EXIT_SUITE


# -- gen ----------------------------------------------------------------------

def cmd_gen(args) -> tuple[dict, int]:
    kind = args.kind
    if kind == "jordan":
        doc = la.matrix_to_json(jordan_nilpotent(args.m, args.scale))
    elif kind == "contraction":
        doc = la.matrix_to_json(random_contraction(args.n, args.seed, args.margin))
    elif kind == "block3":
        dims = parse_triple(args.dims)
        if len(dims) != 3:
            raise UsageError("--dims needs three block sizes")
        doc = {"matrix": la.matrix_to_json(random_block3(dims, args.seed)), "split": list(dims)}
    elif kind == "structured":
        dims = parse_triple(args.dims)
        if len(dims) != 3:
            raise UsageError("--dims needs three sizes d1,n0,d3")
        doc = random_structured(*dims, args.seed, jordan=args.jordan, scale=args.scale).to_json()
    else:
        doc = remark_counterexample(args.k, args.kstar, args.m, args.mdim, args.seed,
                                    control=args.control).to_json()
    if args.out:
        with open(args.out, "w") as fh:
            emit(doc, fh)
    return doc, EXIT_OK


# -- plumbing -----------------------------------------------------------------

def _report(command: str, digest: str, tol: float, results: dict, verdicts: dict, **extra) -> dict:
    doc = {"command": command, "inputsDigest": digest, "tolerances": {"accept": tol, "rank": la.RANK_TOL,
                                                                       "degree": DEGREE_TOL},
           "results": results, "verdicts": verdicts}
    doc.update(extra)
    return doc


class _Parser(argparse.ArgumentParser):
    """Argument errors become :class:`UsageError` so they are reported as JSON."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="defectkit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="defect dimensions, purity and degree of Theta_T")
    a.add_argument("input", help="matrix or structured-operator JSON file ('-' for stdin)")
    a.add_argument("--pmax", type=int, default=None)
    a.add_argument("--tol", type=float, default=None)

    f = sub.add_parser("factorize", help="build and verify a block factorization")
    f.add_argument("input")
    f.add_argument("--mode", choices=["two", "three", "corollary", "alt", "both"], default="three")
    f.add_argument("--split", type=int, nargs="+", default=None)
    f.add_argument("--tol", type=float, default=None)

    s = sub.add_parser("suite", help="run the seeded property populations")
    s.add_argument("--seeds", type=int, default=50)
    s.add_argument("--seed-start", type=int, default=0)
    s.add_argument("--only-seed", type=int, default=None)
    s.add_argument("--max-dim", type=int, default=4)
    s.add_argument("--shapes", default=None, help="e.g. '1,1,1;2,2,2'")
    s.add_argument("--property", default=None,
                   choices=["numeric", "charfun", "factor2", "factor3", "structured", "models"])
    s.add_argument("--fault", action="store_true", help="inject a known fault (harness self-test)")
    s.add_argument("--timing", action="store_true", help="include wall time in the report")
    s.add_argument("--tol", type=float, default=None)

    g = sub.add_parser("gen", help="generate an instance")
    g.add_argument("kind", choices=["jordan", "contraction", "block3", "structured", "counterexample"])
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--m", type=int, default=2)
    g.add_argument("--n", type=int, default=3)
    g.add_argument("--scale", type=float, default=1.0)
    g.add_argument("--margin", type=float, default=0.0)
    g.add_argument("--dims", default="1,1,1")
    g.add_argument("--jordan", action="store_true")
    g.add_argument("--k", type=int, default=1)
    g.add_argument("--kstar", type=int, default=1)
    g.add_argument("--mdim", type=int, default=2)
    g.add_argument("--control", action="store_true")
    g.add_argument("--out", default=None)
    return p


COMMANDS = {"analyze": cmd_analyze, "factorize": cmd_factorize, "suite": cmd_suite, "gen": cmd_gen}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        emit({"command": None, "error": str(exc), "kind": "parse", "exitCode": EXIT_PARSE})
        return EXIT_PARSE
    try:
        doc, code = COMMANDS[args.command](args)
    except UsageError as exc:
        doc, code = {"command": args.command, "error": str(exc), "kind": "parse"}, EXIT_PARSE
    except (NotAContractionError, NonTriangularError) as exc:
        doc, code = {"command": args.command, "error": str(exc), "kind": "input"}, EXIT_INPUT
    except FactorizationError as exc:
        doc, code = {"command": args.command, "error": str(exc), "kind": "residual"}, EXIT_RESIDUAL
    except ValueError as exc:
        doc, code = {"command": args.command, "error": str(exc), "kind": "parse"}, EXIT_PARSE
    doc["exitCode"] = code
    emit(doc)
    return code


if __name__ == "__main__":
    sys.exit(main())
