"""Command-line front end: ``mlsos solve|oracle|game|contain|bench``."""

import argparse
import hashlib
import json
import json.decoder
import json.scanner
import math
import sys
import time
import warnings

import numpy as np

from mlsos import polytope as pt
from mlsos.apps import (
    BimatrixGame,
    ContainmentInstance,
    Decision,
    decide_containment,
    shift_positive,
    solve_game,
)
from mlsos.errors import (
    CapExceeded,
    DegenerateGameWarning,
    KernelConditionFailed,
    MlsosError,
    NoNontrivialOptimizer,
)
from mlsos.hierarchy import SIGMA0_CHOICES, HierarchyStatus, run
from mlsos.mlp import MultilinearForm, MultilinearProgram, optima_are_finite, prepare, vertex_oracle

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_ORDER_CAP = 2
EXIT_ORACLE_CAP = 3
EXIT_NO_OPTIMIZER = 4
EXIT_NOT_CONTAINED = 5
EXIT_INCONCLUSIVE = 6
EXIT_KERNEL = 7

CONTAIN_EXIT = {
    Decision.CONTAINED: EXIT_OK,
    Decision.NOT_CONTAINED: EXIT_NOT_CONTAINED,
    Decision.INCONCLUSIVE: EXIT_INCONCLUSIVE,
}


class InputError(MlsosError):
    """Malformed input file."""


# ------------------------------------------------------------------ JSON with positions

class _Located(dict):
    """A JSON object remembering the line of its opening brace and of each key."""

    line = 0
    key_lines = None


def _line_of(s, pos):
    return s.count("\n", 0, pos) + 1


def _key_lines(s, start, end):
    """Lines of the keys that sit directly inside the object spanning ``s[start:end]``."""
    out = {}
    depth, i = 0, start
    expect_key = False
    while i < end:
        ch = s[i]
        if ch == '"':
            j = i + 1
            while s[j] != '"':
                j += 2 if s[j] == "\\" else 1
            if depth == 1 and expect_key:
                out.setdefault(json.loads(s[i:j + 1]), _line_of(s, i))
                expect_key = False
            i = j + 1
            continue
        if ch in "{[":
            depth += 1
            expect_key = ch == "{" and depth == 1
        elif ch in "}]":
            depth -= 1
        elif ch == "," and depth == 1:
            expect_key = True
        i += 1
    return out


class _LocatingDecoder(json.JSONDecoder):
    def __init__(self, text):
        super().__init__(object_pairs_hook=_Located)

        def parse_object(s_and_end, strict, scan_once, object_hook, object_pairs_hook, memo=None):
            s, start = s_and_end
            obj, end = json.decoder.JSONObject(s_and_end, strict, scan_once, object_hook,
                                               object_pairs_hook, memo)
            obj.line = _line_of(s, start - 1)
            obj.key_lines = _key_lines(s, start - 1, end)
            return obj, end

        self.parse_object = parse_object
        self.scan_once = json.scanner.py_make_scanner(self)


def load_json(text):
    try:
        return _LocatingDecoder(text).decode(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


class _Fields:
    """Strict accessor over a located JSON object; every error names field and line."""

    def __init__(self, obj, where, allowed):
        if not isinstance(obj, dict):
            raise InputError(f"{where}: expected an object")
        self.obj, self.where = obj, where
        self.line = getattr(obj, "line", 0)
        for key in obj:
            if key not in allowed:
                raise InputError(f"{self.path(key)} (line {self.key_line(key)}): unknown field")

    def path(self, key):
        return f"{self.where}.{key}" if self.where else key

    def key_line(self, key):
        lines = getattr(self.obj, "key_lines", None) or {}
        return lines.get(key, self.line)

    def fail(self, key, msg):
        raise InputError(f"{self.path(key)} (line {self.key_line(key)}): {msg}")

    def get(self, key, default=None, required=True):
        if key not in self.obj:
            if required:
                raise InputError(f"{self.path(key)} (line {self.line}): missing required field")
            return default
        return self.obj[key]

    def matrix(self, key, cols=None, required=True):
        raw = self.get(key, None, required)
        if raw is None:
            return None
        if not isinstance(raw, list) or any(not isinstance(r, list) for r in raw):
            self.fail(key, "expected an array of row arrays")
        for i, row in enumerate(raw):
            if cols is not None and len(row) != cols:
                self.fail(key, f"row {i + 1} has {len(row)} entries, expected {cols}")
            if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in row):
                self.fail(key, f"row {i + 1} has a non-numeric entry")
        width = cols if cols is not None else (len(raw[0]) if raw else 0)
        if raw and any(len(r) != width for r in raw):
            self.fail(key, "rows have different lengths")
        return np.array(raw, dtype=float).reshape(len(raw), width)

    def vector(self, key, size=None, required=True):
        raw = self.get(key, None, required)
        if raw is None:
            return None
        if not isinstance(raw, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in raw):
            self.fail(key, "expected an array of numbers")
        if size is not None and len(raw) != size:
            self.fail(key, f"has {len(raw)} entries, expected {size}")
        return np.array(raw, dtype=float)


# ------------------------------------------------------------------ problem files

def parse_problem(text):
    """ProblemFile text -> MultilinearProgram (blocks unprepared)."""
    doc = load_json(text)
    top = _Fields(doc, "", {"blocks", "objective", "sense"})
    sense = top.get("sense", "max", required=False)
    if sense not in ("max", "min"):
        top.fail("sense", f"must be 'max' or 'min', got {sense!r}")
    raw_blocks = top.get("blocks")
    if not isinstance(raw_blocks, list) or len(raw_blocks) < 2:
        top.fail("blocks", "expected an array of at least two blocks")
    blocks = []
    for i, rb in enumerate(raw_blocks):
        fb = _Fields(rb, f"blocks[{i + 1}]", {"name", "dim", "A", "a", "B", "b"})
        name = fb.get("name", f"block{i + 1}", required=False)
        if not isinstance(name, str):
            fb.fail("name", "expected a string")
        dim = fb.get("dim")
        if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
            fb.fail("dim", f"block {name!r}: expected a positive integer")
        label = f"block {name!r}"
        try:
            A = fb.matrix("A", dim)
            a = fb.vector("a", A.shape[0])
            B = fb.matrix("B", dim, required=False)
            b = fb.vector("b", None if B is None else B.shape[0], required=B is not None)
        except InputError as exc:
            raise InputError(f"{label}: {exc}") from None
        if b is not None and B is None:
            fb.fail("b", f"{label}: given without B")
        blocks.append(pt.HPolytope(dim, A, a, B, b, name=name))
    dims = tuple(P.dim for P in blocks)
    raw_obj = top.get("objective")
    if not isinstance(raw_obj, list) or not raw_obj:
        top.fail("objective", "expected a non-empty array of terms")
    tensors = {}
    for k, rt in enumerate(raw_obj):
        ft = _Fields(rt, f"objective[{k + 1}]", {"subset", "entries"})
        subset = ft.get("subset")
        if (not isinstance(subset, list) or not subset
                or any(isinstance(s, bool) or not isinstance(s, int) for s in subset)):
            ft.fail("subset", "expected a non-empty array of block indices")
        if any(s < 1 or s > len(dims) for s in subset):
            ft.fail("subset", f"block indices must lie in 1..{len(dims)}")
        if any(s >= t for s, t in zip(subset, subset[1:])):
            ft.fail("subset", "block indices must be strictly increasing")
        L = tuple(s - 1 for s in subset)
        Q = tensors.setdefault(L, np.zeros(tuple(dims[i] for i in L)))
        entries = ft.get("entries")
        if not isinstance(entries, list):
            ft.fail("entries", "expected an array")
        for j, re in enumerate(entries):
            fe = _Fields(re, f"objective[{k + 1}].entries[{j + 1}]", {"index", "value"})
            idx = fe.get("index")
            if (not isinstance(idx, list) or len(idx) != len(L)
                    or any(isinstance(v, bool) or not isinstance(v, int) for v in idx)):
                fe.fail("index", f"expected {len(L)} integer coordinates")
            for pos, (v, i) in enumerate(zip(idx, L)):
                if v < 1 or v > dims[i]:
                    fe.fail("index", f"coordinate {pos + 1} must lie in 1..{dims[i]} (block {i + 1})")
            val = fe.get("value")
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                fe.fail("value", "expected a number")
            Q[tuple(v - 1 for v in idx)] += float(val)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        f = MultilinearForm(dims, tensors)
    p = MultilinearProgram(blocks, f, sense)
    p.parse_warnings = [str(w.message) for w in caught]
    return p


def dump_problem(p):
    """MultilinearProgram -> ProblemFile dict (1-based indices)."""
    blocks = []
    for P in p.blocks:
        entry = {"name": P.name, "dim": P.dim, "A": P.A.tolist(), "a": P.a.tolist()}
        if P.n_eq:
            entry["B"] = P.B.tolist()
            entry["b"] = P.b.tolist()
        blocks.append(entry)
    objective = []
    for L, Q in sorted(p.objective.tensors.items()):
        entries = [{"index": [int(i) + 1 for i in idx], "value": float(Q[idx])}
                   for idx in zip(*np.nonzero(Q))]
        objective.append({"subset": [i + 1 for i in L], "entries": entries})
    return {"blocks": blocks, "objective": objective, "sense": p.sense}


def _read(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return data.decode("utf-8"), hashlib.sha256(data).hexdigest()
    except UnicodeDecodeError:
        raise InputError(f"{path}: not UTF-8 text") from None


# ------------------------------------------------------------------ output helpers

def _num(v):
    """JSON-safe float: non-finite values become null."""
    v = float(v)
    return v if math.isfinite(v) else None


def _vec(x):
    return None if x is None else [_num(v) for v in np.ravel(x)]


def _emit(doc, fmt, text_lines, out):
    out = out or sys.stdout
    if fmt == "json":
        out.write(json.dumps(doc, indent=2, allow_nan=False) + "\n")
    else:
        out.write("\n".join(text_lines) + "\n")


def _fmt(v):
    return "n/a" if v is None or (isinstance(v, float) and not math.isfinite(v)) else f"{v:.10g}"


def _tol_arg(s):
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError("tolerance must be positive")
    return v


def _order_window(args):
    if args.order is not None:
        return args.order, args.order
    return None, args.max_order


def _report_doc(report, digest, started):
    orders = [{
        "t": r.t,
        "f_t": _num(report._user(r.f_t)),
        "sdp_status": r.sdp_status.value,
        "moment_candidate": None if r.candidate is None else [_vec(c) for c in r.candidate],
        "iterations": r.iterations,
        "seconds": r.seconds,
    } for r in report.orders]
    return {
        "input_sha256": digest,
        "sense": report.sense,
        "orders": orders,
        "relaxation_bound": _num(report.relaxation_bound),
        "best_lower": {
            "value": _num(report.best_lower),
            "witness": None if report.witness is None else [_vec(w) for w in report.witness],
        },
        "best_upper": _num(report.best_upper),
        "gap": _num(report.gap),
        "status": report.status.value,
        "notes": list(report.notes),
        "wall_time": {"total": time.perf_counter() - started,
                      "orders": sum(r.seconds for r in report.orders)},
    }


def _report_text(report):
    lines = [f"{'t':>3} {'f_t':>20} {'sdp':>16} {'iters':>6} {'sec':>8}"]
    for r in report.orders:
        lines.append(f"{r.t:>3} {_fmt(report._user(r.f_t)):>20} {r.sdp_status.value:>16} "
                     f"{r.iterations:>6} {r.seconds:>8.3f}")
    lines.append(f"relaxation bound: {_fmt(report.relaxation_bound)}")
    lines.append(f"best feasible:    {_fmt(report.value)}")
    if report.witness is not None:
        for i, w in enumerate(report.witness):
            lines.append(f"  x{i + 1} = {np.array2string(np.asarray(w), precision=8)}")
    lines.append(f"gap: {_fmt(report.gap)}")
    lines.append(f"status: {report.status.value}")
    lines.extend(f"note: {n}" for n in report.notes)
    return lines


# ------------------------------------------------------------------ commands

def cmd_solve(args, out=None):
    started = time.perf_counter()
    text, digest = _read(args.path)
    p = parse_problem(text)
    for w in p.parse_warnings:
        print(f"warning: {w}", file=sys.stderr)
    p = prepare(p)
    t_min, t_max = _order_window(args)
    report = run(p, t_max=t_max, tol=args.tol, sigma0=args.sigma0, t_min=t_min)
    doc = _report_doc(report, digest, started)
    _emit(doc, args.format, _report_text(report), out)
    return EXIT_OK if report.status is HierarchyStatus.CONVERGED else EXIT_ORDER_CAP


def cmd_oracle(args, out=None):
    text, digest = _read(args.path)
    p = parse_problem(text)
    p = prepare(p)
    res = vertex_oracle(p, cap=args.cap)
    finite = optima_are_finite(res, p)
    tuples = []
    for k, idx in enumerate(res.optimal_tuples):
        tuples.append({"vertex_indices": [i + 1 for i in idx], "point": [_vec(x) for x in res.point(k)]})
    doc = {"input_sha256": digest, "value": _num(res.value), "finite": finite,
           "tuples_scanned": res.tuples_scanned, "optimal_tuples": tuples}
    lines = [f"f* = {_fmt(res.value)}", f"finite = {str(finite).lower()}",
             f"tuples scanned: {res.tuples_scanned}", f"optimal tuples: {len(tuples)}"]
    for t in tuples:
        lines.append("  " + "  ".join(np.array2string(np.array(x), precision=8) for x in t["point"]))
    _emit(doc, args.format, lines, out)
    return EXIT_OK


def _load_game(text):
    doc = load_json(text)
    f = _Fields(doc, "", {"A", "B"})
    A = f.matrix("A")
    B = f.matrix("B", A.shape[1])
    if B.shape != A.shape:
        f.fail("B", f"shape {B.shape} differs from A {A.shape}")
    if A.size == 0:
        f.fail("A", "empty payoff matrix")
    return A, B


def cmd_game(args, out=None):
    text, digest = _read(args.path)
    A, B = _load_game(text)
    g = shift_positive(A, B)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DegenerateGameWarning)
        res = solve_game(g, t_max=args.max_order, tol=args.tol, sigma0=args.sigma0)
    warned = [f"DegenerateGameWarning: {w.message}" for w in caught
              if issubclass(w.category, DegenerateGameWarning)]
    eq = res.equilibrium
    doc = {
        "input_sha256": digest,
        "shift": g.shift,
        "nondegenerate": res.nondegenerate,
        "equilibrium": {"x": _vec(eq.x_hat), "y": _vec(eq.y_hat)},
        "payoffs": [eq.payoff1, eq.payoff2],
        "source": res.source,
        "hierarchy": {"status": res.report.status.value,
                      "f_t": {str(t): _num(v) for t, v in res.report.f_values().items()},
                      "gap": _num(res.report.gap)},
        "warnings": warned,
    }
    lines = warned + [
        f"shift: {_fmt(g.shift)}",
        f"nondegenerate: {str(res.nondegenerate).lower()}",
        f"x = {np.array2string(eq.x_hat, precision=8)}",
        f"y = {np.array2string(eq.y_hat, precision=8)}",
        f"payoffs: ({_fmt(eq.payoff1)}, {_fmt(eq.payoff2)})",
        f"found by: {res.source}",
        f"hierarchy: {res.report.status.value}, f_t = "
        + ", ".join(f"{t}: {_fmt(v)}" for t, v in res.report.f_values().items()),
    ]
    _emit(doc, args.format, lines, out)
    return EXIT_OK


def _load_containment(text):
    doc = load_json(text)
    top = _Fields(doc, "", {"P", "Q"})
    fp = _Fields(top.get("P"), "P", {"A", "a"})
    A = fp.matrix("A")
    a = fp.vector("a", A.shape[0])
    fq = _Fields(top.get("Q"), "Q", {"B", "b", "Bprime"})
    B = fq.matrix("B", A.shape[1])
    b = fq.vector("b", B.shape[0])
    Bp = fq.get("Bprime", None, required=False)
    if Bp is not None:
        Bp = fq.matrix("Bprime")
        if Bp.shape[0] != B.shape[0]:
            fq.fail("Bprime", f"has {Bp.shape[0]} rows, expected {B.shape[0]}")
    return ContainmentInstance(A, a, B, b, Bp)


def cmd_contain(args, out=None):
    text, digest = _read(args.path)
    c = _load_containment(text)
    try:
        v = decide_containment(c, tol=args.tol, t_max=args.max_order, sigma0=args.sigma0)
    except KernelConditionFailed as exc:
        print(f"kernel condition failed: {exc}", file=sys.stderr)
        return EXIT_KERNEL
    witness = None if v.witness is None else {"x": _vec(v.witness[0]), "z": _vec(v.witness[1])}
    doc = {
        "input_sha256": digest,
        "decision": v.decision.value,
        "certified_lower": _num(v.certified_lower),
        "best_value": _num(v.best_value),
        "tight": v.tight,
        "witness": witness if v.decision is Decision.NOT_CONTAINED else None,
        "orders": {str(t): _num(-f) for t, f in v.report.f_values().items()},
    }
    lines = [f"verdict: {v.decision.value}",
             f"certified lower bound on min z^T(b - Bx): {_fmt(v.certified_lower)}",
             f"best feasible value: {_fmt(v.best_value)}",
             f"tight: {str(v.tight).lower()}"]
    if v.decision is Decision.NOT_CONTAINED:
        lines.append(f"witness x = {np.array2string(v.witness[0], precision=8)}")
        lines.append(f"witness z = {np.array2string(v.witness[1], precision=8)}")
    _emit(doc, args.format, lines, out)
    return CONTAIN_EXIT[v.decision]


# ------------------------------------------------------------------ bench

def random_polytope(rng, d, n_cuts, name=""):
    """``[-1, 1]^d`` cut by ``n_cuts`` random halfspaces that keep the origin strictly inside."""
    box = pt.HPolytope.box(-np.ones(d), np.ones(d))
    if n_cuts == 0:
        return pt.HPolytope(d, box.A, box.a, name=name)
    W = rng.standard_normal((n_cuts, d))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    r = rng.uniform(0.3, 0.9, n_cuts)
    return pt.HPolytope(d, np.vstack([box.A, W]), np.concatenate([box.a, r]), name=name)


def random_bilinear(rng, dims, cuts=None):
    """Random bilinear (or multilinear) program with a dense Gaussian full tensor."""
    cuts = [2 if d <= 2 else 0 for d in dims] if cuts is None else cuts
    blocks = [random_polytope(rng, d, k, name=f"x{i + 1}") for i, (d, k) in enumerate(zip(dims, cuts))]
    f = MultilinearForm(dims, {tuple(range(len(dims))): rng.standard_normal(tuple(dims))})
    return MultilinearProgram(blocks, f, "max")


def bench_rows(seed, count, dims, orders, tol=1e-5):
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(count):
        p = prepare(random_bilinear(rng, dims))
        fstar = vertex_oracle(p).value
        report = run(p, t_min=min(orders), t_max=max(orders), tol=0.0)
        fts = {r.t: report._user(r.f_t) for r in report.orders if r.t in orders}
        band = tol * (1.0 + abs(fstar))
        conv = next((t for t in sorted(fts) if math.isfinite(fts[t]) and fts[t] - fstar <= band), None)
        finite_vals = [v for v in fts.values() if math.isfinite(v)]
        gap = min(finite_vals) - fstar if finite_vals else math.nan
        rows.append({"instance": k + 1, "f_star": fstar, "f_t": fts, "converged_order": conv, "gap": gap})
    return rows


def _int_list(s):
    try:
        vals = [int(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("expected positive integers")
    return vals


def cmd_bench(args, out=None):
    dims = tuple(args.dims)
    orders = sorted(set(args.orders)) if args.orders else list(range(len(dims), len(dims) + 3))
    orders = [t for t in orders if t >= len(dims)]
    if not orders:
        raise InputError(f"orders must include a value >= {len(dims)} (number of blocks)")
    rows = bench_rows(args.seed, args.count, dims, orders)
    doc = {"seed": args.seed, "dims": list(dims), "orders": orders,
           "rows": [{**r, "f_star": _num(r["f_star"]), "gap": _num(r["gap"]),
                     "f_t": {str(t): _num(v) for t, v in r["f_t"].items()}} for r in rows]}
    head = f"{'inst':>4} {'f*':>14} " + " ".join(f"{'f_' + str(t):>14}" for t in orders) \
        + f" {'conv':>5} {'gap':>10}"
    lines = [head]
    for r in rows:
        lines.append(f"{r['instance']:>4} {r['f_star']:>14.8f} "
                     + " ".join(f"{_fmt(r['f_t'].get(t)):>14}" for t in orders)
                     + f" {str(r['converged_order'] or '-'):>5} {r['gap']:>10.2e}")
    _emit(doc, args.format, lines, out)
    return EXIT_OK


# ------------------------------------------------------------------ entry point

def build_parser():
    parser = argparse.ArgumentParser(prog="mlsos", description="SOS hierarchy for multilinear programs over polytopes")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, orders=True):
        sp.add_argument("--format", choices=("json", "text"), default="text")
        if orders:
            sp.add_argument("--max-order", type=int, default=None, help="largest relaxation order (default l+3)")
            sp.add_argument("--tol", type=_tol_arg, default=1e-5)
            sp.add_argument("--sigma0", choices=SIGMA0_CHOICES, default="2t")

    sp = sub.add_parser("solve", help="run the hierarchy on a problem file")
    sp.add_argument("path")
    sp.add_argument("--order", type=int, default=None, help="solve this single order only")
    common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("oracle", help="exhaustive vertex oracle")
    sp.add_argument("path")
    sp.add_argument("--cap", type=int, default=10**7, help="maximum number of vertex tuples")
    common(sp, orders=False)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("game", help="Nash equilibrium of a bimatrix game {A, B}")
    sp.add_argument("path")
    common(sp)
    sp.set_defaults(func=cmd_game)

    sp = sub.add_parser("contain", help="decide P in pi(Q) for {P: {A, a}, Q: {B, b, Bprime}}")
    sp.add_argument("path")
    common(sp)
    sp.set_defaults(func=cmd_contain, tol=1e-6)

    sp = sub.add_parser("bench", help="seeded random bilinear benchmark")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--count", type=int, default=5)
    sp.add_argument("--dims", type=_int_list, default=[2, 2])
    sp.add_argument("--orders", type=_int_list, default=None)
    sp.add_argument("--format", choices=("json", "text"), default="text")
    sp.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "order", None) is not None and args.order < 1:
        print("error: --order must be positive", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args, sys.stdout)
    except CapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ORACLE_CAP if args.command == "oracle" else EXIT_INPUT
    except NoNontrivialOptimizer as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_OPTIMIZER
    except (MlsosError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
