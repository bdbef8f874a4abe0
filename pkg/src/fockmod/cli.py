"""Command line front end: ``fockmod <verb> [flags]``.

Exit codes: 0 every verdict passed, 1 some verdict failed (or an oracle
mismatch), 2 usage or input error, 3 capacity exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import harness as hz
from .errors import CapacityError, CompletenessError, DomainError, FockmodError, PreconditionError

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_CAPACITY = 0, 1, 2, 3


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _Usage(message)


def _common(p, instance=True):
    p.add_argument("--tol", type=float, default=1e-8, help="verdict tolerance (default 1e-8)")
    p.add_argument("--out", help="write the JSON result here instead of stdout")
    p.add_argument("--seed", type=int, default=0)
    if instance:
        p.add_argument("--instance", help="instance JSON produced by 'gen'")
        p.add_argument("--spec", help="spec JSON path, inline JSON, or comma list of dims")
        p.add_argument("--cap", help="cap a,b,...")
        p.add_argument("--coeff-dim", type=int, default=1)
        p.add_argument("--kind", choices=hz.KINDS, default="induced")


def build_parser():
    p = _Parser(prog="fockmod", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", parser_class=_Parser)

    g = sub.add_parser("gen", help="generate an instance")
    _common(g)
    g.add_argument("--subspaces", type=int, default=0, help="attach this many random invariant subspaces")
    g.add_argument("--generators", type=int, default=2, help="random vectors per attached subspace")

    w = sub.add_parser("wold", help="wandering subspace, Wold unitary and residuals")
    _common(w)

    s = sub.add_parser("symbol", help="extract or apply a symbol")
    s.add_argument("action", choices=("extract", "apply"))
    _common(s)
    s.add_argument("--symbol", help="symbol JSON for 'apply' (default: the instance's stored symbols)")
    s.add_argument("--terms", choices=("series", "n0"), default="series")

    for verb, text in (("factorize", "factor an invariant subspace as the range of an inner multiplier"),
                       ("nested", "decide M1 <= M2 through the factorizations"),
                       ("coincide", "decide whether two factorizations' symbol systems coincide"),
                       ("lift", "lift the ambient multipliers through M_Psi")):
        q = sub.add_parser(verb, help=text)
        _common(q)
        q.add_argument("--subspace", action="append", default=[],
                       help="subspace frame JSON (repeatable; default: the instance's stored subspaces)")
        q.add_argument("--generators", type=int, default=2)

    v = sub.add_parser("verify", help="run the full check suite")
    _common(v)
    v.add_argument("--instances", nargs="*", default=[], help="further instance files (processed in order)")
    v.add_argument("--jobs", type=int, default=1)
    v.add_argument("--subspaces", type=int, default=2)

    o = sub.add_parser("oracle", help="compare fast path against literal formulas")
    _common(o)
    o.add_argument("--checks", default=",".join(hz.ORACLE_CHECKS),
                   help="comma list out of " + ",".join(hz.ORACLE_CHECKS) + " (empty for none)")
    o.add_argument("--inject-fault", action="store_true", help="perturb one entry of the first map by 1e-3")
    o.add_argument("--jobs", type=int, default=1)
    return p


# -- helpers -------------------------------------------------------------------------

def _instance(args):
    if args.instance:
        return hz.load_instance(args.instance)
    if not (args.spec and args.cap):
        raise _Usage("pass --instance, or --spec and --cap")
    return hz.gen_instance(hz.parse_spec(args.spec), hz.parse_cap(args.cap), args.coeff_dim, args.kind, args.seed)


def _emit(obj, args):
    text = obj if isinstance(obj, str) else hz.dumps(obj, indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _subspaces(inst, args, want):
    frames = []
    for path in args.subspace:
        with open(path) as fh:
            frames.append(hz.frame_from_json(json.load(fh), inst.tuple.basis))
    frames += [F for F, _ in inst.subspaces][:max(0, want - len(frames))]
    k = 0
    while len(frames) < want:
        F, _ = hz.gen_invariant_subspace(inst.tuple, args.generators, args.seed * 1000 + k)
        frames.append(F)
        k += 1
    for F in frames:
        if F.columns.shape[0] != inst.tuple.dim:
            raise DomainError(f"subspace frame has {F.columns.shape[0]} rows, instance has dimension {inst.tuple.dim}")
    return frames


def _report(inst, args, mode):
    return hz.Report(inst.digest(), meta={"mode": mode, "seed": args.seed, "tol": args.tol})


def _factor(inst, F, tol):
    from .invariant import blh_factorize
    amb, Fm = hz.model_frame(inst.tuple, F)
    return amb, Fm, blh_factorize(Fm, amb, tol=tol)


# -- verbs ---------------------------------------------------------------------------

def cmd_gen(args):
    if not (args.spec and args.cap):
        raise _Usage("gen needs --spec and --cap")
    inst = hz.gen_instance(hz.parse_spec(args.spec), hz.parse_cap(args.cap), args.coeff_dim, args.kind, args.seed)
    for k in range(args.subspaces):
        inst.subspaces.append(hz.gen_invariant_subspace(inst.tuple, args.generators, args.seed * 1000 + k))
    _emit(inst.dumps(), args)
    return EXIT_PASS


def cmd_wold(args):
    from .wold import max_intertwining, wold_unitary
    inst = _instance(args)
    rep = _report(inst, args, "wold")
    t = time.perf_counter()
    wd = wold_unitary(inst.tuple, tol=1e-10)
    res = max([wd.residuals["gram"], wd.residuals["block_orthogonality"], max_intertwining(wd)])
    rep.add("wold", hz._v(res, args.tol), res, wd.window, round(time.perf_counter() - t, 6),
            residuals=wd.residuals)
    rep.meta["wandering"] = wd.wandering.to_json()
    rep.meta["model"] = wd.model.to_json()
    rep.meta["unitary"] = hz.encode_matrix(wd.unitary.dense())
    _emit(rep.dumps(), args)
    return EXIT_PASS if rep.passed else EXIT_FAIL


def cmd_symbol(args):
    from .core import dense, opnorm
    from .fockrep import CovariantTuple, induced_tuple
    from .multianalytic import Symbol, extract_symbol, multiplier_from_symbol
    from .wold import wold_unitary
    from .basis import GradedBasis

    inst = _instance(args)
    tup = inst.tuple
    rep = _report(inst, args, f"symbol-{args.action}")
    if args.action == "extract":
        if len(tup.maps) < 2:
            raise DomainError("symbol extraction needs at least two maps")
        t = time.perf_counter()
        first = CovariantTuple(tup.basis, list(tup.maps[:-1]), list(tup.factors[:-1]), tup.provenance, tup.grading)
        wd = wold_unitary(first)
        sym = extract_symbol(first, tup.maps[-1], wd, terms=args.terms)
        # only inputs whose image stays below the cap are exact
        extra = tup.maps[-1]
        ok = np.all(sym.source_degrees <= np.asarray(extra.valid_window), axis=1)
        cols = np.concatenate([a * sym.source_dim + np.nonzero(ok)[0] for a in range(sym.letter_dim)])
        blk = sym.block[:, cols]
        iso = opnorm(blk.conj().T @ blk - np.eye(cols.size)) if cols.size else None
        rep.add("symbol_isometric", hz._v(iso, args.tol), iso, extra.valid_window,
                round(time.perf_counter() - t, 6), exact_columns=int(cols.size))
        rep.meta["symbol"] = {**sym.to_json(), "source_dim": sym.source_dim}
    else:
        syms = []
        if args.symbol:
            with open(args.symbol) as fh:
                obj = json.load(fh)
            obj = obj.get("symbol", obj)
            B = GradedBasis.from_json(obj["basis"])
            syms.append(Symbol(B, obj["factor"] - 1, hz.decode_matrix(obj["block"]),
                               np.asarray(obj.get("source_degrees"), dtype=np.int64)
                               if obj.get("source_degrees") is not None else None))
        else:
            syms = [Symbol(tup.basis, s["factor"], s["block"]) for s in inst.symbols]
        if not syms:
            raise DomainError("no symbol given and the instance stores none")
        ops = []
        for k, sym in enumerate(syms):
            t = time.perf_counter()
            S = induced_tuple(sym.basis.spec, sym.basis.cap, basis=sym.basis)
            M = multiplier_from_symbol(sym, S)
            d = None
            if sym.basis.same_as(tup.basis) and sym.factor in tup.factors:
                idx = sym.basis.window_indices(M.valid_window)
                N = sym.basis.dim
                cols = np.concatenate([a * N + idx for a in range(M.letter_dim)])
                d = opnorm(dense(M.matrix)[:, cols] - dense(tup.map_for(sym.factor).matrix)[:, cols])
            rep.add(f"apply[{k}]", hz._v(d, args.tol), d, M.valid_window, round(time.perf_counter() - t, 6),
                    compared_with_instance_map=d is not None)
            ops.append({"factor": sym.factor + 1, "degree_shift": list(M.degree_shift),
                        "valid_window": list(M.valid_window), "matrix": hz.encode_matrix(M.matrix)})
        rep.meta["operators"] = ops
    _emit(rep.dumps(), args)
    return EXIT_PASS if rep.passed else EXIT_FAIL


def cmd_factorize(args):
    inst = _instance(args)
    rep = _report(inst, args, "factorize")
    out = []
    for k, F in enumerate(_subspaces(inst, args, max(1, len(args.subspace)))):
        t = time.perf_counter()
        _, _, fd = _factor(inst, F, args.tol)
        r = fd.residuals
        vals = [v for key, v in r.items() if key != "range_span_defect" and v is not None]
        d = max(vals) if vals else None
        rep.add(f"factorize[{k}]", hz._v(d, args.tol), d, fd.window, round(time.perf_counter() - t, 6),
                residuals=r, flags=fd.flags)
        out.append(fd.to_json())
    rep.meta["factorizations"] = out
    _emit(rep.dumps(), args)
    return EXIT_PASS if rep.passed else EXIT_FAIL


def cmd_nested(args):
    from .invariant import nested_test
    inst = _instance(args)
    rep = _report(inst, args, "nested")
    F1, F2 = _subspaces(inst, args, 2)[:2]
    t = time.perf_counter()
    fd1 = _factor(inst, F1, args.tol)[2]
    fd2 = _factor(inst, F2, args.tol)[2]
    res = nested_test(fd1, fd2, args.tol)
    rep.add("nested", "pass" if res.details["agree"] else "fail", res.defect, res.window,
            round(time.perf_counter() - t, 6), contained=res.ok, details=res.details,
            factor=None if res.payload is None else hz.encode_matrix(res.payload))
    _emit(rep.dumps(), args)
    return EXIT_PASS if rep.passed else EXIT_FAIL


def cmd_coincide(args):
    from .invariant import coincide_test
    inst = _instance(args)
    rep = _report(inst, args, "coincide")
    frames = _subspaces(inst, args, max(1, len(args.subspace)))
    t = time.perf_counter()
    fd1 = _factor(inst, frames[0], args.tol)[2]
    sys1 = fd1.system()
    if len(frames) > 1:
        sys2 = _factor(inst, frames[1], args.tol)[2].system()
        rep.meta["comparison"] = "two subspaces"
    else:
        Z0 = hz.haar_unitary(sys1.coeff_dim, hz.make_rng(args.seed, 2))
        sys2 = sys1.conjugated(Z0)
        rep.meta["comparison"] = "subspace against a seeded unitary conjugate of itself"
    res = coincide_test(sys1, sys2, args.tol)
    if len(frames) > 1:
        # either answer is a valid outcome; only an undecided one is flagged
        decided = res.ok or res.defect is None or res.defect >= 1e-6
        v = "pass" if decided else "indeterminate"
    else:
        v = res.verdict if res.ok else "fail"
    rep.add("coincide", v, res.defect, None, round(time.perf_counter() - t, 6),
            coincide=res.ok, details=res.details,
            unitary=None if res.payload is None else hz.encode_matrix(res.payload))
    _emit(rep.dumps(), args)
    return EXIT_PASS if rep.passed else EXIT_FAIL


def cmd_lift(args):
    from .invariant import intertwining_lift
    inst = _instance(args)
    rep = _report(inst, args, "lift")
    for k, F in enumerate(_subspaces(inst, args, max(1, len(args.subspace)))):
        amb, Fm = hz.model_frame(inst.tuple, F)
        t = time.perf_counter()
        res = intertwining_lift(Fm, amb, args.tol)
        rep.add(f"lift[{k}]", res.verdict, res.defect, res.window, round(time.perf_counter() - t, 6),
                lifted=res.ok, details=res.details,
                symbols=None if res.payload is None else [s.to_json() for s in res.payload])
    _emit(rep.dumps(), args)
    return EXIT_PASS if rep.passed else EXIT_FAIL


def _verify_one(task):
    path, obj, tol, seed, subspaces = task
    inst = hz.Instance.from_json(obj)
    rep = hz.run_verify(inst, tol=tol, seed=seed, subspaces=subspaces)
    rep.meta["instance"] = path
    return rep.to_json()


def _oracle_one(task):
    path, obj, checks, fault = task
    inst = hz.Instance.from_json(obj)
    if fault:
        inst = hz.inject_fault(inst)
    rep = hz.oracle_verify(inst, checks)
    rep.meta["instance"] = path
    return rep.to_json()


def _fan_out(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))  # ordered: output does not depend on scheduling


def _instance_objects(args):
    objs = []
    if args.instance or (args.spec and args.cap):
        objs.append((args.instance or "generated", _instance(args).to_json()))
    for path in getattr(args, "instances", []):
        objs.append((path, hz.load_instance(path).to_json()))
    if not objs:
        raise _Usage("pass --instance, or --spec and --cap")
    return objs


def _bundle(reports, args):
    if len(reports) == 1:
        return reports[0]
    return {"tool": "fockmod", "passed": all(r["passed"] for r in reports), "reports": reports}


def cmd_verify(args):
    tasks = [(p, o, args.tol, args.seed, args.subspaces) for p, o in _instance_objects(args)]
    t = time.perf_counter()
    reports = _fan_out(_verify_one, tasks, args.jobs)
    out = _bundle(reports, args)
    if len(reports) > 1:
        out["total_wall_time"] = round(time.perf_counter() - t, 6)
    _emit(hz.dumps(out, indent=1), args)
    return EXIT_PASS if all(r["passed"] for r in reports) else EXIT_FAIL


def cmd_oracle(args):
    checks = tuple(c for c in args.checks.split(",") if c)
    tasks = [(p, o, checks, args.inject_fault) for p, o in _instance_objects(args)]
    reports = _fan_out(_oracle_one, tasks, args.jobs)
    _emit(hz.dumps(_bundle(reports, args), indent=1), args)
    return EXIT_PASS if all(r["passed"] for r in reports) else EXIT_FAIL


VERBS = {"gen": cmd_gen, "wold": cmd_wold, "symbol": cmd_symbol, "factorize": cmd_factorize,
         "nested": cmd_nested, "coincide": cmd_coincide, "lift": cmd_lift, "verify": cmd_verify,
         "oracle": cmd_oracle}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.verb:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        return VERBS[args.verb](args)
    except _Usage as exc:
        print(f"fockmod: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapacityError as exc:
        print(f"fockmod: capacity exceeded: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (PreconditionError, CompletenessError) as exc:
        print(f"fockmod: check failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (DomainError, FockmodError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"fockmod: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
