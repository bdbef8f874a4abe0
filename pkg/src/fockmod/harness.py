"""Instances, seeded generation, JSON wire format, reports and the oracle driver."""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import unitary_group

from . import __version__
from . import oracle as lit
from .basis import GradedBasis, ProductSystemSpec, deg_sub, unit
from .core import Frame, GradedOperator, dense, opnorm, orthonormal_frame
from .errors import DomainError
from .fockrep import (
    CovariantTuple, check_axioms, commuting_residual, conjugate_tuple, induced_tuple,
    isometry_residual,
)

# -- JSON ---------------------------------------------------------------------------

def _fmt_float(x):
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return "null"
    if x == 0:
        return "0.0"
    return format(x, ".17g")


def dumps(obj, indent=None):
    """JSON text with every float written to 17 significant digits."""
    parts = []
    _write(obj, parts, indent, 0)
    return "".join(parts)


def _write(obj, out, indent, level):
    nl = "" if indent is None else "\n" + " " * (indent * (level + 1))
    end = "" if indent is None else "\n" + " " * (indent * level)
    sep = "," if indent is None else ","
    if obj is None or isinstance(obj, (bool, np.bool_)):
        out.append(json.dumps(None if obj is None else bool(obj)))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{")
        for k, (key, val) in enumerate(obj.items()):
            if k:
                out.append(sep)
            out.append(nl + json.dumps(str(key)) + ": ")
            _write(val, out, indent, level + 1)
        out.append(end + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        # numeric leaves stay on one line
        flat = all(not isinstance(v, (dict, list, tuple)) for v in seq) or _is_pair_list(seq)
        out.append("[")
        for k, val in enumerate(seq):
            if k:
                out.append(", " if flat or indent is None else sep)
            if not flat:
                out.append(nl)
            _write(val, out, None if flat else indent, level + 1)
        out.append(("" if flat else end) + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def _is_pair_list(seq):
    return all(isinstance(v, (list, tuple)) and len(v) == 2 and
               all(isinstance(x, (int, float)) for x in v) for v in seq)


def encode_matrix(M):
    """``{"shape": [r, c], "data": [[re, im], ...]}`` in row-major order."""
    A = np.asarray(dense(M), dtype=complex)
    if A.ndim == 1:
        A = A[:, None]
    flat = A.reshape(-1)
    return {"shape": list(A.shape), "data": np.stack([flat.real, flat.imag], axis=1).tolist()}


def decode_matrix(obj):
    r, c = obj["shape"]
    data = np.asarray(obj["data"], dtype=float).reshape(-1, 2) if r * c else np.zeros((0, 2))
    return (data[:, 0] + 1j * data[:, 1]).reshape(r, c)


def digest_bytes(text):
    return hashlib.sha256(text.encode()).hexdigest()


# -- randomness ---------------------------------------------------------------------

def make_rng(seed, *path):
    """Generator for the sub-task ``path`` of a seeded run (independent streams per path)."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path)))


def haar_unitary(n, rng):
    if n == 1:
        return np.exp(2j * np.pi * rng.random()).reshape(1, 1)
    return unitary_group.rvs(n, random_state=rng)


def random_isometry(rows, cols, rng):
    G = rng.normal(size=(rows, cols)) + 1j * rng.normal(size=(rows, cols))
    Q, R = np.linalg.qr(G)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def parse_cap(text):
    try:
        return tuple(int(x) for x in str(text).split(","))
    except ValueError:
        raise DomainError(f"bad cap {text!r}; expected comma-separated integers") from None


def parse_spec(text):
    """Spec from a JSON file path, an inline JSON object, or a comma list of dims."""
    text = str(text).strip()
    if text.startswith("{"):
        return ProductSystemSpec.from_json(json.loads(text))
    if all(part.strip().isdigit() for part in text.split(",")):
        return ProductSystemSpec(parse_cap(text))
    with open(text) as fh:
        return ProductSystemSpec.from_json(json.load(fh))


# -- instances ----------------------------------------------------------------------

KINDS = ("induced", "conjugated", "multiplier")


@dataclass
class Instance:
    tuple: CovariantTuple
    kind: str
    seed: int
    generator: dict = field(default_factory=dict)
    symbols: list = field(default_factory=list)
    subspaces: list = field(default_factory=list)

    @property
    def spec(self):
        return self.tuple.spec

    @property
    def cap(self):
        return self.tuple.cap

    @property
    def coeff_dim(self):
        return self.generator.get("coeff_dim", self.tuple.basis.coeff_dim)

    def to_json(self):
        t = self.tuple
        return {
            "format": "fockmod-instance/1",
            "spec": t.spec.to_json(),
            "cap": list(t.cap),
            "coeff_dim": self.coeff_dim,
            "kind": self.kind,
            "seed": self.seed,
            "generator": self.generator,
            "provenance": t.provenance,
            "basis": t.basis.to_json(),
            "tuple": {
                "factors": [f + 1 for f in t.factors],
                "maps": [encode_matrix(op.matrix) for op in t.maps],
                "grading": None if t.grading is None else encode_matrix(t.grading),
            },
            "symbols": [{"factor": s["factor"] + 1, "block": encode_matrix(s["block"])} for s in self.symbols],
            "subspaces": [{"columns": encode_matrix(F.columns), **info} for F, info in self.subspaces],
        }

    def dumps(self):
        return dumps(self.to_json())

    def digest(self):
        return digest_bytes(self.dumps())

    @classmethod
    def from_json(cls, obj):
        if obj.get("format") != "fockmod-instance/1":
            raise DomainError("not a fockmod instance")
        basis = GradedBasis.from_json(obj["basis"])
        facs = [f - 1 for f in obj["tuple"]["factors"]]
        maps = []
        for f, enc in zip(facs, obj["tuple"]["maps"]):
            mat = decode_matrix(enc)
            e = unit(f, basis.r)
            maps.append(GradedOperator(basis, basis, mat, basis.spec.dims[f], e, deg_sub(basis.cap, e), name=f"V{f}"))
        grading = obj["tuple"].get("grading")
        tup = CovariantTuple(basis, maps, facs, obj.get("provenance", "external"),
                             None if grading is None else decode_matrix(grading))
        syms = [{"factor": s["factor"] - 1, "block": decode_matrix(s["block"])} for s in obj.get("symbols", [])]
        subs = []
        for s in obj.get("subspaces", []):
            info = {k: v for k, v in s.items() if k != "columns"}
            subs.append((frame_from_json(s, basis), info))
        return cls(tup, obj["kind"], obj["seed"], obj.get("generator", {}), syms, subs)


def load_instance(path):
    with open(path) as fh:
        return Instance.from_json(json.load(fh))


def inner_symbols(spec, cap, coeff_dim, rng):
    """Random isometric symbols with doubly commuting multipliers.

    Start from the normal form of the induced tuple and conjugate its
    coefficient space by a random unitary that respects the grading of ``K``.
    """
    from .invariant import normal_form

    nf = normal_form(induced_tuple(spec, cap, coeff_dim), 1, gate=False)
    B = nf.basis
    deg = B.coeff_degrees
    Z = np.zeros((B.coeff_dim, B.coeff_dim), dtype=complex)
    _, key = np.unique(deg, axis=0, return_inverse=True)
    key = np.ravel(key)
    for g in np.unique(key):
        idx = np.nonzero(key == g)[0]
        Z[np.ix_(idx, idx)] = haar_unitary(idx.size, rng)
    sysZ = nf.system().conjugated(Z)
    return B, sysZ.symbols


def gen_instance(spec, cap, coeff_dim=1, kind="induced", seed=0):
    """Deterministic instance of the requested kind."""
    if kind not in KINDS:
        raise DomainError(f"unknown kind {kind!r}; expected one of {KINDS}")
    cap = tuple(int(c) for c in cap)
    gen = {"coeff_dim": int(coeff_dim), "kind": kind}
    rng = make_rng(seed, 0)
    if kind == "induced":
        return Instance(induced_tuple(spec, cap, coeff_dim), kind, seed, gen)
    if kind == "conjugated":
        base = induced_tuple(spec, cap, coeff_dim)
        U = haar_unitary(base.dim, rng)
        return Instance(conjugate_tuple(base, U), kind, seed, gen)
    from .multianalytic import multiplier_from_symbol
    B, syms = inner_symbols(spec, cap, coeff_dim, rng)
    S = induced_tuple(spec, cap, basis=B)
    maps = [S.maps[0]] + [multiplier_from_symbol(s, S) for s in syms]
    tup = CovariantTuple(B, maps, [0] + [s.factor for s in syms], "multiplier-extended")
    rep = check_axioms(tup, ("doubly_commuting",))
    gen["doubly_commuting_residual"] = rep.doubly_commuting
    gen["doubly_commuting"] = bool(rep.doubly_commuting < 1e-10 and not rep.unverifiable)
    return Instance(tup, kind, seed, gen, [{"factor": s.factor, "block": s.block} for s in syms])


def gen_invariant_subspace(tup, g=2, seed=0, vectors=None, band=None):
    """Saturated clipped orbit of ``g`` seeded random vectors (or of ``vectors``).

    Random vectors are supported on total degrees ``band = (lo, hi)`` (in the
    tuple's grading).  The default is a single degree drawn from ``{1, 2}``
    (kept below the smallest cap entry): a proper subspace whose truncated
    wandering vectors stay homogeneous, so the symbol checks are not vacuous.
    Returns ``(frame, info)``.
    """
    from .invariant import orbit_span

    rng = make_rng(seed, 1)
    info = {"generators": int(g), "seed": int(seed)}
    if vectors is None:
        deg = tup.basis.coord_degrees.sum(axis=1)
        if band is None:
            top = max(1, min(2, min(tup.cap) - 1))
            lo = int(rng.integers(1, top + 1))
            band = (lo, lo)
        mask = (deg >= band[0]) & (deg <= band[1])
        if not mask.any():
            mask[:] = True
        G = rng.normal(size=(tup.dim, g)) + 1j * rng.normal(size=(tup.dim, g))
        G[~mask] = 0
        vectors = tup.from_model(G)
        info["band"] = list(band)
    F = orbit_span(tup, vectors)
    info["dim"] = F.dim
    info["saturated_full"] = F.dim == tup.dim
    return F, info


def frame_from_json(obj, basis=None):
    """Frame from ``{"columns": <matrix>}`` or a bare encoded matrix."""
    enc = obj.get("columns", obj.get("frame", obj))
    return Frame(basis, decode_matrix(enc))


def model_frame(tup, frame):
    """``(ungraded tuple, frame)`` expressed in the tuple's grading coordinates."""
    if tup.grading is None:
        return tup, frame
    U = tup.grading
    back = conjugate_tuple(tup, U.conj().T)
    back = CovariantTuple(tup.basis, back.maps, tup.factors, tup.provenance, None)
    return back, Frame(tup.basis, U.conj().T @ frame.columns)


# -- reports ------------------------------------------------------------------------

WALL_FIELDS = ("wall_time", "total_wall_time")


@dataclass
class Report:
    """Per-check verdicts with defects and windows; ``passed`` is the conjunction."""

    instance_digest: str | None = None
    checks: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, name, verdict, defect=None, window=None, wall_time=None, **details):
        if verdict not in ("pass", "fail", "indeterminate", "vacuous"):
            raise ValueError(verdict)
        self.checks.append({"check": name, "verdict": verdict, "defect": defect,
                            "window": None if window is None else [int(x) for x in window],
                            "wall_time": wall_time, **details})

    @property
    def passed(self):
        return all(c["verdict"] in ("pass", "vacuous") for c in self.checks)

    def to_json(self):
        return {"tool": "fockmod", "version": __version__, "instance_digest": self.instance_digest,
                "passed": self.passed, **self.meta, "checks": self.checks}

    def dumps(self):
        return dumps(self.to_json(), indent=1)


def strip_wall_times(obj):
    """Copy of a report with wall-time fields removed (for determinism comparisons)."""
    if isinstance(obj, dict):
        return {k: strip_wall_times(v) for k, v in obj.items() if k not in WALL_FIELDS}
    if isinstance(obj, list):
        return [strip_wall_times(v) for v in obj]
    return obj


def _v(defect, tol):
    from .invariant import verdict
    return verdict(defect, tol)


class _Timer:
    def __enter__(self):
        self.t = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t


# -- oracle driver ------------------------------------------------------------------

ORACLE_CHECKS = ("creation", "multiplier", "isometry", "commutation", "wold", "symbol", "blh")
FORMULAS = {
    "creation": "S(e_a)(xi_n (x) h) = (insert e_a, flip past lower factors)",
    "multiplier": "M_Theta(xi)(xi_n (x) h) = S_n (I (x) Theta)(t (x) I)(xi (x) xi_n (x) h)",
    "isometry": "V(e_a)^* V(e_b) = <e_a, e_b> I",
    "commutation": "V^i (I (x) V^j) = V^j (I (x) V^i)(t_ij (x) I)",
    "wold": "Pi^*(e_w (x) w) = V_n(e_w (x) w)",
    "symbol": "Theta(xi) = sum_n S_n (I (x) P_W) V_n^* V^(k+1)(xi)|_W",
    "blh": "Phi_i(xi) = sum_n S^W_n (I (x) P_W P_M) S_n^* M_Theta_i(xi)|_W",
}
ORACLE_TOL = 1e-8


def inject_fault(instance, map_index=0, entry=None, delta=1e-3):
    """Copy of ``instance`` with one matrix entry of one map perturbed."""
    obj = instance.to_json()
    enc = obj["tuple"]["maps"][map_index]
    r, c = enc["shape"]
    if entry is None:
        mat = decode_matrix(enc)
        nz = np.argwhere(np.abs(mat) > 0.5)
        entry = tuple(int(x) for x in (nz[0] if nz.size else (0, 0)))
    k = entry[0] * c + entry[1]
    enc["data"][k][0] += delta
    obj["generator"] = dict(obj["generator"], fault={"map": map_index + 1, "entry": list(entry), "delta": delta})
    return Instance.from_json(json.loads(dumps(obj)))


def oracle_verify(instance, checks=ORACLE_CHECKS, tol=ORACLE_TOL):
    """Recompute each requested quantity literally and compare with the fast path."""
    from .invariant import blh_factorize
    from .multianalytic import extract_symbol, multiplier_from_symbol, Symbol
    from .wold import wold_unitary

    rep = Report(instance.digest(), meta={"mode": "oracle"})
    tup = instance.tuple
    B = tup.basis
    stored = {f: dense(op.matrix) for op, f in zip(tup.maps, tup.factors)}
    G = tup.grading

    def model(mat):
        if G is None:
            return mat
        N = B.dim
        d = mat.shape[1] // N
        return np.hstack([G.conj().T @ mat[:, a * N:(a + 1) * N] @ G for a in range(d)])

    def record(name, disc, arg=None, skipped=None, **extra):
        if skipped:
            rep.add(name, "vacuous", None, None, None, formula=FORMULAS[name], skipped=skipped)
            return
        bad = disc >= tol
        label = None
        if arg is not None:
            words, c = B.label(int(arg)) if arg < B.dim else (None, None)
            label = {"index": int(arg), "words": [list(w) for w in words] if words else None, "coeff": c}
        rep.add(name, "fail" if bad else "pass", float(disc), None, None, formula=FORMULAS[name],
                mismatch=bool(bad), basis_vector=label, **extra)

    for name in checks:
        if name not in ORACLE_CHECKS:
            raise DomainError(f"unknown oracle check {name!r}")
        if name == "creation":
            if tup.provenance not in ("induced", "conjugated"):
                record(name, 0.0, skipped="tuple is not built from creation operators")
                continue
            worst, arg = 0.0, None
            for f in tup.factors:
                D = np.abs(model(stored[f]) - lit.creation_literal(B, f))
                if D.max() > worst:
                    worst, arg = float(D.max()), int(np.unravel_index(D.argmax(), D.shape)[1] % B.dim)
            record(name, worst, arg)
        elif name == "multiplier":
            if not instance.symbols:
                record(name, 0.0, skipped="no stored symbols")
                continue
            worst, arg = 0.0, None
            S = induced_tuple(B.spec, B.cap, basis=B)
            for s in instance.symbols:
                L = lit.multiplier_literal(B, s["factor"], s["block"])
                fast = dense(multiplier_from_symbol(Symbol(B, s["factor"], s["block"]), S).matrix)
                for D in (np.abs(L - stored[s["factor"]]), np.abs(L - fast)):
                    if D.max() > worst:
                        worst, arg = float(D.max()), int(np.unravel_index(D.argmax(), D.shape)[1] % B.dim)
            record(name, worst, arg)
        elif name == "isometry":
            # literal values are entrywise maxima, the fast path reports operator norms:
            # they are compared through their verdicts
            worst, arg, gap = 0.0, None, 0.0
            for k, (op, f) in enumerate(zip(tup.maps, tup.factors)):
                win = B.window_indices(op.valid_window)
                val, where = lit.isometry_literal(model(stored[f]), op.letter_dim, win)
                fast, _ = isometry_residual(tup, k)
                if fast is not None and (fast < tol) != (val < tol):
                    gap = max(gap, abs(fast - val))
                if val > worst:
                    worst, arg = val, where
            record(name, max(worst, gap), arg, identity_defect=worst, fast_path_disagreement=gap)
        elif name == "commutation":
            worst, arg, gap = 0.0, None, 0.0
            for i in range(len(tup.maps)):
                for j in range(i + 1, len(tup.maps)):
                    fi, fj = tup.factors[i], tup.factors[j]
                    fast, win = commuting_residual(tup, i, j)
                    if fast is None:
                        continue
                    val, where = lit.commutation_literal(B.spec, model(stored[fi]), fi, model(stored[fj]), fj,
                                                         B.window_indices(win))
                    if (fast < tol) != (val < tol):
                        gap = max(gap, abs(fast - val))
                    if val > worst:
                        worst, arg = val, where
            record(name, max(worst, gap), arg, identity_defect=worst, fast_path_disagreement=gap)
        elif name in ("wold", "symbol"):
            if len(tup.maps) < 2 and name == "symbol":
                record(name, 0.0, skipped="needs at least two factors")
                continue
            first = CovariantTuple(B, list(tup.maps[:-1]), list(tup.factors[:-1]), tup.provenance, tup.grading)
            try:
                wd = wold_unitary(first, gate=False)
            except Exception as exc:  # noqa: BLE001 - reported, not raised
                record(name, 0.0, skipped=f"fast path failed: {exc}")
                continue
            maps = {f: stored[f] for f in first.factors}
            Wc = wd.wandering.columns
            if name == "wold":
                L = lit.wold_literal(maps, wd.model, Wc)
                D = np.abs(L - wd.adjoint_full)
                kern = max(np.abs(stored[f].conj().T @ Wc).max() for f in first.factors)
                record(name, float(max(D.max(), kern)))
            else:
                sym = extract_symbol(first, tup.maps[-1], wd, gate=False)
                L = lit.symbol_series_literal(maps, stored[tup.factors[-1]], tup.maps[-1].letter_dim, wd.model, Wc)
                record(name, float(np.abs(L - sym.block).max()))
        elif name == "blh":
            if not instance.subspaces:
                record(name, 0.0, skipped="no stored subspaces")
                continue
            worst, failed = 0.0, None
            for F, _ in instance.subspaces:
                amb, Fm = model_frame(tup, F)
                try:
                    fd = blh_factorize(Fm, amb)
                except Exception as exc:  # noqa: BLE001 - reported, not raised
                    failed = str(exc)
                    break
                shift = dense(amb.map_for(0).matrix)
                for sym in fd.phi_symbols:
                    theta = dense(amb.map_for(sym.factor).matrix)
                    L = lit.phi_series_literal(shift, theta, sym.letter_dim, fd.model, Fm.columns, fd.psi)
                    worst = max(worst, float(np.abs(L - sym.block).max()))
            if failed is not None:
                record(name, 0.0, skipped=f"fast path failed: {failed}")
            else:
                record(name, worst)
    return rep


# -- the verify suite ---------------------------------------------------------------

def run_verify(instance, tol=1e-8, seed=0, subspaces=2):
    """Every structural check on one instance; deterministic given ``seed``."""
    from .invariant import (
        blh_factorize, check_invariant, coincide_test, doubly_commuting_subspace_test,
        intertwining_lift, nested_test, normal_form,
    )
    from .multianalytic import extract_symbol, multiplier_from_symbol
    from .wold import wold_unitary, max_intertwining

    rep = Report(instance.digest(), meta={"mode": "verify", "seed": int(seed), "tol": tol})
    tup = instance.tuple
    t_all = time.perf_counter()

    with _Timer() as tm:
        ax = check_axioms(tup)
    worst = max(ax.isometric, ax.commuting, ax.doubly_commuting, ax.pure)
    rep.add("axioms", _v(worst, tol), worst, tup.cap, round(tm.elapsed, 6), residuals=ax.to_json())

    with _Timer() as tm:
        wd = wold_unitary(tup, gate=False)
    wres = max(wd.residuals["gram"], wd.residuals["block_orthogonality"], max_intertwining(wd))
    rep.add("wold", _v(wres, tol), wres, wd.window, round(tm.elapsed, 6),
            wandering_dim=wd.wandering.dim, residuals=wd.residuals)

    if len(tup.maps) >= 2:
        with _Timer() as tm:
            first = CovariantTuple(tup.basis, list(tup.maps[:-1]), list(tup.factors[:-1]), tup.provenance,
                                   tup.grading)
            wf = wold_unitary(first, gate=False)
            sym = extract_symbol(first, tup.maps[-1], wf, gate=False)
            M = multiplier_from_symbol(sym)
            Pi = wf.unitary.dense()
            N, Nm = tup.dim, wf.model.dim
            idx = wf.model.window_indices(M.valid_window)
            idx = idx[np.isin(idx, wf.exact)]
            ref = np.hstack([Pi @ dense(tup.maps[-1].slab(a)) @ wf.adjoint_full[:, idx]
                             for a in range(M.letter_dim)])
            got = np.hstack([dense(M.slab(a))[:, idx] for a in range(M.letter_dim)])
            d = opnorm(ref - got) if idx.size else None
        rep.add("symbol_roundtrip", _v(d, tol), d, M.valid_window, round(tm.elapsed, 6))

        with _Timer() as tm:
            nf = normal_form(tup, 1, gate=False)
        vals = [v for v in nf.residuals.values() if v is not None]
        d = max(vals) if vals else None
        rep.add("normal_form", _v(d, tol), d, tup.cap, round(tm.elapsed, 6), residuals=nf.residuals)

    amb, _ = model_frame(tup, Frame(tup.basis, np.zeros((tup.dim, 0))))
    frames = [F for F, _ in instance.subspaces]
    for k in range(max(0, subspaces - len(frames))):
        F, _ = gen_invariant_subspace(tup, 2, seed * 1000 + k)
        frames.append(F)
    facts = []
    for k, F in enumerate(frames):
        _, Fm = model_frame(tup, F)
        with _Timer() as tm:
            inv = check_invariant(Fm, amb, tol)
            fd = blh_factorize(Fm, amb, gate=False)
        facts.append(fd)
        r = fd.residuals
        keys = ["range_defect", "inner_isometry_defect", "inner_wandering_defect"] + \
            [k2 for k2 in r if k2.startswith("phi_formula") or k2.startswith("intertwining")]
        vals = [inv.defect] + [r[k2] for k2 in keys if r.get(k2) is not None]
        d = max(vals)
        rep.add(f"factorize[{k}]", _v(d, tol), d, fd.window, round(tm.elapsed, 6),
                subspace_dim=F.dim, wandering_dim=fd.psi.shape[1], residuals=r, flags=fd.flags)
        if fd.phi_symbols:
            dc = doubly_commuting_subspace_test(fd, tol)
            rep.add(f"doubly_commuting_subspace[{k}]", "pass" if dc.details["agree"] else "fail", dc.defect,
                    fd.window, None, doubly_commuting=dc.ok, details=dc.details)
            lift = intertwining_lift(Fm, amb, tol, reference=fd)
            agree = [v for kk, v in lift.details.items() if kk.startswith("phi_agreement") and v is not None]
            da = max([lift.defect] + agree)
            rep.add(f"lift[{k}]", _v(da, tol), da, lift.window, None, details=lift.details)
            Z0 = haar_unitary(fd.model.coeff_dim, make_rng(seed, 2, k))
            co = coincide_test(fd.system(), fd.system().conjugated(Z0), tol)
            rep.add(f"coincide[{k}]", "pass" if co.ok else "fail", co.defect, None, None, details=co.details)
    for a in range(len(facts)):
        for b in range(len(facts)):
            if a == b:
                continue
            nt = nested_test(facts[a], facts[b], tol)
            rep.add(f"nested[{a},{b}]", "pass" if nt.details["agree"] else "fail", nt.defect, nt.window, None,
                    contained=nt.ok, details=nt.details)
    rep.meta["total_wall_time"] = round(time.perf_counter() - t_all, 6)
    return rep
