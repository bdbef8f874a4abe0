"""Covariant tuples on truncated Fock spaces and their structural axioms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .basis import (
    GradedBasis, deg_add, deg_le, deg_sub, flip_apply, insertion_map, is_nonneg,
    letters_of, unit, word_space_dim,
)
from .core import GradedOperator, chain_window, dense, opnorm, window_is_empty
from .errors import DomainError

PROVENANCES = ("induced", "conjugated", "multiplier-extended", "external")


class CovariantTuple:
    """A family of maps ``V^(f): E_f (x) H -> H`` on a graded space.

    ``factors[k]`` names the correspondence of ``maps[k]``.  ``grading`` is
    a unitary whose column ``p`` is the vector of ``H`` playing the role of
    basis vector ``p`` of ``basis`` (``None`` means the identity); windows are
    read through it, so a tuple conjugated by ``U`` keeps its windows.
    """

    def __init__(self, basis, maps, factors, provenance="external", grading=None):
        if provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {provenance!r}")
        if len(maps) != len(factors):
            raise ValueError("one factor index per map is required")
        for op, f in zip(maps, factors):
            if op.letter_dim != basis.spec.dims[f]:
                raise ValueError(f"map for factor {f} has {op.letter_dim} letters, expected {basis.spec.dims[f]}")
        self.basis = basis
        self.maps = tuple(maps)
        self.factors = tuple(int(f) for f in factors)
        self.provenance = provenance
        self.grading = grading

    @property
    def spec(self):
        return self.basis.spec

    @property
    def cap(self):
        return self.basis.cap

    @property
    def dim(self):
        return self.basis.dim

    def map_for(self, f):
        try:
            return self.maps[self.factors.index(f)]
        except ValueError:
            raise DomainError(f"factor {f} is not part of this tuple") from None

    def window_columns(self, window):
        """Columns of ``H`` spanning the degrees ``<= window`` (in this tuple's grading)."""
        idx = self.basis.window_indices(window)
        if self.grading is None:
            X = np.zeros((self.dim, idx.size), dtype=complex)
            X[idx, np.arange(idx.size)] = 1.0
            return X
        return np.asarray(self.grading)[:, idx]

    def to_model(self, X):
        """Coordinates of ``X`` in the grading basis."""
        if self.grading is None:
            return dense(X)
        return self.grading.conj().T @ dense(X)

    def from_model(self, X):
        if self.grading is None:
            return dense(X)
        return self.grading @ dense(X)

    def with_maps(self, maps, factors=None, provenance=None):
        return CovariantTuple(self.basis, maps, self.factors if factors is None else factors,
                              provenance or self.provenance, self.grading)

    def __repr__(self):
        return f"CovariantTuple({self.provenance}, factors={self.factors}, basis={self.basis})"


def creation_operator(basis, i):
    """Truncated creation operator ``S^(i): E_i (x) H -> H`` as a sparse GradedOperator."""
    spec = basis.spec
    if i not in basis.factors:
        raise DomainError(f"factor {i} is not carried by the Fock part of this basis")
    N = basis.dim
    m = basis.coeff_dim
    d = spec.dims[i]
    e = unit(i, spec.r)
    rows, cols, vals = [], [], []
    cidx = np.arange(m)
    for n in basis.degrees:
        up = deg_add(n, e)
        if not basis.contains_degree(up):
            continue
        Imap = sp.coo_matrix(insertion_map(spec, i, n))
        Dn = word_space_dim(spec, n)
        a, w = np.divmod(Imap.col, Dn)
        row0 = basis.offset(up) + Imap.row * m
        col0 = a * N + basis.offset(n) + w * m
        rows.append((row0[:, None] + cidx[None, :]).ravel())
        cols.append((col0[:, None] + cidx[None, :]).ravel())
        vals.append(np.repeat(Imap.data, m))
    if rows:
        mat = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(N, d * N), dtype=complex)
    else:
        mat = sp.csc_matrix((N, d * N), dtype=complex)
    return GradedOperator(basis, basis, mat, d, e, deg_sub(basis.cap, e), name=f"S{i}")


def induced_tuple(spec, cap, coeff_dim=1, factors=None, basis=None):
    """Creation operators on ``F(E) (x) C^m`` truncated at ``cap``."""
    if basis is None:
        basis = GradedBasis(spec, cap, coeff_dim, factors)
    fs = basis.factors if factors is None else tuple(factors)
    return CovariantTuple(basis, [creation_operator(basis, f) for f in fs], fs, "induced")


def conjugate_tuple(tup, U, provenance="conjugated"):
    """The tuple ``U V^(f) (I (x) U^*)`` with grading transported by ``U``."""
    U = np.asarray(U, dtype=complex)
    Uh = U.conj().T
    maps = []
    for op in tup.maps:
        slabs = [U @ dense(op.slab(a)) @ Uh for a in range(op.letter_dim)]
        maps.append(op.with_matrix(np.hstack(slabs), name=op.name + "'"))
    grading = U if tup.grading is None else U @ tup.grading
    return CovariantTuple(tup.basis, maps, tup.factors, provenance, grading)


def power_apply(tup, n, X):
    """``V_n (I (x) X)`` as an array of shape ``(D_n, N, p)``.

    Entry ``w`` is ``V(e_{a_1}) ... V(e_{a_L}) X`` where ``a_1 .. a_L`` are
    the letters of the ``w``-th word of ``E(n)`` in canonical order.
    """
    X = dense(X)
    if X.ndim == 1:
        X = X[:, None]
    T = X[None].astype(complex)
    for f in reversed(letters_of(n)):
        op = tup.map_for(f)
        D, N, p = T.shape
        flat = T.transpose(1, 0, 2).reshape(N, D * p)
        out = np.stack([np.asarray(op.slab(a) @ flat).reshape(op.codomain.dim, D, p).transpose(1, 0, 2)
                        for a in range(op.letter_dim)])
        T = out.reshape(op.letter_dim * D, op.codomain.dim, p)
    return T


def compose_power(tup, n):
    """``V_n: E(n) (x) H -> H`` with window ``cap - n``."""
    n = tuple(int(x) for x in n)
    if len(n) != tup.spec.r or not is_nonneg(n):
        raise DomainError(f"bad degree {n}")
    if not deg_le(n, tup.cap):
        raise DomainError(f"degree {n} exceeds cap {tup.cap}")
    if any(k and f not in tup.factors for f, k in enumerate(n)):
        raise DomainError(f"degree {n} uses factors outside the tuple")
    N = tup.dim
    T = power_apply(tup, n, np.eye(N))
    D = T.shape[0]
    mat = T.transpose(1, 0, 2).reshape(N, D * N)
    return GradedOperator(tup.basis, tup.basis, mat, D, n, deg_sub(tup.cap, n), name=f"V{n}")


# -- axioms ------------------------------------------------------------------

@dataclass
class AxiomReport:
    """Residuals of the four structural identities, each on its window."""

    isometric: float = 0.0
    commuting: float = 0.0
    doubly_commuting: float = 0.0
    pure: float = 0.0
    items: dict = field(default_factory=dict)
    windows: dict = field(default_factory=dict)
    unverifiable: list = field(default_factory=list)

    CATEGORIES = ("isometric", "commuting", "doubly_commuting", "pure")

    def record(self, category, key, residual, window):
        name = f"{category}{key}"
        self.windows[name] = tuple(int(x) for x in window) if window is not None else None
        if residual is None:
            self.unverifiable.append(name)
            self.items[name] = None
            return
        self.items[name] = float(residual)
        setattr(self, category, max(getattr(self, category), float(residual)))

    def passed(self, tol=1e-10, require=CATEGORIES):
        for cat in require:
            if getattr(self, cat) >= tol:
                return False
            if any(u.startswith(cat) for u in self.unverifiable):
                return False
        return True

    def to_json(self):
        return {
            "isometric": self.isometric,
            "commuting": self.commuting,
            "doubly_commuting": self.doubly_commuting,
            "pure": self.pure,
            "items": self.items,
            "windows": {k: (list(v) if v is not None else None) for k, v in self.windows.items()},
            "unverifiable": list(self.unverifiable),
        }


def _as_matrix(blocks):
    """Stack an array ``(k, N, p)`` into an ``N x (k p)`` matrix."""
    k, N, p = blocks.shape
    return blocks.transpose(1, 0, 2).reshape(N, k * p)


def isometry_residual(tup, k):
    op = tup.maps[k]
    win = op.valid_window
    if window_is_empty(win):
        return None, win
    G = tup.window_columns(win)
    if G.shape[1] == 0:
        return None, win
    A = _as_matrix(op.apply_letters(G))
    return opnorm(A.conj().T @ A - np.eye(A.shape[1])), win


def commuting_residual(tup, i, j):
    """Defect of ``V^i (I (x) V^j) = V^j (I (x) V^i)(t_{i,j} (x) I)``."""
    Vi, Vj = tup.maps[i], tup.maps[j]
    fi, fj = tup.factors[i], tup.factors[j]
    win = chain_window([(Vj.degree_shift, Vj.valid_window), (Vi.degree_shift, Vi.valid_window)])
    win2 = chain_window([(Vi.degree_shift, Vi.valid_window), (Vj.degree_shift, Vj.valid_window)])
    win = tuple(min(a, b) for a, b in zip(win, win2))
    if window_is_empty(win):
        return None, win
    G = tup.window_columns(win)
    if G.shape[1] == 0:
        return None, win
    di, dj = Vi.letter_dim, Vj.letter_dim
    N, p = G.shape
    inner_j = Vj.apply_letters(G)                                   # (dj, N, p)
    L = np.stack([Vi.apply_letters(inner_j[b]) for b in range(dj)])  # (dj, di, N, p)
    L = L.transpose(1, 0, 2, 3).reshape(di * dj, N, p)              # index a*dj + b
    inner_i = Vi.apply_letters(G)                                   # (di, N, p)
    P = np.stack([Vj.apply_letters(inner_i[a]) for a in range(di)])  # (di, dj, N, p)
    P = P.transpose(1, 0, 2, 3).reshape(dj * di, N * p)             # index b'*di + a'
    t = flip_apply(tup.spec, fj, fi)                                # t_{i,j}: E_i E_j -> E_j E_i
    R = (t.T @ P).reshape(di * dj, N, p)
    return opnorm(_as_matrix(L - R)), win


def doubly_commuting_residual(tup, i, j):
    """Defect of ``V^{i*} V^j = (I (x) V^j)(t_{j,i} (x) I)(I (x) V^{i*})`` on ``E_j (x) H``."""
    Vi, Vj = tup.maps[i], tup.maps[j]
    fi, fj = tup.factors[i], tup.factors[j]
    win = Vj.valid_window
    if window_is_empty(deg_sub(win, Vi.degree_shift)):
        return None, win
    G = tup.window_columns(win)
    if G.shape[1] == 0:
        return None, win
    di, dj = Vi.letter_dim, Vj.letter_dim
    N, p = G.shape
    adj_i = [Vi.slab(a).conj().T for a in range(di)]
    VjG = Vj.apply_letters(G)                                            # (dj, N, p)
    L = np.stack([np.stack([adj_i[a] @ VjG[b] for b in range(dj)]) for a in range(di)])
    Y = np.stack([adj_i[a] @ G for a in range(di)])                     # (di, N, p)
    Z = np.stack([Vj.apply_letters(Y[a]) for a in range(di)])           # (di, dj, N, p)
    Z = Z.transpose(1, 0, 2, 3)                                         # [b'', a']
    t = flip_apply(tup.spec, fi, fj).reshape(di, dj, dj, di)           # t_{j,i}[a, b'', b, a']
    R = np.einsum("xybz,yzNp->xbNp", t, Z)
    D = (L - R).reshape(di * dj, N, p)
    return opnorm(_as_matrix(D)), win


def purity_residual(tup, k):
    """``||V_n V_n^*||`` for ``n = (cap_f + 1) e_f``; zero for a nilpotent truncation."""
    op = tup.maps[k]
    f = tup.factors[k]
    N = tup.dim
    Q = sp.identity(N, dtype=complex, format="csc") if op.is_sparse else np.eye(N, dtype=complex)
    for _ in range(tup.cap[f] + 1):
        acc = None
        for a in range(op.letter_dim):
            V = op.slab(a)
            term = V @ Q @ V.conj().T
            acc = term if acc is None else acc + term
        Q = acc
    return opnorm(Q)


def check_axioms(tup, categories=AxiomReport.CATEGORIES):
    """Residuals of isometry, flip-commutation, double commutation and purity."""
    rep = AxiomReport()
    K = len(tup.maps)
    if "isometric" in categories:
        for k in range(K):
            res, win = isometry_residual(tup, k)
            rep.record("isometric", f"[{tup.factors[k]}]", res, win)
    if "commuting" in categories:
        for i in range(K):
            for j in range(i + 1, K):
                res, win = commuting_residual(tup, i, j)
                rep.record("commuting", f"[{tup.factors[i]},{tup.factors[j]}]", res, win)
    if "doubly_commuting" in categories:
        for i in range(K):
            for j in range(K):
                if i != j:
                    res, win = doubly_commuting_residual(tup, i, j)
                    rep.record("doubly_commuting", f"[{tup.factors[i]},{tup.factors[j]}]", res, win)
    if "pure" in categories:
        for k in range(K):
            rep.record("pure", f"[{tup.factors[k]}]", purity_residual(tup, k), tup.cap)
    return rep
