"""Symbols, multiplier operators and the inner property."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import GradedBasis, deg_sub, reorder_tensor, word_space_dim
from .core import RESIDUAL_TOL, GradedOperator, dense, opnorm, support_degree
from .errors import DomainError, PreconditionError
from .fockrep import CovariantTuple, commuting_residual, induced_tuple, power_apply

INNER_TOL = 1e-8


@dataclass(eq=False)
class Symbol:
    """A map ``Theta: E_j (x) K -> F(E) (x) K'`` stored as a matrix.

    ``basis`` is the truncated ``F(E) (x) K'``; ``block`` has shape
    ``(basis.dim, d_j * m)`` with column ``a*m + c`` holding
    ``Theta(e_a (x) k_c)``.  The degree-``n`` rows are the ``n``-th Fourier
    coefficient.
    """

    basis: GradedBasis
    factor: int
    block: np.ndarray
    source_degrees: np.ndarray | None = None

    def __post_init__(self):
        self.block = np.asarray(self.block, dtype=complex)
        d = self.basis.spec.dims[self.factor]
        if self.block.shape[0] != self.basis.dim or self.block.shape[1] % d:
            raise DomainError(f"symbol block has shape {self.block.shape}, incompatible with {self.basis}")
        if self.source_degrees is None:
            self.source_degrees = np.zeros((self.source_dim, self.basis.r), dtype=np.int64)

    @property
    def letter_dim(self):
        return self.basis.spec.dims[self.factor]

    @property
    def source_dim(self):
        return self.block.shape[1] // self.letter_dim

    def coefficient(self, n):
        """Rows of the degree-``n`` Fourier coefficient."""
        return self.block[self.basis.block_slice(tuple(n))]

    def isometry_defect(self):
        return opnorm(self.block.conj().T @ self.block - np.eye(self.block.shape[1]))

    def degree_shift(self):
        """Largest ``(row degree) - (input degree)`` over the nonzero entries."""
        rows, cols = np.nonzero(np.abs(self.block) > 1e-12)
        if rows.size == 0:
            return (0,) * self.basis.r
        diff = self.basis.coord_degrees[rows] - self.source_degrees[cols % self.source_dim]
        return tuple(int(x) for x in diff.max(axis=0))

    def to_json(self):
        from .harness import encode_matrix
        return {"factor": self.factor + 1, "basis": self.basis.to_json(), "block": encode_matrix(self.block),
                "source_degrees": self.source_degrees.tolist()}


def _shifts_for(symbol, shifts):
    if shifts is None:
        return induced_tuple(symbol.basis.spec, symbol.basis.cap, basis=symbol.basis)
    if not shifts.basis.same_as(symbol.basis):
        raise DomainError("symbol and shift tuple live on different bases")
    return shifts


def multiplier_from_symbol(symbol, shifts=None):
    """``M_Theta = sum_n S_n (I (x) Theta) R_{j,n}``, a map ``E_j (x) H -> H``.

    ``H = F(E) (x) K`` is ``symbol.basis`` (when the symbol's source and
    target coefficient spaces agree).  ``R_{j,n}`` moves the ``E_j`` letter
    past a degree-``n`` word.  The result is exact on inputs of degree
    ``<= cap - degree_shift``.
    """
    S = _shifts_for(symbol, shifts)
    B = symbol.basis
    j, d, m = symbol.factor, symbol.letter_dim, symbol.source_dim
    if m != B.coeff_dim:
        raise DomainError("multiplier needs a symbol whose source and target coefficient spaces agree")
    if j in S.factors:
        raise DomainError(f"symbol factor {j} must lie outside the shift factors {S.factors}")
    N = B.dim
    M = np.zeros((N, d * N), dtype=complex)
    for n in B.degrees:
        D = word_space_dim(B.spec, n)
        T = power_apply(S, n, symbol.block)  # (D, N, d*m): S_w Theta
        T = T.reshape(D, N, d, m).transpose(0, 2, 1, 3).reshape(D * d, N * m)
        R = reorder_tensor(B.spec, j, n)  # rows w'*d + a', cols a*D + w
        out = (R.T @ T).reshape(d, D, N, m).transpose(0, 2, 1, 3).reshape(d, N, D * m)
        sl = B.block_slice(n)
        for a in range(d):
            M[:, a * N + sl.start:a * N + sl.stop] = out[a]
    shift = symbol.degree_shift()
    return GradedOperator(B, B, M, d, shift, deg_sub(B.cap, shift), name=f"M_Theta{j}")


def extract_symbol(first_k, extra, wold, terms="series", gate=True, tol=RESIDUAL_TOL):
    """Symbol of ``Pi V^(extra) (I (x) Pi^*)`` read off on ``E_j (x) W``.

    ``first_k`` is the covariant tuple whose Wold data is ``wold``;
    ``extra`` is the additional map (a GradedOperator on the same space)
    for factor ``j``.  ``terms="series"`` uses every Fourier block,
    ``terms="n0"`` keeps only the degree-zero one.
    """
    j = _factor_of(first_k, extra)
    if gate:
        both = CovariantTuple(first_k.basis, list(first_k.maps) + [extra], list(first_k.factors) + [j],
                              "external", first_k.grading)
        for f in first_k.factors:
            res, _ = commuting_residual(both, len(both.maps) - 1, both.factors.index(f))
            if res is None:
                raise PreconditionError(f"commutation with factor {f} is unverifiable at this cap")
            if res >= tol:
                raise PreconditionError(f"extra map does not commute with factor {f}: residual {res:.3g}", res)
    W = wold.wandering.columns
    Y = extra.apply_letters(W)  # (d, N, dimW)
    d, _, p = Y.shape
    Pi = wold.adjoint_full.conj().T
    if terms == "n0":
        keep = np.zeros(wold.model.dim, dtype=bool)
        keep[wold.model.block_slice((0,) * first_k.spec.r)] = True
        Pi = np.where(keep[:, None], Pi, 0)
    elif terms != "series":
        raise ValueError(f"unknown terms {terms!r}")
    block = (Pi @ Y.transpose(1, 0, 2).reshape(-1, d * p))
    # column a*p + c
    src = support_degree(first_k.to_model(W), first_k.basis.coord_degrees, tol=1e-9)
    return Symbol(wold.model, j, block, src)


def _factor_of(tup, op):
    dims = tup.spec.dims
    cands = [f for f in range(tup.spec.r) if f not in tup.factors and dims[f] == op.letter_dim]
    if op.degree_shift is not None:
        nz = [f for f, k in enumerate(op.degree_shift) if k]
        if len(nz) == 1 and nz[0] in cands:
            return nz[0]
    if not cands:
        raise DomainError("cannot infer which correspondence the extra map belongs to")
    return cands[0]


@dataclass
class WanderingMultiplier:
    """``M_Psi = sum_n T_n (I (x) Psi) V_n^*`` and its truncation data.

    ``orbit`` has one column ``T_n(e_w (x) Psi w_c)`` per coordinate of the
    model ``F(E) (x) W``, clipped ones included; ``exact`` lists the model
    coordinates whose column is exact at the target's cap.
    """

    model: GradedBasis
    orbit: np.ndarray
    exact: np.ndarray
    operator: GradedOperator

    @property
    def orbit_exact(self):
        return self.orbit[:, self.exact]


def multiplier_from_wandering_map(psi, source, target):
    """Multiplier ``H_source -> H_target`` induced by ``Psi: W -> H_target``.

    ``source`` is either a WoldData (the map is then ``orbit . Pi``) or a
    GradedBasis for a model ``F(E) (x) W`` (the map acts on it directly).
    """
    psi = dense(psi).astype(complex)
    if isinstance(source, GradedBasis):
        model, Pi = source, None
    else:
        model, Pi = source.model, source.unitary.dense()
    if psi.shape != (target.dim, model.coeff_dim):
        raise DomainError(f"Psi has shape {psi.shape}, expected {(target.dim, model.coeff_dim)}")
    sub = CovariantTuple(target.basis, [target.map_for(f) for f in model.factors], model.factors,
                         target.provenance, target.grading)
    orbit = np.zeros((target.dim, model.dim), dtype=complex)
    for n in model.degrees:
        T = power_apply(sub, n, psi)
        D, N, p = T.shape
        orbit[:, model.block_slice(n)] = T.transpose(1, 0, 2).reshape(N, D * p)
    deg_psi = support_degree(target.to_model(psi), target.basis.coord_degrees, tol=1e-9)
    total = model.fock_degrees + deg_psi[model.coeff_index]
    exact = np.nonzero(np.all(total <= np.asarray(target.cap), axis=1))[0]
    X = np.zeros_like(orbit)
    X[:, exact] = orbit[:, exact]
    if Pi is None:
        op = GradedOperator(model, target.basis, X, name="M_Psi")
    else:
        op = GradedOperator(source.tuple.basis, target.basis, X @ Pi, name="M_Psi")
    return WanderingMultiplier(model, orbit, exact, op)


@dataclass
class InnerReport:
    inner: bool
    isometry_defect: float
    wandering_defect: float

    def to_json(self):
        return {"inner": self.inner, "isometry_defect": self.isometry_defect,
                "wandering_defect": self.wandering_defect}


def is_inner(psi, target, factors=None, tol=INNER_TOL):
    """``Psi`` isometric with range wandering for ``target`` restricted to ``factors``."""
    psi = dense(psi).astype(complex)
    iso = opnorm(psi.conj().T @ psi - np.eye(psi.shape[1]))
    U, s, _ = np.linalg.svd(psi, full_matrices=False)
    Q = U[:, s > 1e-10]
    factors = target.factors if factors is None else tuple(factors)
    sub = CovariantTuple(target.basis, [target.map_for(f) for f in factors], factors,
                         target.provenance, target.grading)
    basis = GradedBasis(target.spec, target.cap, 1, factors)
    wand = 0.0
    for n in basis.degrees:
        if not any(n):
            continue
        T = power_apply(sub, n, Q)
        wand = max(wand, opnorm(np.einsum("Ni,DNj->Dij", Q.conj(), T).reshape(-1, Q.shape[1])))
    return InnerReport(bool(iso < tol and wand < tol), iso, wand)


def multiplier_isometry_defect(op, window=None):
    """``||M^* M - I||`` on inputs of degree ``<= window`` (default: the op's window)."""
    w = op.valid_window if window is None else window
    idx = op.domain.window_indices(w)
    N = op.domain.dim
    cols = np.concatenate([a * N + idx for a in range(op.letter_dim)])
    Mx = dense(op.matrix)[:, cols]
    return opnorm(Mx.conj().T @ Mx - np.eye(cols.size))
