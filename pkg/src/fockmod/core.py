"""Graded operators, canonical frames and subspace algebra."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis import deg_add, deg_le, deg_min, deg_sub

RANK_TOL = 1e-10
RESIDUAL_TOL = 1e-8
PIVOT_TOL = 1e-6
ORTHO_TOL = 1e-12
_DENSE_NORM_LIMIT = 256


def dense(m):
    """Dense ``ndarray`` view of a dense or sparse matrix."""
    if sp.issparse(m):
        return m.toarray()
    return np.asarray(m)


def opnorm(m):
    """Spectral norm; zero for empty matrices."""
    if sp.issparse(m):
        if m.nnz == 0:
            return 0.0
        m = m.toarray()
    m = np.asarray(m)
    if m.size == 0 or not np.any(m):
        return 0.0
    if m.ndim == 1:
        return float(np.linalg.norm(m))
    if min(m.shape) <= _DENSE_NORM_LIMIT:
        # largest eigenvalue of the smaller Gram matrix: cheaper than an SVD
        G = m @ m.conj().T if m.shape[0] <= m.shape[1] else m.conj().T @ m
        return float(np.sqrt(max(np.linalg.eigvalsh(G)[-1], 0.0)))
    scale = np.abs(m).max()
    try:
        s = spla.svds(m / scale, k=1, tol=1e-10, return_singular_vectors=False, random_state=0)
        return float(s[0] * scale)
    except spla.ArpackNoConvergence:
        return float(np.linalg.norm(m, 2))


# -- windows ---------------------------------------------------------------

def chain_window(steps):
    """Largest input degree keeping a chain of maps exact.

    ``steps`` lists ``(shift, window)`` pairs in the order the maps are
    applied.  An input of degree ``n`` is admissible when
    ``n + s_1 + ... + s_{k-1} <= w_k`` for every ``k``.
    """
    steps = list(steps)
    acc = tuple(0 for _ in steps[0][0])
    best = None
    for shift, window in steps:
        bound = deg_sub(window, acc)
        best = bound if best is None else deg_min(best, bound)
        acc = deg_add(acc, shift)
    return best


def window_is_empty(window):
    return any(x < 0 for x in window)


def support_degree(vectors, coord_degrees, tol=1e-12):
    """Componentwise maximum degree over the support of each column.

    Columns that vanish get degree ``-1`` in every factor.
    """
    v = dense(vectors)
    if v.ndim == 1:
        v = v[:, None]
    mask = np.abs(v) > tol
    r = coord_degrees.shape[1]
    out = np.full((v.shape[1], r), -1, dtype=np.int64)
    for j in range(v.shape[1]):
        rows = np.nonzero(mask[:, j])[0]
        if rows.size:
            out[j] = coord_degrees[rows].max(axis=0)
    return out


# -- graded operators --------------------------------------------------------

class GradedOperator:
    """A matrix between truncated Fock spaces with degree metadata.

    The domain is ``E^{letters} (x) H`` where ``H`` is spanned by
    ``domain``; ``letter_dim`` is the dimension of the extra tensor factor
    (1 for an ordinary operator, ``d_i`` for a map ``E_i (x) H -> H``).
    Inputs whose degree is ``<= valid_window`` are mapped without clipping.
    """

    def __init__(self, domain, codomain, matrix, letter_dim=1, degree_shift=None,
                 valid_window=None, name=""):
        self.domain = domain
        self.codomain = codomain
        self.letter_dim = int(letter_dim)
        shape = (codomain.dim, self.letter_dim * domain.dim)
        if matrix.shape != shape:
            raise ValueError(f"{name or 'operator'}: matrix shape {matrix.shape} != {shape}")
        if sp.issparse(matrix):
            matrix = matrix.tocsc()
        self.matrix = matrix
        r = domain.r
        self.degree_shift = tuple(degree_shift) if degree_shift is not None else (0,) * r
        if valid_window is None:
            valid_window = deg_sub(codomain.cap, tuple(max(0, s) for s in self.degree_shift))
        self.valid_window = tuple(valid_window)
        self.name = name

    @property
    def is_sparse(self):
        return sp.issparse(self.matrix)

    def slab(self, a):
        """``V(e_a)``: the operator obtained by fixing the letter ``a``."""
        N = self.domain.dim
        return self.matrix[:, a * N:(a + 1) * N]

    def slabs(self):
        return [self.slab(a) for a in range(self.letter_dim)]

    def apply_letters(self, X):
        """Stack ``[V(e_a) X for a]`` into an array of shape ``(letters, N_out, p)``."""
        X = dense(X)
        return np.stack([np.asarray(self.slab(a) @ X) for a in range(self.letter_dim)])

    def dense(self):
        return dense(self.matrix)

    def window_indices(self):
        return self.domain.window_indices(self.valid_window)

    def with_matrix(self, matrix, name=None):
        return GradedOperator(self.domain, self.codomain, matrix, self.letter_dim,
                              self.degree_shift, self.valid_window, name or self.name)

    def __repr__(self):
        return (f"GradedOperator({self.name!r}, letters={self.letter_dim}, "
                f"shape={self.matrix.shape}, shift={self.degree_shift}, window={self.valid_window})")


# -- frames ------------------------------------------------------------------

def _pivot_rows(C, tol=PIVOT_TOL):
    """Greedy row pivots: first rows whose residual against earlier picks exceeds ``tol``."""
    N, r = C.shape
    picks = []
    Q = np.zeros((r, 0), dtype=complex)
    for p in range(N):
        if len(picks) == r:
            break
        y = C[p].conj()
        res = y - Q @ (Q.conj().T @ y)
        nrm = np.linalg.norm(res)
        if nrm > tol:
            picks.append(p)
            Q = np.column_stack([Q, res / nrm])
    if len(picks) < r:
        # Leftover directions are smeared over many tiny rows: take the largest residuals.
        while len(picks) < r:
            R = C.conj() - (C.conj() @ Q) @ Q.conj().T
            norms = np.linalg.norm(R, axis=1)
            norms[picks] = -1.0
            p = int(np.argmax(norms))
            picks.append(p)
            Q = np.column_stack([Q, R[p] / norms[p]])
        picks.sort()
    return picks


def _max_entry_rows(C):
    mags = np.abs(C)
    top = mags.max(axis=0)
    rows = []
    for j in range(C.shape[1]):
        cand = np.nonzero(mags[:, j] >= top[j] * (1 - 1e-12))[0]
        rows.append(int(cand[0]))
    return rows


def is_canonical(C):
    """True when ``C`` already satisfies every defining property of the canonical form."""
    C = np.asarray(C)
    r = C.shape[1]
    if r == 0:
        return True
    if np.abs(C.conj().T @ C - np.eye(r)).max() > ORTHO_TOL:
        return False
    piv = _pivot_rows(C)
    for j, p in enumerate(piv):
        if np.any(C[p, j + 1:] != 0):
            return False
    rows = _max_entry_rows(C)
    for j, p in enumerate(rows):
        z = C[p, j]
        if z.imag != 0 or z.real <= 0:
            return False
    return True


def canonicalize(C, tol=RANK_TOL):
    """Canonical orthonormal basis of ``span(C)``.

    Singular values ``<= tol`` are discarded.  The surviving basis is
    rotated into echelon form (pivot rows chosen greedily from the top, the
    block on the pivot rows lower triangular) so that equal subspaces get
    equal bases; each column is then multiplied by the phase that makes its
    largest-magnitude entry positive real, ties going to the lowest row.
    """
    C = np.asarray(C, dtype=complex)
    if C.ndim == 1:
        C = C[:, None]
    N = C.shape[0]
    if C.shape[1] == 0:
        return np.zeros((N, 0), dtype=complex)
    r0 = C.shape[1]
    if np.abs(C.conj().T @ C - np.eye(r0)).max() <= ORTHO_TOL:
        if is_canonical(C):
            return C.copy()
        U = C
    else:
        U, s, _ = np.linalg.svd(C, full_matrices=False)
        U = U[:, s > tol]
    r = U.shape[1]
    if r == 0:
        return np.zeros((N, 0), dtype=complex)
    piv = _pivot_rows(U)
    Q, R = np.linalg.qr(U[piv].conj().T)
    d = np.diag(R)
    Q = Q * (d / np.abs(d))[None, :]
    B = U @ Q
    for j, p in enumerate(piv):
        B[p, j + 1:] = 0
    rows = _max_entry_rows(B)
    for j, p in enumerate(rows):
        z = B[p, j]
        B[:, j] *= np.conj(z) / abs(z)
        B[p, j] = abs(z)
    return B


@dataclass(frozen=True, eq=False)
class Frame:
    """Orthonormal columns spanning a subspace of ``basis``'s space."""

    basis: object
    columns: np.ndarray
    rank_tol: float = RANK_TOL

    @property
    def dim(self):
        return self.columns.shape[1]

    @property
    def ambient_dim(self):
        return self.columns.shape[0]

    def projector(self):
        return self.columns @ self.columns.conj().T

    def project(self, X):
        return self.columns @ (self.columns.conj().T @ dense(X))

    def residual_of(self, X):
        """``(I - P) X``."""
        X = dense(X)
        return X - self.project(X)

    def canonical(self):
        return Frame(self.basis, canonicalize(self.columns, self.rank_tol), self.rank_tol)

    def to_json(self):
        from .harness import encode_matrix
        out = {"dim": self.dim, "columns": encode_matrix(self.columns)}
        if self.basis is not None and hasattr(self.basis, "to_json"):
            out["basis"] = self.basis.to_json()
        return out

    def __repr__(self):
        return f"Frame(dim={self.dim}, ambient={self.ambient_dim})"


def zero_frame(basis, N=None):
    N = basis.dim if N is None else N
    return Frame(basis, np.zeros((N, 0), dtype=complex))


def orthonormal_frame(vectors, basis=None, tol=RANK_TOL, N=None):
    """Canonical frame spanning ``vectors`` (columns of an array or a list of vectors)."""
    if isinstance(vectors, (list, tuple)):
        if len(vectors) == 0:
            size = N if N is not None else basis.dim
            return Frame(basis, np.zeros((size, 0), dtype=complex), tol)
        A = np.column_stack([dense(v).reshape(-1) for v in vectors])
    else:
        A = dense(vectors)
        if A.ndim == 1:
            A = A[:, None]
    return Frame(basis, canonicalize(A, tol), tol)


def null_space(A, tol=RANK_TOL):
    """Orthonormal basis of ``ker A`` by SVD thresholding at the absolute level ``tol``."""
    A = dense(A)
    n = A.shape[1]
    if A.shape[0] == 0:
        return np.eye(n, dtype=complex)
    _, s, Vh = np.linalg.svd(A, full_matrices=True)
    rank = int(np.sum(s > tol))
    return Vh[rank:].conj().T


def kernel_intersection(operators, basis=None, tol=RANK_TOL):
    """Canonical frame of the common kernel of ``operators`` (matrices sharing a domain)."""
    mats = [dense(op.matrix if isinstance(op, GradedOperator) else op) for op in operators]
    if not mats:
        raise ValueError("kernel_intersection needs at least one operator")
    A = np.vstack(mats)
    return Frame(basis, canonicalize(null_space(A, tol), tol), tol)


@dataclass(frozen=True)
class SubspaceRelation:
    contains: bool
    containment_defect: float
    intersection: Frame
    complement_within: Frame


def _scaled_tol(a):
    return a.rank_tol * np.sqrt(max(1, a.ambient_dim))


def intersect(a, b):
    """Frame of ``a ∩ b``."""
    if a.dim == 0 or b.dim == 0:
        return zero_frame(a.basis, a.ambient_dim)
    R = b.residual_of(a.columns)
    coeffs = null_space(R, _scaled_tol(a))
    return orthonormal_frame(a.columns @ coeffs, a.basis, a.rank_tol, N=a.ambient_dim)


def complement_within(a, b):
    """Frame of ``a ⊖ (a ∩ b)``."""
    inter = intersect(a, b)
    if inter.dim == 0:
        return a.canonical()
    R = inter.residual_of(a.columns)
    return orthonormal_frame(R, a.basis, a.rank_tol, N=a.ambient_dim)


def span_sum(a, b):
    return orthonormal_frame(np.hstack([a.columns, b.columns]), a.basis, a.rank_tol, N=a.ambient_dim)


def subspace_ops(a, b):
    """Containment of ``b`` in ``a``, their intersection and ``a ⊖ (a ∩ b)``."""
    defect = opnorm(a.residual_of(b.columns)) if b.dim else 0.0
    return SubspaceRelation(
        contains=defect < _scaled_tol(a),
        containment_defect=defect,
        intersection=intersect(a, b),
        complement_within=complement_within(a, b),
    )


def frame_contains(a, b):
    """Direct containment test ``b ⊆ a``."""
    if b.dim == 0:
        return True
    return opnorm(a.residual_of(b.columns)) < _scaled_tol(a)


def degree_filtration(frame, coord_degrees, factor, levels):
    """Basis of ``frame`` adapted to the filtration by degree in one factor.

    Returns ``(columns, level)`` where the first columns span
    ``frame ∩ {degree_factor <= 0}``, the next ones extend this to
    ``{degree_factor <= 1}``, and so on; ``level[c]`` is the step at which
    column ``c`` entered.
    """
    cols = []
    lev = []
    current = zero_frame(frame.basis, frame.ambient_dim)
    deg = coord_degrees[:, factor]
    for j in range(levels + 1):
        outside = deg > j
        coeffs = null_space(frame.columns[outside], _scaled_tol(frame))
        layer = orthonormal_frame(frame.columns @ coeffs, frame.basis, frame.rank_tol, N=frame.ambient_dim)
        new = complement_within(layer, current) if current.dim else layer
        if new.dim:
            cols.append(new.columns)
            lev.extend([j] * new.dim)
            current = orthonormal_frame(np.hstack([current.columns, new.columns]), frame.basis,
                                        frame.rank_tol, N=frame.ambient_dim)
        if current.dim == frame.dim:
            break
    if current.dim != frame.dim:
        raise AssertionError("filtration did not exhaust the frame")
    C = np.hstack(cols) if cols else np.zeros((frame.ambient_dim, 0), dtype=complex)
    return C, np.array(lev, dtype=np.int64)


__all__ = [
    "RANK_TOL", "RESIDUAL_TOL", "GradedOperator", "Frame", "SubspaceRelation",
    "orthonormal_frame", "kernel_intersection", "subspace_ops", "canonicalize",
    "is_canonical", "null_space", "intersect", "complement_within", "span_sum",
    "frame_contains", "chain_window", "window_is_empty", "support_degree", "dense",
    "opnorm", "zero_frame", "degree_filtration", "deg_le",
]
