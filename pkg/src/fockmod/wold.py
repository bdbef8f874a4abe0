"""Wandering subspaces and the Wold unitary of a pure isometric tuple."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import GradedBasis, deg_sub, unit
from .core import (
    RANK_TOL, RESIDUAL_TOL, Frame, GradedOperator, canonicalize, dense, null_space,
    opnorm, orthonormal_frame, support_degree,
)
from .errors import CompletenessError, PreconditionError
from .fockrep import check_axioms, creation_operator, power_apply


def gate_tuple(tup, tol=RESIDUAL_TOL, categories=("isometric", "doubly_commuting")):
    """Raise unless ``tup`` passes the requested axioms on non-empty windows."""
    rep = check_axioms(tup, categories)
    for cat in categories:
        res = getattr(rep, cat)
        if res >= tol:
            raise PreconditionError(f"axiom gate failed: {cat} residual {res:.3g}", res)
        bad = [u for u in rep.unverifiable if u.startswith(cat)]
        if bad:
            raise PreconditionError(f"axiom gate failed: {', '.join(bad)} unverifiable at this cap")
    return rep


def wandering_subspace(tup, within=None, gate=True, tol=RANK_TOL):
    """Canonical frame of the generating wandering subspace.

    Without ``within`` this is the common kernel of the adjoints
    ``V^(f)*``.  With a frame ``within`` (an invariant subspace ``M``) it is
    ``M ⊖ span{V^(f)(e_a) M}``, the wandering subspace of the restriction.
    """
    if gate:
        gate_tuple(tup)
    if within is None:
        A = np.hstack([dense(op.matrix) for op in tup.maps])
        # ker A^* from the triangular factor of A^*: cheaper than an SVD of the tall stack.
        R = np.linalg.qr(A.conj().T, mode="r")
        K = null_space(R, tol)
        return Frame(tup.basis, canonicalize(K, tol), tol)
    M = within.columns
    if M.shape[1] == 0:
        return Frame(tup.basis, M.copy(), tol)
    images = np.hstack([dense(op.matrix) @ np.kron(np.eye(op.letter_dim), M) for op in tup.maps])
    coeffs = null_space(images.conj().T @ M, tol)
    return orthonormal_frame(M @ coeffs, tup.basis, tol, N=tup.dim)


@dataclass
class WoldData:
    """Wold identification ``Pi_V: H -> F(E) (x) W``.

    ``model`` is the basis of ``F(E) (x) W``; coefficient ``c`` carries the
    support degree of the ``c``-th wandering vector, so model coordinates of
    degree ``<= cap`` are exactly the ones whose Wold block is unclipped
    (``exact``).  ``adjoint_full`` holds every block ``V_n(e_w (x) w_c)``,
    clipped ones included.
    """

    tuple: object
    wandering: Frame
    model: GradedBasis
    unitary: GradedOperator
    adjoint_full: np.ndarray
    exact: np.ndarray
    window: tuple
    residuals: dict = field(default_factory=dict)

    @property
    def adjoint(self):
        """``Pi_V^*`` restricted to the exact model coordinates (zero elsewhere)."""
        out = np.zeros_like(self.adjoint_full)
        out[:, self.exact] = self.adjoint_full[:, self.exact]
        return out


def wold_blocks(tup, W, model):
    """Matrix whose columns are ``V_n(e_w (x) W_c)`` in model order."""
    N = tup.dim
    out = np.zeros((N, model.dim), dtype=complex)
    for n in model.degrees:
        T = power_apply(tup, n, W)
        D, _, p = T.shape
        sl = model.block_slice(n)
        out[:, sl] = T.transpose(1, 0, 2).reshape(N, D * p)
    return out


def _span_defect(cols, target, tol=None):
    """Part of ``target`` outside the span of ``cols`` (orthonormal unless ``tol`` is given)."""
    if tol is not None:
        U, s, _ = np.linalg.svd(cols, full_matrices=False)
        cols = U[:, s > tol]
    return target - cols @ (cols.conj().T @ target)


def wold_unitary(tup, within=None, gate=True, tol=RANK_TOL):
    """Wandering subspace, Wold unitary and its certificates."""
    W = wandering_subspace(tup, within, gate, tol)
    target = np.eye(tup.dim, dtype=complex) if within is None else within.columns
    if W.dim == 0:
        if target.shape[1] == 0:
            raise CompletenessError("the space is zero-dimensional")
        raise CompletenessError("wandering subspace vanishes: not pure at this cap", degree=None)
    degW = support_degree(tup.to_model(W.columns), tup.basis.coord_degrees, tol=1e-9)
    model = GradedBasis(tup.spec, tup.cap, W.dim, tup.factors, degW)
    full = wold_blocks(tup, W.columns, model)
    exact = model.window_indices(tup.cap)
    window = deg_sub(tup.cap, tuple(int(x) for x in degW.max(axis=0)))

    X = full[:, exact]
    miss = _span_defect(X, target)
    if target.shape[1] and miss.size and np.abs(miss).max() > np.sqrt(tol) and X.shape[1] < full.shape[1]:
        # the exact blocks alone fall short: let the clipped ones try
        miss = _span_defect(full, target, tol)
    if target.shape[1] and np.abs(miss).max() > np.sqrt(tol):
        coords = np.abs(tup.to_model(miss)).max(axis=1)
        worst = int(np.nonzero(coords > np.sqrt(tol))[0][0])
        deg = tuple(int(x) for x in tup.basis.coord_degrees[worst])
        raise CompletenessError(f"Wold blocks do not span the space; first gap at degree {deg}", degree=deg)

    G = X.conj().T @ X
    gram = opnorm(G - np.eye(G.shape[0]))
    # off-diagonal blocks between distinct degrees
    _, key = np.unique(model.fock_degrees[exact], axis=0, return_inverse=True)
    key = np.ravel(key)
    off = opnorm(np.where(key[:, None] == key[None, :], 0, G))
    residuals = {"gram": gram, "block_orthogonality": off}

    Pi = np.zeros((model.dim, tup.dim), dtype=complex)
    Pi[exact] = X.conj().T
    unitary = GradedOperator(tup.basis, model, Pi, 1, (0,) * tup.spec.r, tup.cap, name="Pi_V")

    coiso = Pi[exact] @ X
    residuals["co_isometry"] = opnorm(coiso - np.eye(coiso.shape[0]))
    PX = X @ X.conj().T
    residuals["isometry_on_span"] = opnorm(PX @ PX - PX)

    for op, f in zip(tup.maps, tup.factors):
        Smod = creation_operator(model, f)
        J = model.window_indices(deg_sub(tup.cap, unit(f, tup.spec.r)))
        if J.size == 0:
            residuals[f"intertwining[{f}]"] = None
            continue
        L = op.apply_letters(full[:, J])
        R = np.stack([full @ dense(Smod.slab(a))[:, J] for a in range(op.letter_dim)])
        residuals[f"intertwining[{f}]"] = opnorm((L - R).transpose(1, 0, 2).reshape(tup.dim, -1))
    return WoldData(tup, W, model, unitary, full, exact, window, residuals)


def max_intertwining(wd):
    vals = [v for k, v in wd.residuals.items() if k.startswith("intertwining") and v is not None]
    return max(vals) if vals else 0.0
