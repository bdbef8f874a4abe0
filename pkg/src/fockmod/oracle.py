"""Slow literal evaluation of the defining formulas.

Everything here loops over basis vectors and words and works on plain
arrays.  The only toolkit module used is :mod:`fockmod.basis` (for labels
and flips), so a bug in the fast path cannot hide behind shared code.
"""

from __future__ import annotations

import numpy as np

from .basis import flip_apply

# -- words as labels ------------------------------------------------------------
# A word is a tuple of (factor, letter) pairs in canonical order (factors
# ascending).  A vector is a dict {(word, c): coefficient}.


def _word_of(B, idx):
    words, c = B.label(idx)
    return tuple((f, a) for f, w in enumerate(words) for a in w), c


def _index_of(B, word, c):
    words = [[] for _ in range(B.r)]
    for f, a in word:
        words[f].append(a)
    n = tuple(len(w) for w in words)
    if not B.contains_degree(n):
        return None
    return B.index(words, c)


def _to_dict(B, vec, tol=0.0):
    out = {}
    for idx in np.nonzero(np.abs(vec) > tol)[0]:
        word, c = _word_of(B, int(idx))
        out[(word, c)] = out.get((word, c), 0) + vec[idx]
    return out


def _to_array(B, vec):
    out = np.zeros(B.dim, dtype=complex)
    for (word, c), z in vec.items():
        idx = _index_of(B, word, c)
        if idx is not None:
            out[idx] += z
    return out


def _cross(spec, letter, word):
    """Move ``letter`` from the front of ``word`` past all letters of smaller factor.

    Returns a list of ``(coefficient, new_word)``.  Each crossing of a letter
    ``(f, b)`` applies the flip ``E_i (x) E_f -> E_f (x) E_i``.
    """
    i, a = letter
    states = [(1.0 + 0j, (), letter, word)]
    done = []
    while states:
        coef, head, (i, a), rest = states.pop()
        if not rest or rest[0][0] >= i:
            done.append((coef, head + ((i, a),) + rest))
            continue
        f, b = rest[0]
        t = flip_apply(spec, f, i)            # E_i (x) E_f -> E_f (x) E_i
        di, df = spec.dims[i], spec.dims[f]
        col = t[:, a * df + b]
        for row in np.nonzero(col)[0]:
            b2, a2 = divmod(int(row), di)
            states.append((coef * col[row], head + ((f, b2),), (i, a2), rest[1:]))
    return done


def creation_apply(B, i, a, vec):
    """Literal ``S^(i)(e_a (x) vec)`` on a dict vector (clipped at the cap)."""
    out = {}
    for (word, c), z in vec.items():
        for coef, w2 in _cross(B.spec, (i, a), word):
            counts = [0] * B.r
            for f, _ in w2:
                counts[f] += 1
            if any(counts[f] > B.cap[f] for f in range(B.r)) or any(
                    counts[f] and f not in B.factors for f in range(B.r)):
                continue
            out[(w2, c)] = out.get((w2, c), 0) + z * coef
    return out


def creation_literal(B, i):
    """Matrix of ``S^(i)`` assembled column by column from word manipulation."""
    N, d = B.dim, B.spec.dims[i]
    out = np.zeros((N, d * N), dtype=complex)
    for idx in range(N):
        word, c = _word_of(B, idx)
        for a in range(d):
            out[:, a * N + idx] = _to_array(B, creation_apply(B, i, a, {(word, c): 1.0}))
    return out


def move_to_back(spec, letter, word):
    """``t (x) I``: move ``letter`` from the front of ``word`` to its end, crossing every letter."""
    i, a = letter
    states = [(1.0 + 0j, (), (i, a), word)]
    done = []
    while states:
        coef, head, (i, a), rest = states.pop()
        if not rest:
            done.append((coef, head, (i, a)))
            continue
        f, b = rest[0]
        if f == i:
            states.append((coef, head + ((f, b),), (i, a), rest[1:]))
            continue
        t = flip_apply(spec, f, i)
        di, df = spec.dims[i], spec.dims[f]
        col = t[:, a * df + b]
        for row in np.nonzero(col)[0]:
            b2, a2 = divmod(int(row), di)
            states.append((coef * col[row], head + ((f, b2),), (i, a2), rest[1:]))
    return done


def multiplier_literal(B, j, block):
    """``M_Theta(e_a)(xi_n (x) h) = sum S_n (I (x) Theta)(t (x) I)(e_a (x) xi_n (x) h)``, column by column."""
    d = B.spec.dims[j]
    m = block.shape[1] // d
    N = B.dim
    out = np.zeros((N, d * N), dtype=complex)
    for idx in range(N):
        word, c = _word_of(B, idx)
        for a in range(d):
            acc = {}
            for coef, w2, (_, a2) in move_to_back(B.spec, (j, a), word):
                vec = _to_dict(B, block[:, a2 * m + c])
                for f, b in reversed(w2):
                    vec = creation_apply(B, f, b, vec)
                for key, z in vec.items():
                    acc[key] = acc.get(key, 0) + coef * z
            out[:, a * N + idx] = _to_array(B, acc)
    return out


# -- identities on stored matrices ------------------------------------------------

def _slab(mat, a, N):
    return mat[:, a * N:(a + 1) * N]


def isometry_literal(mat, d, window_idx):
    """Entrywise ``<V(e_a) e_p, V(e_b) e_q> - delta``; returns (max defect, worst column)."""
    N = mat.shape[0]
    worst, arg = 0.0, None
    cols = [(a, p) for a in range(d) for p in window_idx]
    for x, (a, p) in enumerate(cols):
        u = mat[:, a * N + p]
        for (b, q) in cols[x:]:
            g = np.vdot(u, mat[:, b * N + q]) - (1.0 if (a, p) == (b, q) else 0.0)
            if abs(g) > worst:
                worst, arg = abs(g), int(p)
    return worst, arg


def commutation_literal(spec, mi, fi, mj, fj, window_idx):
    """``V^i(a)V^j(b) h`` against ``sum t_{i,j} V^j(b')V^i(a') h`` per basis vector ``h``."""
    N = mi.shape[0]
    di, dj = spec.dims[fi], spec.dims[fj]
    t = flip_apply(spec, fj, fi)
    worst, arg = 0.0, None
    for p in window_idx:
        e = np.zeros(N, dtype=complex)
        e[p] = 1
        P = {}
        for b2 in range(dj):
            for a2 in range(di):
                P[(b2, a2)] = _slab(mj, b2, N) @ (_slab(mi, a2, N) @ e)
        for a in range(di):
            for b in range(dj):
                L = _slab(mi, a, N) @ (_slab(mj, b, N) @ e)
                R = sum(t[b2 * di + a2, a * dj + b] * P[(b2, a2)] for b2 in range(dj) for a2 in range(di))
                err = np.abs(L - R).max()
                if err > worst:
                    worst, arg = float(err), int(p)
    return worst, arg


def _apply_word(maps, word, v):
    """``V(w_1) ... V(w_L) v`` for stored maps ``{factor: matrix}``."""
    N = v.shape[0]
    for f, a in reversed(word):
        v = _slab(maps[f], a, N) @ v
    return v


def _apply_word_adjoint(maps, word, v):
    """``V(w_L)^* ... V(w_1)^* v``: the adjoint of :func:`_apply_word`."""
    N = v.shape[0]
    for f, a in word:
        v = _slab(maps[f], a, N).conj().T @ v
    return v


def wold_literal(maps, model, W):
    """Columns ``V_n(e_w (x) W_c)`` for every model coordinate."""
    N = W.shape[0]
    out = np.zeros((N, model.dim), dtype=complex)
    for idx in range(model.dim):
        word, c = _word_of(model, idx)
        out[:, idx] = _apply_word(maps, word, W[:, c])
    return out


def symbol_series_literal(maps, extra, d, model, W):
    """``sum_n S_n (I (x) P_W) V_n^* V^extra(e_a)|_W`` term by term."""
    N = W.shape[0]
    p = W.shape[1]
    out = np.zeros((model.dim, d * p), dtype=complex)
    for a in range(d):
        for c in range(p):
            y = _slab(extra, a, N) @ W[:, c]
            for idx in range(model.dim):
                word, c2 = _word_of(model, idx)
                out[idx, a * p + c] = np.vdot(W[:, c2], _apply_word_adjoint(maps, word, y))
    return out


def phi_series_literal(shift, theta, d, model, M, psi):
    """``sum_n S^W_n (I (x) P_W P_M) S_n^* M_Theta(e_a)|_W`` term by term."""
    N = psi.shape[0]
    p = psi.shape[1]
    PM = M @ M.conj().T
    out = np.zeros((model.dim, d * p), dtype=complex)
    for a in range(d):
        for c in range(p):
            y = _slab(theta, a, N) @ psi[:, c]
            for idx in range(model.dim):
                word, c2 = _word_of(model, idx)
                v = PM @ _apply_word_adjoint({0: shift}, word, y)
                out[idx, a * p + c] = np.vdot(psi[:, c2], v)
    return out
