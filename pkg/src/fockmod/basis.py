"""Product-system data, flips, word reordering and the truncated Fock basis.

Conventions used throughout the package:

* factors are indexed from 0 in Python (the JSON wire format uses 1-based
  pair keys such as ``"(1,2)"``);
* tensor products are Kronecker products, so the basis vector
  ``e_a (x) e_b`` of ``E_i (x) E_j`` has index ``a * d_j + b``;
* a map ``E_i (x) H -> H`` is stored as a matrix of shape
  ``(dim H, d_i * dim H)`` whose column ``a * dim H + h`` is the image of
  ``e_a (x) e_h``.
"""

from __future__ import annotations

import hashlib
import itertools
import math
import os
from functools import cached_property

import numpy as np

from .errors import CapacityError, DomainError

DEFAULT_MAX_DIM = 200_000
FLIP_TOL = 1e-12


def max_dim():
    """Hard limit on basis dimension; ``FOCKMOD_MAX_DIM`` overrides it."""
    raw = os.environ.get("FOCKMOD_MAX_DIM")
    if raw is None or raw.strip() == "":
        return DEFAULT_MAX_DIM
    return int(raw)


# -- degrees ---------------------------------------------------------------

def unit(i, r):
    """The unit multi-index ``e_i`` of length ``r``."""
    return tuple(1 if k == i else 0 for k in range(r))


def deg_le(a, b):
    return all(x <= y for x, y in zip(a, b))


def deg_add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def deg_sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def deg_min(a, b):
    return tuple(min(x, y) for x, y in zip(a, b))


def deg_max(a, b):
    return tuple(max(x, y) for x, y in zip(a, b))


def is_nonneg(a):
    return all(x >= 0 for x in a)


# -- flips -----------------------------------------------------------------

def swap_matrix(d_j, d_i):
    """Canonical flip ``E_j (x) E_i -> E_i (x) E_j`` sending ``(b, a)`` to ``(a, b)``."""
    t = np.zeros((d_i * d_j, d_j * d_i), dtype=complex)
    for b in range(d_j):
        for a in range(d_i):
            t[a * d_j + b, b * d_i + a] = 1.0
    return t


def _pair_key(i, j):
    return f"({i + 1},{j + 1})"


def _parse_pair_key(key):
    body = key.strip().lstrip("(").rstrip(")")
    a, b = (int(x) for x in body.split(","))
    return a - 1, b - 1


def _decode_matrix(entries, rows, cols):
    arr = np.asarray(entries, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError("complex entries must be [re, im] pairs")
    z = arr[..., 0] + 1j * arr[..., 1]
    return z.reshape(rows, cols)


def _encode_matrix(m):
    m = np.asarray(m, dtype=complex).reshape(-1)
    return [[float(z.real), float(z.imag)] for z in m]


class ProductSystemSpec:
    """Dimensions ``d_1..d_r`` and unitary flips of a product system over ``N_0^r``.

    ``flips`` maps a 0-based pair ``(i, j)`` with ``i < j`` to the matrix of
    ``t_{j,i}: E_j (x) E_i -> E_i (x) E_j``.  Missing pairs default to the
    canonical swap.
    """

    def __init__(self, dims, flips=None, check=True):
        dims = tuple(int(d) for d in dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"dims must be a non-empty list of positive ints, got {dims}")
        self.dims = dims
        stored = {}
        for (i, j), t in (flips or {}).items():
            i, j = int(i), int(j)
            if not (0 <= i < j < len(dims)):
                raise ValueError(f"flip key must satisfy 0 <= i < j < r, got {(i, j)}")
            t = np.array(t, dtype=complex)
            n = dims[i] * dims[j]
            if t.shape != (n, n):
                raise ValueError(f"flip {(i, j)} must have shape {(n, n)}, got {t.shape}")
            if check:
                err = np.abs(t.conj().T @ t - np.eye(n)).max()
                if err > FLIP_TOL:
                    raise ValueError(f"flip {(i, j)} is not unitary (defect {err:.3g})")
            t.setflags(write=False)
            stored[(i, j)] = t
        self._flips = stored
        self._cache = {}

    @classmethod
    def with_phases(cls, dims, phases):
        """Flips of the form ``diag(phase) @ swap``; ``phases[(i, j)]`` has length ``d_i d_j``."""
        flips = {}
        for (i, j), ph in phases.items():
            ph = np.asarray(ph, dtype=complex).reshape(-1)
            flips[(i, j)] = np.diag(ph / np.abs(ph)) @ swap_matrix(dims[j], dims[i])
        return cls(dims, flips)

    @property
    def k_plus_1(self):
        return len(self.dims)

    r = k_plus_1

    def stored_flip(self, i, j):
        """``t_{j,i}`` for ``i < j``, falling back to the swap."""
        t = self._flips.get((i, j))
        if t is None:
            key = ("swap", i, j)
            t = self._cache.get(key)
            if t is None:
                t = swap_matrix(self.dims[j], self.dims[i])
                t.setflags(write=False)
                self._cache[key] = t
        return t

    def is_default(self, i, j):
        return (min(i, j), max(i, j)) not in self._flips

    def digest(self):
        h = hashlib.sha256(repr(self.dims).encode())
        for key in sorted(self._flips):
            h.update(repr(key).encode())
            h.update(np.ascontiguousarray(self._flips[key]).tobytes())
        return h.hexdigest()

    def to_json(self):
        return {
            "dims": list(self.dims),
            "flips": {_pair_key(i, j): _encode_matrix(t) for (i, j), t in sorted(self._flips.items())},
        }

    @classmethod
    def from_json(cls, obj):
        dims = [int(d) for d in obj["dims"]]
        flips = {}
        for key, entries in (obj.get("flips") or {}).items():
            i, j = _parse_pair_key(key)
            if i > j:
                raise ValueError(f"flip key {key} must list the smaller index first")
            n = dims[i] * dims[j]
            flips[(i, j)] = _decode_matrix(entries, n, n)
        return cls(dims, flips)

    def __repr__(self):
        extra = "" if not self._flips else f", custom_flips={sorted(self._flips)}"
        return f"ProductSystemSpec(dims={self.dims}{extra})"


def flip_apply(spec, i, j):
    """Return ``t_{j,i}: E_j (x) E_i -> E_i (x) E_j`` (0-based factor indices)."""
    r = spec.r
    if not (0 <= i < r and 0 <= j < r):
        raise DomainError(f"factor index out of range: {(i, j)} for r={r}")
    if i == j:
        return np.eye(spec.dims[i] ** 2, dtype=complex)
    if i < j:
        return np.array(spec.stored_flip(i, j))
    # t_{j,i} = t_{i,j}^{-1}, and t_{i,j} is what the pair (j, i) stores.
    return spec.stored_flip(j, i).conj().T.copy()


def _flip_cached(spec, i, j):
    key = ("flip", i, j)
    t = spec._cache.get(key)
    if t is None:
        t = flip_apply(spec, i, j)
        t.setflags(write=False)
        spec._cache[key] = t
    return t


def letters_of(n):
    """Factor of each letter of ``E(n)`` in canonical order."""
    return [f for f, k in enumerate(n) for _ in range(k)]


def word_space_dim(spec, n):
    return math.prod(spec.dims[f] ** k for f, k in enumerate(n))


def reorder_tensor(spec, source_slot, target_degree, cap=None):
    """Unitary ``E_s (x) E(n) -> E(n) (x) E_s`` built from pairwise flips.

    The ``E_s`` letter crosses the letters of ``E(n)`` from left to right:
    first those of factor 0, then factor 1, and so on.  Crossing a letter of
    the same factor is the identity (``t_{s,s} = id``).
    """
    n = tuple(int(x) for x in target_degree)
    s = int(source_slot)
    if len(n) != spec.r or not is_nonneg(n):
        raise DomainError(f"degree {n} is not a multi-index of length {spec.r}")
    if not (0 <= s < spec.r):
        raise DomainError(f"source slot {s} out of range")
    if cap is not None and not deg_le(n, cap):
        raise DomainError(f"degree {n} exceeds cap {tuple(cap)}")
    key = ("reorder", s, n)
    hit = spec._cache.get(key)
    if hit is not None:
        return hit
    ds = spec.dims[s]
    letters = letters_of(n)
    size = ds * word_space_dim(spec, n)
    shape = [ds] + [spec.dims[f] for f in letters]
    T = np.eye(size, dtype=complex).reshape(shape + [size])
    for p, f in enumerate(letters):
        if f == s:
            continue  # identity flip; only the role of the two slots changes
        df = spec.dims[f]
        t = _flip_cached(spec, f, s)  # t_{s,f}: E_s (x) E_f -> E_f (x) E_s
        T = np.moveaxis(T, (p, p + 1), (0, 1))
        rest = T.shape[2:]
        T = (t @ T.reshape(ds * df, -1)).reshape((df, ds) + rest)
        T = np.moveaxis(T, (0, 1), (p, p + 1))
    out = np.ascontiguousarray(T.reshape(size, size))
    out.setflags(write=False)
    spec._cache[key] = out
    return out


def insertion_map(spec, i, n):
    """Identification ``E_i (x) E(n) -> E(n + e_i)`` used by creation operators.

    The new letter crosses the letters of factors before ``i`` and is then
    prepended to the factor-``i`` word.
    """
    key = ("insert", i, tuple(n))
    hit = spec._cache.get(key)
    if hit is not None:
        return hit
    below = tuple(k if f < i else 0 for f, k in enumerate(n))
    above = tuple(k if f >= i else 0 for f, k in enumerate(n))
    R = reorder_tensor(spec, i, below)
    D_above = word_space_dim(spec, above)
    out = np.kron(R, np.eye(D_above)) if D_above > 1 else np.array(R)
    out.setflags(write=False)
    spec._cache[key] = out
    return out


# -- the truncated Fock basis ----------------------------------------------

class GradedBasis:
    """Orthonormal basis of ``(+)_{n <= cap} E(n) (x) C^m``.

    Parameters
    ----------
    spec : ProductSystemSpec
    cap : sequence of int
        Truncation per factor (length ``spec.r``).
    coeff_dim : int
        ``m``, the dimension of the coefficient space.
    factors : sequence of int, optional
        Factors carried by the Fock part; the others have degree 0 there.
        Defaults to all factors.
    coeff_degrees : array of shape (m, r), optional
        Degree attached to each coefficient vector.  Used when the
        coefficient space is itself graded (e.g. the space ``K`` of a normal
        form).  Defaults to zero.

    Notes
    -----
    Basis vectors are ordered by total degree, then by the factor pattern of
    the word (more letters from earlier factors first), then by the letters,
    then by coefficient index.  Each multidegree therefore occupies one
    contiguous block laid out as ``E(n) (x) C^m`` in Kronecker order.
    """

    def __init__(self, spec, cap, coeff_dim=1, factors=None, coeff_degrees=None):
        r = spec.r
        cap = tuple(int(c) for c in cap)
        if len(cap) != r:
            raise DomainError(f"cap {cap} must have length {r}")
        if not is_nonneg(cap):
            raise DomainError(f"cap {cap} must be componentwise >= 0")
        coeff_dim = int(coeff_dim)
        if coeff_dim < 1:
            raise DomainError("coeff_dim must be >= 1")
        factors = tuple(range(r)) if factors is None else tuple(sorted(set(int(f) for f in factors)))
        if any(not (0 <= f < r) for f in factors):
            raise DomainError(f"factor set {factors} out of range")
        self.spec = spec
        self.cap = cap
        self.coeff_dim = coeff_dim
        self.factors = factors
        expected = coeff_dim * math.prod(
            sum(spec.dims[f] ** j for j in range(cap[f] + 1)) for f in factors
        )
        limit = max_dim()
        if expected > limit:
            raise CapacityError(f"basis dimension {expected} exceeds limit {limit}")
        if coeff_degrees is None:
            cd = np.zeros((coeff_dim, r), dtype=np.int64)
        else:
            cd = np.array(coeff_degrees, dtype=np.int64).reshape(coeff_dim, r)
        cd.setflags(write=False)
        self.coeff_degrees = cd

        ranges = [range(cap[f] + 1) if f in factors else range(1) for f in range(r)]
        degs = sorted(itertools.product(*ranges), key=lambda n: (sum(n), tuple(-x for x in n)))
        self.degrees = tuple(degs)
        self._offset = {}
        self._words = {}
        pos = 0
        for n in degs:
            self._offset[n] = pos
            D = word_space_dim(spec, n)
            self._words[n] = D
            pos += D * coeff_dim
        self.dim = pos
        assert pos == expected

    # -- structure ------------------------------------------------------
    @property
    def r(self):
        return self.spec.r

    def offset(self, n):
        return self._offset[tuple(n)]

    def word_count(self, n):
        return self._words[tuple(n)]

    def block_slice(self, n):
        o = self._offset[tuple(n)]
        return slice(o, o + self._words[tuple(n)] * self.coeff_dim)

    def contains_degree(self, n):
        return tuple(n) in self._offset

    def index(self, words, c):
        """Index of the basis vector labelled by ``words`` (one per factor) and ``c``."""
        words = tuple(tuple(w) for w in words)
        n = tuple(len(w) for w in words)
        if n not in self._offset:
            raise DomainError(f"degree {n} is not in this basis")
        if not (0 <= c < self.coeff_dim):
            raise DomainError(f"coefficient index {c} out of range")
        w = 0
        for f, word in enumerate(words):
            for a in word:
                if not (0 <= a < self.spec.dims[f]):
                    raise DomainError(f"letter {a} out of range for factor {f}")
                w = w * self.spec.dims[f] + a
        return self._offset[n] + w * self.coeff_dim + c

    def label(self, idx):
        """Inverse of :meth:`index`: returns ``(words, c)``."""
        if not (0 <= idx < self.dim):
            raise DomainError(f"index {idx} out of range")
        starts = self._starts
        k = int(np.searchsorted(starts, idx, side="right")) - 1
        n = self.degrees[k]
        rel = idx - starts[k]
        w, c = divmod(rel, self.coeff_dim)
        letters = []
        for f in reversed(letters_of(n)):
            w, a = divmod(w, self.spec.dims[f])
            letters.append((f, a))
        letters.reverse()
        words = tuple(tuple(a for g, a in letters if g == f) for f in range(self.r))
        return words, c

    @cached_property
    def _starts(self):
        return np.array([self._offset[n] for n in self.degrees], dtype=np.int64)

    @cached_property
    def fock_degrees(self):
        """Fock-part multidegree of every basis vector, shape ``(dim, r)``."""
        out = np.empty((self.dim, self.r), dtype=np.int64)
        for n in self.degrees:
            out[self.block_slice(n)] = n
        out.setflags(write=False)
        return out

    @cached_property
    def coeff_index(self):
        out = np.tile(np.arange(self.coeff_dim), self.dim // self.coeff_dim)
        out.setflags(write=False)
        return out

    @cached_property
    def coord_degrees(self):
        """Full degree of each basis vector: Fock degree plus coefficient degree."""
        out = self.fock_degrees + self.coeff_degrees[self.coeff_index]
        out.setflags(write=False)
        return out

    def window_indices(self, window):
        """Indices of basis vectors whose full degree is ``<= window``."""
        w = np.asarray(window, dtype=np.int64)
        return np.nonzero(np.all(self.coord_degrees <= w, axis=1))[0]

    def with_coeff(self, coeff_dim, coeff_degrees=None):
        return GradedBasis(self.spec, self.cap, coeff_dim, self.factors, coeff_degrees)

    def same_as(self, other):
        return (
            self is other
            or (
                self.spec is other.spec
                or self.spec.digest() == other.spec.digest()
            )
            and self.cap == other.cap
            and self.coeff_dim == other.coeff_dim
            and self.factors == other.factors
            and np.array_equal(self.coeff_degrees, other.coeff_degrees)
        )

    def to_json(self):
        out = {
            "spec": self.spec.to_json(),
            "cap": list(self.cap),
            "coeff_dim": self.coeff_dim,
        }
        if self.factors != tuple(range(self.r)):
            out["factors"] = [f + 1 for f in self.factors]
        if self.coeff_degrees.any():
            out["coeff_degrees"] = self.coeff_degrees.tolist()
        return out

    @classmethod
    def from_json(cls, obj):
        return cls(
            ProductSystemSpec.from_json(obj["spec"]),
            obj["cap"],
            obj.get("coeff_dim", 1),
            None if obj.get("factors") is None else [f - 1 for f in obj["factors"]],
            obj.get("coeff_degrees"),
        )

    def __repr__(self):
        return (
            f"GradedBasis(dims={self.spec.dims}, cap={self.cap}, m={self.coeff_dim}, "
            f"factors={self.factors}, dim={self.dim})"
        )


def enumerate_basis(spec, cap, coeff_dim=1):
    """Basis of the truncated Fock space ``(+)_{n <= cap} E(n) (x) C^m``."""
    return GradedBasis(spec, cap, coeff_dim)
