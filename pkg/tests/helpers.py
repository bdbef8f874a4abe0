"""Shared constructors for the test modules."""

import numpy as np

from fockmod.basis import ProductSystemSpec
from fockmod.fockrep import induced_tuple
from fockmod.invariant import blh_factorize, orbit_span


def mono(basis, n, word=0, c=0):
    """Basis vector of the ``word``-th word of degree ``n`` (coefficient ``c``)."""
    v = np.zeros(basis.dim, dtype=complex)
    v[basis.offset(tuple(n)) + word * basis.coeff_dim + c] = 1
    return v


def bidisc(cap=(3, 3)):
    return induced_tuple(ProductSystemSpec((1, 1)), cap)


def fixture_frames(tup):
    """The standard bidisc subspaces: full, z1 H^2, z1^2 H^2, z2 H^2 and the orbit of z1 - z2."""
    B = tup.basis
    gens = {
        "full": mono(B, (0, 0)),
        "z1": mono(B, (1, 0)),
        "z1^2": mono(B, (2, 0)),
        "z2": mono(B, (0, 1)),
        "z1-z2": mono(B, (1, 0)) - mono(B, (0, 1)),
    }
    return {k: orbit_span(tup, g[:, None]) for k, g in gens.items()}


def fixture_factorizations(tup):
    return {k: blh_factorize(F, tup) for k, F in fixture_frames(tup).items()}
