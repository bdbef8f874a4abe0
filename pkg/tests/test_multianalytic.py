import numpy as np
import pytest
from hypothesis import given, strategies as st

from fockmod.basis import GradedBasis, ProductSystemSpec, flip_apply
from fockmod.core import dense, opnorm
from fockmod.errors import DomainError, PreconditionError
from fockmod.fockrep import CovariantTuple, check_axioms, induced_tuple
from fockmod.harness import inner_symbols, make_rng, random_isometry
from fockmod.multianalytic import (
    Symbol, extract_symbol, is_inner, multiplier_from_symbol, multiplier_from_wandering_map,
    multiplier_isometry_defect,
)
from fockmod.wold import wold_unitary
from helpers import mono


def _shift_only(S):
    return CovariantTuple(S.basis, [S.maps[0]], [0], S.provenance)


def test_constant_symbol_acts_blockwise():
    spec = ProductSystemSpec((1, 1))
    B = GradedBasis(spec, (3, 0), 2, (0,))
    theta0 = np.array([[0, 1], [1j, 0]])
    blk = np.zeros((B.dim, 2), complex)
    blk[:2] = theta0
    M = dense(multiplier_from_symbol(Symbol(B, 1, blk)).matrix)
    assert np.allclose(M, np.kron(np.eye(4), theta0))


def test_z2_shift_symbol():
    spec, cap = ProductSystemSpec((1, 1)), (3, 3)
    K = cap[1] + 1
    B = GradedBasis(spec, cap, K, (0,), np.array([[0, b] for b in range(K)]))
    blk = np.zeros((B.dim, K), complex)
    for b in range(K - 1):
        blk[b + 1, b] = 1          # 1 (x) z2^b -> 1 (x) z2^(b+1); the top one is clipped
    M = multiplier_from_symbol(Symbol(B, 1, blk, B.coeff_degrees))
    assert M.valid_window == (3, 2)
    Md = dense(M.matrix)
    for k in range(cap[0] + 1):
        for b in range(K - 1):
            col = Md[:, B.offset((k, 0)) + b]
            assert np.allclose(col, mono(B, (k, 0), c=b + 1))


def _random_setup(seed, dims=(1, 2), cap=(3, 2), m=2, top=None):
    """Random isometric symbol, supported on factor-0 degrees <= top."""
    spec = ProductSystemSpec(dims)
    B = GradedBasis(spec, cap, m, (0,))
    rng = make_rng(seed, 9)
    d = dims[1]
    rows = np.arange(B.dim) if top is None else np.nonzero(B.coord_degrees[:, 0] <= top)[0]
    blk = np.zeros((B.dim, d * m), complex)
    blk[rows] = random_isometry(rows.size, d * m, rng)
    sym = Symbol(B, 1, blk)
    S = induced_tuple(spec, cap, basis=B)
    return S, sym


@given(st.integers(0, 10_000), st.sampled_from([None, 1, 2]))
def test_extract_inverts_multiplier(seed, top):
    S, sym = _random_setup(seed, top=top)
    M = multiplier_from_symbol(sym, S)
    first = _shift_only(S)
    # a full-degree symbol leaves no window on which commutation could be checked
    back = extract_symbol(first, M, wold_unitary(first), gate=top is not None)
    assert np.abs(back.block - sym.block).max() < 1e-10


@given(st.integers(0, 10_000))
def test_multiplier_intertwines_shift(seed):
    S, sym = _random_setup(seed, dims=(2, 2), cap=(2, 1), m=1)
    M = multiplier_from_symbol(sym, S)
    both = CovariantTuple(S.basis, [S.maps[0], M], [0, 1], "multiplier-extended")
    assert check_axioms(both, ("commuting",)).commuting < 1e-10


def test_uniqueness_of_symbol():
    S, sym = _random_setup(5)
    M1 = dense(multiplier_from_symbol(sym, S).matrix)
    other = Symbol(sym.basis, 1, sym.block + 1e-3 * np.eye(*sym.block.shape))
    M2 = dense(multiplier_from_symbol(other, S).matrix)
    assert opnorm(M1 - M2) > 1e-4


def test_isometric_multiplier_has_isometric_symbol():
    for seed in range(5):
        B, syms = inner_symbols(ProductSystemSpec((1, 1)), (3, 3), 1, make_rng(seed))
        for s in syms:
            M = multiplier_from_symbol(s)
            assert multiplier_isometry_defect(M) < 1e-10
            ok = np.all(s.source_degrees <= np.asarray(M.valid_window), axis=1)
            cols = s.block[:, np.nonzero(ok)[0]]
            assert opnorm(cols.conj().T @ cols - np.eye(cols.shape[1])) < 1e-10


def test_isometric_symbol_need_not_give_isometric_multiplier():
    # (1 + z) / sqrt(2) has unit norm but multiplication by it is not isometric
    spec = ProductSystemSpec((1, 1))
    B = GradedBasis(spec, (4, 0), 1, (0,))
    blk = np.zeros((B.dim, 1), complex)
    blk[0] = blk[1] = 1 / np.sqrt(2)
    sym = Symbol(B, 1, blk)
    assert sym.isometry_defect() < 1e-15
    M = multiplier_from_symbol(sym)
    # Gram matrix on 1..z^3 is tridiagonal with off-diagonal 1/2
    assert multiplier_isometry_defect(M) == pytest.approx(np.cos(np.pi / 5))


def test_n0_matches_series_when_doubly_commuting():
    B, syms = inner_symbols(ProductSystemSpec((1, 1)), (3, 3), 1, make_rng(3))
    S = induced_tuple(B.spec, B.cap, basis=B)
    M = multiplier_from_symbol(syms[0], S)
    both = CovariantTuple(B, [S.maps[0], M], [0, 1], "multiplier-extended")
    assert check_axioms(both, ("doubly_commuting",)).doubly_commuting < 1e-10
    first = _shift_only(S)
    wd = wold_unitary(first)
    full = extract_symbol(first, M, wd)
    n0 = extract_symbol(first, M, wd, terms="n0")
    assert np.abs(full.block - n0.block).max() < 1e-12


def test_extract_gate():
    tup = induced_tuple(ProductSystemSpec((1, 1)), (3, 3))
    first = _shift_only(tup)
    bogus = tup.maps[1].with_matrix(dense(tup.maps[1].matrix) + 1e-3)
    with pytest.raises(PreconditionError):
        extract_symbol(first, bogus, wold_unitary(first))


def test_multiplier_requires_outside_factor():
    S, sym = _random_setup(1)
    with pytest.raises(DomainError):
        multiplier_from_symbol(Symbol(sym.basis, 0, np.zeros((sym.basis.dim, 2))), S)


def test_identity_wandering_map():
    tup = induced_tuple(ProductSystemSpec((1, 1)), (2, 2))
    wd = wold_unitary(tup)
    wm = multiplier_from_wandering_map(wd.wandering.columns, wd, tup)
    assert np.allclose(dense(wm.operator.matrix), np.eye(tup.dim))


def test_is_inner_examples():
    tup = induced_tuple(ProductSystemSpec((1, 1)), (3, 3))
    B = tup.basis
    assert is_inner(mono(B, (0, 0))[:, None], tup).inner
    # 1 and z1 are not jointly wandering: z1 lies in the orbit of 1
    two = np.column_stack([mono(B, (0, 0)), mono(B, (1, 0))])
    rep = is_inner(two, tup)
    assert not rep.inner and rep.wandering_defect == pytest.approx(1.0)
    rep = is_inner(2 * mono(B, (1, 1))[:, None], tup)
    assert not rep.inner and rep.isometry_defect == pytest.approx(3.0)


def test_symbol_json_factor_is_one_based():
    S, sym = _random_setup(0)
    obj = sym.to_json()
    assert obj["factor"] == 2 and obj["block"]["shape"] == list(sym.block.shape)


def test_flip_enters_multiplier():
    ph = np.exp(1.3j)
    spec = ProductSystemSpec.with_phases((1, 1), {(0, 1): [ph]})
    B = GradedBasis(spec, (2, 0), 1, (0,))
    blk = np.zeros((B.dim, 1), complex)
    blk[0] = 1
    M = dense(multiplier_from_symbol(Symbol(B, 1, blk)).matrix)
    # moving the factor-1 letter past one factor-0 letter costs one flip coefficient
    assert np.isclose(M[B.offset((1, 0)), B.offset((1, 0))], flip_apply(spec, 0, 1)[0, 0])
