import numpy as np
import pytest
from scipy.stats import unitary_group

from fockmod.basis import ProductSystemSpec
from fockmod.core import dense
from fockmod.fockrep import (
    CovariantTuple, check_axioms, compose_power, conjugate_tuple, creation_operator, induced_tuple,
    power_apply,
)
from helpers import mono


def test_creation_frozen_entries():
    tup = induced_tuple(ProductSystemSpec((1, 1)), (4, 4))
    B = tup.basis
    S2 = dense(creation_operator(B, 1).slab(0))
    assert np.nonzero(S2[:, 0])[0].tolist() == [2]               # 1 -> z2
    assert np.nonzero(S2[:, B.offset((1, 0))])[0].tolist() == [4]  # z1 -> z1 z2
    assert not S2[:, B.offset((0, 4))].any()                       # clipped at the cap


def test_creation_with_phase_flip():
    ph = np.exp(0.4j)
    tup = induced_tuple(ProductSystemSpec.with_phases((1, 1), {(0, 1): [ph]}), (2, 2))
    B = tup.basis
    img = dense(tup.maps[1].slab(0)) @ mono(B, (1, 0))
    assert np.isclose(np.vdot(mono(B, (1, 1)), img), ph)


CONFIGS = [((1, 1), (4, 4), 1), ((2, 1), (3, 2), 2), ((2, 2), (2, 2), 1), ((1, 1, 1), (2, 2, 2), 3)]


@pytest.mark.parametrize("dims,cap,m", CONFIGS)
def test_induced_axioms(dims, cap, m):
    rep = check_axioms(induced_tuple(ProductSystemSpec(dims), cap, m))
    assert rep.passed(1e-10)
    assert not rep.unverifiable


def test_conjugated_keeps_residuals():
    base = induced_tuple(ProductSystemSpec((1, 1)), (3, 3))
    U = unitary_group.rvs(base.dim, random_state=7)
    conj = conjugate_tuple(base, U)
    r0, r1 = check_axioms(base), check_axioms(conj)
    assert conj.provenance == "conjugated"
    for cat in r0.CATEGORIES:
        assert abs(getattr(r0, cat) - getattr(r1, cat)) < 1e-12
    assert np.allclose(conj.window_columns((1, 0)), U[:, base.basis.window_indices((1, 0))])


def test_same_shift_twice_is_not_doubly_commuting():
    tup = induced_tuple(ProductSystemSpec((1, 1)), (3, 3))
    bad = CovariantTuple(tup.basis, [tup.maps[0], tup.maps[0].with_matrix(tup.maps[0].matrix)], [0, 1])
    rep = check_axioms(bad)
    assert rep.isometric < 1e-12 and rep.commuting < 1e-12
    assert rep.doubly_commuting == pytest.approx(1.0)


def test_non_isometry_detected():
    tup = induced_tuple(ProductSystemSpec((1, 1)), (3, 3))
    half = tup.maps[0].with_matrix(0.5 * dense(tup.maps[0].matrix))
    rep = check_axioms(tup.with_maps([half, tup.maps[1]]))
    assert rep.isometric == pytest.approx(0.75)


def test_power_apply_matches_composition():
    tup = induced_tuple(ProductSystemSpec((2, 1)), (2, 2))
    X = np.eye(tup.dim)[:, :3]
    T = power_apply(tup, (1, 1), X)
    Vn = compose_power(tup, (1, 1))
    assert np.allclose(T.transpose(1, 0, 2).reshape(tup.dim, -1),
                       np.hstack([dense(Vn.slab(w)) @ X for w in range(T.shape[0])]))
    # the first column of the degree-(1,1) power is a word, hence a unit vector
    assert np.isclose(np.linalg.norm(T[0, :, 0]), 1)


def test_purity_of_truncation():
    rep = check_axioms(induced_tuple(ProductSystemSpec((1, 1)), (3, 3)), ("pure",))
    assert rep.pure == 0.0


def test_factor_mismatch_rejected():
    tup = induced_tuple(ProductSystemSpec((2, 1)), (1, 1))
    with pytest.raises(ValueError):
        CovariantTuple(tup.basis, [tup.maps[0]], [1])
