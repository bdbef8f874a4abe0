import numpy as np
import pytest
from scipy.stats import unitary_group

from fockmod.basis import ProductSystemSpec
from fockmod.core import dense
from fockmod.errors import CompletenessError, PreconditionError
from fockmod.fockrep import CovariantTuple, conjugate_tuple, induced_tuple
from fockmod.wold import max_intertwining, wandering_subspace, wold_unitary
from helpers import mono


def test_vacuum_is_wandering():
    tup = induced_tuple(ProductSystemSpec((2,)), (3,))
    W = wandering_subspace(tup)
    assert W.dim == 1
    assert np.allclose(np.abs(W.columns[:, 0]), np.abs(mono(tup.basis, (0,))))


def test_coefficient_block():
    W = wandering_subspace(induced_tuple(ProductSystemSpec((1, 1)), (2, 2), 3))
    assert W.dim == 3


@pytest.mark.parametrize("dims,cap,m", [((1, 1), (3, 3), 1), ((2, 1), (2, 2), 2), ((1, 1, 1), (2, 2, 2), 1)])
def test_wold_residuals(dims, cap, m):
    wd = wold_unitary(induced_tuple(ProductSystemSpec(dims), cap, m))
    assert wd.wandering.dim == m
    for key, val in wd.residuals.items():
        assert val is None or val < 1e-10, key
    # full tuple: every model coordinate is exact and Pi is a permutation-like unitary
    U = wd.unitary.dense()
    assert np.allclose(U @ U.conj().T, np.eye(U.shape[0]), atol=1e-12)


def test_sub_tuple_wandering_dimension():
    # only factor 0 is shifted: W is the factor-0 vacuum row, one vector per factor-1 word
    tup = induced_tuple(ProductSystemSpec((1, 2)), (2, 2))
    first = CovariantTuple(tup.basis, [tup.maps[0]], [0])
    wd = wold_unitary(first)
    assert wd.wandering.dim == 1 + 2 + 4
    assert max_intertwining(wd) < 1e-12


def test_conjugated_wold():
    base = induced_tuple(ProductSystemSpec((2, 1)), (2, 2))
    conj = conjugate_tuple(base, unitary_group.rvs(base.dim, random_state=11))
    wd = wold_unitary(conj)
    assert wd.wandering.dim == 1
    assert max(v for v in wd.residuals.values() if v is not None) < 1e-10


def test_gate_rejects_non_isometry():
    tup = induced_tuple(ProductSystemSpec((1, 1)), (3, 3))
    half = tup.maps[0].with_matrix(0.5 * dense(tup.maps[0].matrix))
    with pytest.raises(PreconditionError) as err:
        wold_unitary(tup.with_maps([half, tup.maps[1]]))
    assert err.value.residual == pytest.approx(0.75)


def test_unitary_has_no_wandering_vectors():
    tup = induced_tuple(ProductSystemSpec((1,)), (2,))
    ident = tup.maps[0].with_matrix(np.eye(tup.dim))
    with pytest.raises(CompletenessError):
        wold_unitary(CovariantTuple(tup.basis, [ident], [0]), gate=False)
