import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fockmod import harness as hz
from fockmod.basis import ProductSystemSpec
from fockmod.fockrep import check_axioms
from fockmod.invariant import check_invariant
from helpers import mono


def test_float_format_has_17_digits():
    assert hz.dumps(0.1) == "0.10000000000000001"
    assert hz.dumps([1.0, 2]) == "[1, 2]"
    assert json.loads(hz.dumps({"a": [np.float64(1 / 3)]}))["a"][0] == 1 / 3


@given(st.integers(0, 1000), st.integers(1, 4), st.integers(1, 4))
def test_matrix_roundtrip(seed, r, c):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(r, c)) + 1j * rng.normal(size=(r, c))
    enc = json.loads(hz.dumps(hz.encode_matrix(A)))
    assert enc["shape"] == [r, c]
    assert enc["data"][c - 1] == [A[0, c - 1].real, A[0, c - 1].imag]   # row-major
    assert np.array_equal(hz.decode_matrix(enc), A)


def test_rng_streams_are_independent_and_reproducible():
    a = hz.make_rng(5, 1).random(3)
    assert np.array_equal(a, hz.make_rng(5, 1).random(3))
    assert not np.array_equal(a, hz.make_rng(5, 2).random(3))


def test_haar_unitary():
    U = hz.haar_unitary(4, hz.make_rng(0))
    assert np.allclose(U @ U.conj().T, np.eye(4))
    u = hz.haar_unitary(1, hz.make_rng(0))
    assert u.shape == (1, 1) and np.isclose(abs(u[0, 0]), 1)


def test_parse_spec_forms(tmp_path):
    assert hz.parse_spec("2,1").dims == (2, 1)
    inline = '{"dims": [1, 1], "flips": {"(1,2)": [[0, 1]]}}'
    spec = hz.parse_spec(inline)
    p = tmp_path / "s.json"
    p.write_text(inline)
    assert np.allclose(hz.parse_spec(str(p)).stored_flip(0, 1), spec.stored_flip(0, 1))
    with pytest.raises(Exception):
        hz.parse_cap("3,x")


@pytest.mark.parametrize("kind", hz.KINDS)
def test_instance_determinism_and_roundtrip(kind):
    spec = ProductSystemSpec((2, 1))
    a = hz.gen_instance(spec, (2, 2), 2, kind, 7)
    b = hz.gen_instance(spec, (2, 2), 2, kind, 7)
    assert a.dumps() == b.dumps()
    back = hz.Instance.from_json(json.loads(a.dumps()))
    assert back.digest() == a.digest()
    obj = a.to_json()
    assert {"spec", "cap", "coeff_dim", "seed", "provenance", "tuple"} <= set(obj)


def test_conjugated_matches_parent():
    spec = ProductSystemSpec((1, 1))
    r0 = check_axioms(hz.gen_instance(spec, (3, 3), 1, "induced", 7).tuple)
    r1 = check_axioms(hz.gen_instance(spec, (3, 3), 1, "conjugated", 7).tuple)
    for cat in r0.CATEGORIES:
        assert abs(getattr(r0, cat) - getattr(r1, cat)) < 1e-12


def test_multiplier_flag_is_recorded():
    inst = hz.gen_instance(ProductSystemSpec((1, 2)), (2, 2), 1, "multiplier", 4)
    assert inst.generator["doubly_commuting"] is True
    assert inst.generator["doubly_commuting_residual"] < 1e-10
    assert inst.tuple.provenance == "multiplier-extended"


def test_subspace_examples():
    tup = hz.gen_instance(ProductSystemSpec((1, 1)), (3, 3), 1, "induced", 0).tuple
    B = tup.basis
    F, info = hz.gen_invariant_subspace(tup, vectors=mono(B, (0, 0))[:, None])
    assert info["saturated_full"] and F.dim == B.dim
    F, info = hz.gen_invariant_subspace(tup, vectors=mono(B, (1, 0))[:, None])
    assert F.dim == 12 and np.all(B.coord_degrees[np.abs(F.columns).max(axis=1) > 1e-12][:, 0] >= 1)
    F, info = hz.gen_invariant_subspace(tup, 2, 11)
    assert check_invariant(F, tup).defect < 1e-12
    assert not info["saturated_full"] and info["generators"] == 2 and info["seed"] == 11


def test_subspace_in_conjugated_coordinates():
    inst = hz.gen_instance(ProductSystemSpec((1, 1)), (3, 3), 1, "conjugated", 2)
    F, _ = hz.gen_invariant_subspace(inst.tuple, 1, 3)
    assert check_invariant(F, inst.tuple).defect < 1e-12
    amb, Fm = hz.model_frame(inst.tuple, F)
    assert amb.grading is None and check_invariant(Fm, amb).defect < 1e-12


def test_report_and_wall_time_stripping():
    rep = hz.Report("abc")
    rep.add("x", "pass", 0.0, (1, 2), 0.5)
    rep.add("y", "vacuous")
    assert rep.passed
    rep.add("z", "indeterminate", 1e-7)
    assert not rep.passed
    stripped = hz.strip_wall_times(rep.to_json())
    assert all("wall_time" not in c for c in stripped["checks"])
    with pytest.raises(ValueError):
        rep.add("w", "maybe")


def test_run_verify_is_deterministic():
    inst = hz.gen_instance(ProductSystemSpec((1, 1)), (3, 3), 1, "conjugated", 1)
    a = hz.strip_wall_times(hz.run_verify(inst, seed=42).to_json())
    b = hz.strip_wall_times(hz.run_verify(inst, seed=42).to_json())
    assert hz.dumps(a) == hz.dumps(b)
    assert a["passed"]
