import dataclasses

import numpy as np
import pytest
from scipy.stats import unitary_group

from fockmod.basis import ProductSystemSpec
from fockmod.core import Frame, dense, frame_contains, opnorm
from fockmod.errors import PreconditionError
from fockmod.fockrep import CovariantTuple, conjugate_tuple, induced_tuple
from fockmod.invariant import (
    blh_factorize, check_invariant, coincide_test, doubly_commuting_subspace_test,
    factorization_uniqueness, full_space_isomorphic_test, intertwining_lift, nested_test,
    normal_form, orbit_span, phi_resolvent_value, phi_series_value, verdict,
)
from fockmod.multianalytic import is_inner
from helpers import bidisc, fixture_factorizations, fixture_frames, mono


@pytest.fixture(scope="module")
def amb():
    return bidisc((3, 3))


@pytest.fixture(scope="module")
def facts(amb):
    return fixture_factorizations(amb)


def test_verdict_bands():
    assert verdict(None) == "vacuous"
    assert verdict(1e-9) == "pass"
    assert verdict(1e-7) == "indeterminate"
    assert verdict(1e-5) == "fail"


def test_fixture_dimensions(amb):
    dims = {k: F.dim for k, F in fixture_frames(amb).items()}
    assert dims == {"full": 16, "z1": 12, "z1^2": 8, "z2": 12, "z1-z2": 12}


def test_invariance_checks(amb):
    B = amb.basis
    assert check_invariant(Frame(B, np.eye(B.dim, dtype=complex)), amb).invariant
    top = Frame(B, mono(B, (3, 3))[:, None])
    rep = check_invariant(top, amb)
    assert rep.invariant and rep.vacuous
    bad = Frame(B, ((mono(B, (1, 0)) - mono(B, (0, 1))) / np.sqrt(2))[:, None])
    rep = check_invariant(bad, amb)
    assert not rep.invariant and rep.defect == pytest.approx(1.0)


def test_factorize_full_space(facts, amb):
    fd = facts["full"]
    assert fd.psi.shape == (16, 4)           # W = the z2 column
    assert fd.levels.tolist() == [0, 0, 0, 0]
    # Phi = Theta: the z2 shift on K
    blk = fd.phi_symbols[0].block
    assert np.allclose(np.abs(blk[:4]), np.eye(4, k=-1))


def test_factorize_z1(facts):
    fd = facts["z1"]
    assert fd.psi.shape[1] == 4 and fd.levels.tolist() == [1, 1, 1, 1]
    r = fd.residuals
    for key in ("range_defect", "range_span_defect", "inner_isometry_defect", "inner_wandering_defect",
                "phi_formula_defect[1]", "intertwining[1]"):
        assert r[key] < 1e-12, key
    assert not fd.flags["vacuous"]


def test_factorize_rejects_non_invariant(amb):
    B = amb.basis
    bad = Frame(B, mono(B, (0, 1))[:, None])
    with pytest.raises(PreconditionError):
        blh_factorize(bad, amb)


def test_both_phi_formulas_agree(facts):
    for name, fd in facts.items():
        for k, cert in enumerate(fd.certified):
            d = np.abs(fd.phi_symbols[k].block - fd.phi_alternative[k].block)[:, cert]
            assert d.size == 0 or d.max() < 1e-10, name


def test_doubly_commuting_subspace_fixtures(facts):
    for name in ("full", "z1", "z1^2", "z2"):
        res = doubly_commuting_subspace_test(facts[name])
        assert res.ok and res.details["agree"], name


def test_z1_minus_z2_regression():
    tup = bidisc((4, 4))
    B = tup.basis
    F = orbit_span(tup, (mono(B, (1, 0)) - mono(B, (0, 1)))[:, None])
    fd = blh_factorize(F, tup)
    assert F.dim == 20 and fd.levels.tolist() == [1, 2, 3, 4]
    res = doubly_commuting_subspace_test(fd)
    assert not res.ok and res.details["agree"]
    assert res.details["model_defect"] == pytest.approx(0.5, abs=1e-12)
    assert res.details["direct_defect"] == pytest.approx(0.4 * np.sqrt(2), abs=1e-12)


def test_nested_fixtures(facts):
    res = nested_test(facts["z1^2"], facts["z1"])
    assert res.ok and res.details["inner"] and res.defect < 1e-12
    res = nested_test(facts["z1"], facts["z2"])
    assert not res.ok and res.defect > 0.5 and res.details["agree"]
    res = nested_test(facts["z1-z2"], facts["full"])
    assert res.ok and res.details["agree"]
    res = nested_test(facts["z1"], facts["z1-z2"])
    assert not res.ok and res.defect == pytest.approx(2 ** -0.5)


def test_nested_matches_containment(facts):
    for a, fa in facts.items():
        for b, fb in facts.items():
            res = nested_test(fa, fb)
            assert res.ok == frame_contains(fb.subspace, fa.subspace), (a, b)


def test_coincide(facts):
    sys1 = facts["z1-z2"].system()
    Z0 = unitary_group.rvs(sys1.coeff_dim, random_state=2)
    res = coincide_test(sys1, sys1.conjugated(Z0))
    assert res.ok and res.defect < 1e-12
    assert coincide_test(sys1, sys1).ok
    assert not coincide_test(facts["z1"].system(), sys1).ok
    assert coincide_test(facts["z1"].system(), sys1).details["reason"] == "dimension mismatch"


def test_lift(amb, facts):
    B = amb.basis
    res = intertwining_lift(fixture_frames(amb)["z1-z2"], amb, reference=facts["z1-z2"])
    assert res.ok and res.details["phi_agreement[1]"] < 1e-12
    z1_only = orbit_span(CovariantTuple(B, [amb.maps[0]], [0]), mono(B, (0, 0))[:, None])
    res = intertwining_lift(z1_only, amb)
    assert not res.ok and res.defect == pytest.approx(1.0)
    assert intertwining_lift(Frame(B, np.eye(B.dim, dtype=complex)), amb).ok


def test_normal_form_bidisc(amb):
    nf = normal_form(amb)
    assert nf.coefficient_space.dim == 4
    assert all(v is None or v < 1e-12 for v in nf.residuals.values())
    blk = nf.theta_symbols[0].block.real
    assert np.allclose(blk[:4], np.eye(4, k=-1))


def test_normal_form_of_conjugate_coincides(amb):
    nf = normal_form(amb)
    nf2 = normal_form(conjugate_tuple(amb, unitary_group.rvs(amb.dim, random_state=4)))
    assert max(v for v in nf2.residuals.values() if v is not None) < 1e-10
    assert coincide_test(nf.system(), nf2.system()).ok


def test_normal_form_fixed_point():
    from fockmod.harness import inner_symbols, make_rng
    from fockmod.invariant import SymbolSystem
    from fockmod.multianalytic import multiplier_from_symbol
    B, syms = inner_symbols(ProductSystemSpec((1, 2)), (2, 2), 2, make_rng(0))
    S = induced_tuple(B.spec, B.cap, basis=B)
    tup = CovariantTuple(B, [S.maps[0], multiplier_from_symbol(syms[0], S)], [0, 1], "multiplier-extended")
    nf = normal_form(tup)
    # U is I (x) Z with Z the change to the canonical frame of K
    p = B.coeff_dim
    Z = nf.unitary[:p, :p]
    assert np.allclose(nf.unitary, np.kron(np.eye(B.dim // p), Z), atol=1e-12)
    assert coincide_test(nf.system(), SymbolSystem(B, syms)).ok


def test_full_space_isomorphism(amb, facts):
    nf = normal_form(amb)
    res = full_space_isomorphic_test(facts["z1"], nf)
    assert res.ok
    assert is_inner(res.payload, amb, factors=(0,)).inner
    assert not full_space_isomorphic_test(facts["z1-z2"], nf).ok


def test_uniqueness_up_to_unitary(facts):
    fd = facts["z1"]
    Z = unitary_group.rvs(4, random_state=5)
    p = fd.model.coeff_dim
    fd2 = dataclasses.replace(fd, psi=fd.psi @ Z, orbit=fd.orbit @ np.kron(np.eye(fd.model.dim // p), Z))
    assert factorization_uniqueness(fd, fd2)["unitary_defect"] < 1e-12


def test_hardy_resolvent():
    tup = bidisc((6, 6))
    for F in fixture_frames(tup).values():
        fd = blh_factorize(F, tup)
        for w in (0, 0.3, 0.6j):
            assert np.abs(phi_series_value(fd, 0, w) - phi_resolvent_value(fd, 0, w)).max() < 1e-8


def test_shift_only_gate(amb):
    B = amb.basis
    z1_only = orbit_span(CovariantTuple(B, [amb.maps[0]], [0]), mono(B, (0, 1))[:, None])
    with pytest.raises(PreconditionError):
        blh_factorize(z1_only, amb)
    fd = blh_factorize(z1_only, amb, shift_only=True)
    assert fd.residuals["range_defect"] < 1e-12
