import ast
from pathlib import Path

import numpy as np
import pytest

import fockmod.oracle as lit
from fockmod.basis import ProductSystemSpec
from fockmod.core import dense
from fockmod.fockrep import creation_operator, induced_tuple
from fockmod.harness import gen_instance, gen_invariant_subspace, inject_fault, oracle_verify


def test_oracle_imports_only_basis():
    tree = ast.parse(Path(lit.__file__).read_text())
    mods = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom):
            mods.add(("." * node.level) + (node.module or ""))
        elif isinstance(node, ast.Import):
            mods.update(a.name for a in node.names)
    assert mods <= {"__future__", "numpy", ".basis"}


def _random_flip_spec(seed, dims):
    rng = np.random.default_rng(seed)
    flips = {}
    for i in range(len(dims)):
        for j in range(i + 1, len(dims)):
            n = dims[i] * dims[j]
            Q, _ = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
            flips[(i, j)] = Q
    return ProductSystemSpec(dims, flips)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_creation_literal_random_flips(seed):
    spec = _random_flip_spec(seed, (2, 2))
    B = induced_tuple(spec, (2, 1)).basis
    for i in (0, 1):
        assert np.abs(lit.creation_literal(B, i) - dense(creation_operator(B, i).matrix)).max() < 1e-14


def test_oracle_all_checks_on_fixture_kinds():
    for kind in ("induced", "conjugated", "multiplier"):
        inst = gen_instance(ProductSystemSpec((1, 2)), (2, 2), 1, kind, 3)
        inst.subspaces.append(gen_invariant_subspace(inst.tuple, 2, 5))
        rep = oracle_verify(inst)
        assert rep.passed, [c for c in rep.checks if c["verdict"] == "fail"]
        assert max(c["defect"] or 0 for c in rep.checks) < 1e-12


def test_fault_is_named():
    inst = gen_instance(ProductSystemSpec((1, 1)), (3, 3), 1, "induced", 0)
    bad = inject_fault(inst)
    rep = oracle_verify(bad, ("isometry",))
    (chk,) = rep.checks
    assert not rep.passed and chk["check"] == "isometry" and chk["mismatch"]
    assert "V(e_a)^*" in chk["formula"] and chk["basis_vector"] is not None
    assert bad.generator["fault"]["delta"] == 1e-3


def test_empty_check_set():
    inst = gen_instance(ProductSystemSpec((1, 1)), (2, 2), 1, "induced", 0)
    rep = oracle_verify(inst, ())
    assert rep.checks == [] and rep.passed


def test_commutation_literal_sees_wrong_flip():
    spec = ProductSystemSpec.with_phases((1, 1), {(0, 1): [1j]})
    tup = induced_tuple(spec, (2, 2))
    m0, m1 = (dense(op.matrix) for op in tup.maps)
    B = tup.basis
    good, _ = lit.commutation_literal(spec, m0, 0, m1, 1, B.window_indices((1, 1)))
    bad, _ = lit.commutation_literal(ProductSystemSpec((1, 1)), m0, 0, m1, 1, B.window_indices((1, 1)))
    assert good < 1e-15 and bad == pytest.approx(np.sqrt(2))
