import itertools

import numpy as np
import pytest

from qcf.classical import (
    ClassicalCsm,
    ClassicalPsm,
    ClassicalQuery,
    FiniteVar,
    StructuralFunction,
    brute_force_joint,
)
from qcf.errors import InvalidModelError, ZeroEvidenceProbabilityError
from qcf.instruments import validate_instrument
from qcf.lift import (
    assemble_isometry,
    binarize,
    corollary1_check,
    extend_priors,
    lift,
    plan_copies,
    quantum_joint,
    reversify,
)
from qcf.qsm import validate_qsm

from _generators import random_binary_psm, random_classical_query

BITS = ("0", "1")


def ident_table():
    return {("0",): "0", ("1",): "1"}


def xor_table():
    return {(u, p): str(int(u) ^ int(p)) for u in BITS for p in BITS}


def xor_chain_psm():
    v1, v2 = FiniteVar("V1", BITS), FiniteVar("V2", BITS)
    u1, u2 = FiniteVar("U1", BITS), FiniteVar("U2", BITS)
    f1 = StructuralFunction("V1", (), ident_table())
    f2 = StructuralFunction("V2", ("V1",), xor_table())
    return ClassicalPsm(ClassicalCsm((v1, v2), (u1, u2), (f1, f2)), ((0.5, 0.5), (0.5, 0.5)))


def and_psm():
    v1, v2, v3 = (FiniteVar(f"V{i}", BITS) for i in (1, 2, 3))
    u1, u2 = FiniteVar("U1", BITS), FiniteVar("U2", BITS)
    u3 = FiniteVar("U3", ("z",))
    f1 = StructuralFunction("V1", (), ident_table())
    f2 = StructuralFunction("V2", (), ident_table())
    f3 = StructuralFunction(
        "V3", ("V1", "V2"), {("z", p, q): str(int(p) & int(q)) for p in BITS for q in BITS}
    )
    return ClassicalPsm(
        ClassicalCsm((v1, v2, v3), (u1, u2, u3), (f1, f2, f3)),
        ((0.4, 0.6), (0.5, 0.5), (1.0,)),
    )


def fork_psm():
    v1, v2, v3 = (FiniteVar(f"V{i}", BITS) for i in (1, 2, 3))
    u = tuple(FiniteVar(f"U{i}", BITS) for i in (1, 2, 3))
    f1 = StructuralFunction("V1", (), ident_table())
    f2 = StructuralFunction("V2", ("V1",), xor_table())
    f3 = StructuralFunction(
        "V3", ("V1",), {(a, p): str(int(a) | int(p)) for a in BITS for p in BITS}
    )
    return ClassicalPsm(
        ClassicalCsm((v1, v2, v3), u, (f1, f2, f3)),
        ((0.25, 0.75), (0.5, 0.5), (0.9, 0.1)),
    )


# -- binarize -------------------------------------------------------------------


def test_binarize_identity_on_binary():
    psm = xor_chain_psm()
    b = binarize(psm.csm)
    assert [v.values for v in b.csm.endogenous] == [BITS, BITS]
    assert b.csm.functions_in_order()[1].table == xor_table()


def test_binarize_ternary_pads_to_four():
    v = FiniteVar("V1", ("a", "b", "c"))
    u = FiniteVar("U1", ("x", "y", "z"))
    table = {("x",): "a", ("y",): "b", ("z",): "c"}
    csm = ClassicalCsm((v,), (u,), (StructuralFunction("V1", (), table),))
    b = binarize(csm)
    var = b.csm.endogenous[0]
    exo = b.csm.exogenous[0]
    assert len(var.values) == 4 and len(exo.values) == 4
    assert var.values[:3] == ("a", "b", "c")
    new_table = b.csm.functions_in_order()[0].table
    # padded inputs map to the value at the lexicographically smallest input
    assert new_table[(exo.values[3],)] == table[("x",)]
    for key, value in table.items():
        assert new_table[key] == value


def test_binarize_preserves_joint_on_support():
    v = FiniteVar("V1", ("a", "b", "c"))
    u = FiniteVar("U1", ("x", "y", "z"))
    table = {("x",): "a", ("y",): "b", ("z",): "b"}
    csm = ClassicalCsm((v,), (u,), (StructuralFunction("V1", (), table),))
    psm = ClassicalPsm(csm, ((0.2, 0.3, 0.5),))
    b = binarize(csm)
    extended = extend_priors(psm, b)
    joint = brute_force_joint(psm)
    lifted_joint = brute_force_joint(extended)
    for key, p in joint.items():
        assert abs(lifted_joint.get(key, 0.0) - p) < 1e-12
    assert abs(sum(lifted_joint.values()) - 1.0) < 1e-12


# -- reversify ------------------------------------------------------------------


def test_reversify_trivial_when_bijective():
    psm = xor_chain_psm()
    r = reversify(binarize(psm.csm))
    node = r.nodes["V1"]
    assert node.s_size == 1 and node.t_size == 1 and node.u_plus == 2


def test_reversify_and_gate_sizes():
    r = reversify(binarize(and_psm().csm))
    node = r.nodes["V3"]
    assert node.s_tilde == 3  # preimage sizes {3, 1}
    assert node.s_size == 4
    assert node.u_plus * 4 == 2 * node.s_size  # |U'||Pa| = |V||S'|


def test_reversify_projection_compatibility():
    for psm in (xor_chain_psm(), and_psm(), fork_psm()):
        b = binarize(psm.csm)
        r = reversify(b)
        endo = {v.name: v for v in b.csm.endogenous}
        for f, u_var in zip(b.csm.functions_in_order(), b.csm.exogenous):
            node = r.nodes[f.target]
            var = endo[f.target]
            for u_idx in range(len(u_var.values)):
                pa_spaces = [range(len(endo[p].values)) for p in f.parents]
                for pa in itertools.product(*pa_spaces):
                    key = (u_var.values[u_idx],) + tuple(
                        endo[p].values[i] for p, i in zip(f.parents, pa)
                    )
                    v_idx, _ = node.forward[(u_idx,) + pa]
                    assert var.values[v_idx] == f.table[key]


def test_reversify_is_bijection():
    for psm in (xor_chain_psm(), and_psm(), fork_psm()):
        r = reversify(binarize(psm.csm))
        for node in r.nodes.values():
            assert len(node.forward) == node.u_plus * int(np.prod(node.parent_sizes or (1,)))
            images = set(node.forward.values())
            assert len(images) == len(node.forward)
            assert images == {
                (v, s) for v in range(node.v_size) for s in range(node.s_size)
            }


def test_reversify_rank_respects_lexicographic_order():
    r = reversify(binarize(and_psm().csm))
    for node in r.nodes.values():
        by_class = {}
        for key, (v, s) in node.forward.items():
            by_class.setdefault(v, []).append((s, key))
        for members in by_class.values():
            members.sort()
            keys = [key for _, key in members]
            assert keys == sorted(keys)


# -- copy plan -------------------------------------------------------------------


def test_plan_copies_leaf_is_empty():
    plan = plan_copies(reversify(binarize(xor_chain_psm().csm)))
    assert plan.nodes["V2"].children == ()
    assert plan.nodes["V2"].gates == ()
    assert plan.gate_count("V2") == 0


def test_plan_copies_fork_two_cnots():
    plan = plan_copies(reversify(binarize(fork_psm().csm)))
    assert plan.nodes["V1"].children == ("V2", "V3")
    assert len(plan.nodes["V1"].ancillae) == 2
    assert plan.gate_count("V1") == 2  # |Ch| * N = 2 * 1


def test_plan_copies_counts_scale_with_bits():
    v1 = FiniteVar("V1", ("a", "b", "c", "d"))  # two bits
    v2 = FiniteVar("V2", BITS)
    u1 = FiniteVar("U1", ("a", "b", "c", "d"))
    u2 = FiniteVar("U2", BITS)
    f1 = StructuralFunction("V1", (), {(x,): x for x in v1.values})
    f2 = StructuralFunction(
        "V2", ("V1",), {(u, p): BITS[(int(u == "1") + ("ab".find(p[0]) >= 0)) % 2] for u in BITS for p in v1.values}
    )
    csm = ClassicalCsm((v1, v2), (u1, u2), (f1, f2))
    plan = plan_copies(reversify(binarize(csm)))
    assert plan.gate_count("V1") == 2  # one child, two qubits


# -- assembly --------------------------------------------------------------------


def test_assemble_single_node_is_wire():
    v = FiniteVar("V1", BITS)
    u = FiniteVar("U1", BITS)
    csm = ClassicalCsm((v,), (u,), (StructuralFunction("V1", (), ident_table()),))
    psm = ClassicalPsm(csm, ((0.5, 0.5),))
    result = lift(psm)
    assert result.copies == {"V1": 1}
    perm = result.qsm.unitary.permutation
    assert sorted(perm.tolist()) == list(range(len(perm)))
    assert validate_qsm(result.qsm).ok


def test_assemble_xor_chain_isometry():
    result = lift(xor_chain_psm())
    report = validate_qsm(result.qsm)
    assert report.ok and report.isometry_defect == 0.0
    # dense cross-check on the materialized matrix
    m = result.qsm.unitary.matrix
    assert m is not None
    assert np.max(np.abs(m.conj().T @ m - np.eye(m.shape[1]))) < 1e-12


def test_assemble_rejects_mismatched_plan():
    r = reversify(binarize(fork_psm().csm))
    plan = plan_copies(r)
    plan.nodes["V1"] = plan.nodes["V2"]  # children no longer match the dag
    with pytest.raises(Exception):
        assemble_isometry(r, plan)


def test_fork_copy_no_influence():
    result = lift(fork_psm())
    report = validate_qsm(result.qsm)
    assert report.ok
    assert all(report.no_influence_exogenous.values())
    assert all(report.no_influence_dag.values())


# -- full lift ---------------------------------------------------------------------


def tv_distance(p, q):
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def test_lift_deterministic_point_mass():
    v = FiniteVar("V1", BITS)
    u = FiniteVar("U1", BITS)
    csm = ClassicalCsm((v,), (u,), (StructuralFunction("V1", (), ident_table()),))
    psm = ClassicalPsm(csm, ((1.0, 0.0),))
    result = lift(psm)
    joint = quantum_joint(result)
    assert abs(joint[("0",)] - 1.0) < 1e-12
    assert abs(joint[("1",)]) < 1e-12


def test_lift_xor_chain_uniform():
    result = lift(xor_chain_psm())
    joint = quantum_joint(result)
    for combo in itertools.product(BITS, BITS):
        assert abs(joint[combo] - 0.25) < 1e-12


def test_lift_matches_classical_joint():
    for psm in (xor_chain_psm(), and_psm(), fork_psm()):
        result = lift(psm)
        assert tv_distance(quantum_joint(result), brute_force_joint(psm)) < 1e-12


def test_lift_measurements_are_valid_instruments():
    result = lift(fork_psm())
    for instr in result.measurements.values():
        assert validate_instrument(instr).valid
    for name, labels in result.value_labels.items():
        for value in labels:
            assert validate_instrument(result.do_instrument(name, value)).valid


def test_lift_rejects_joint_priors():
    psm = xor_chain_psm()
    joint = {}
    for u, p in psm.u_assignments():
        joint[tuple(u[k] for k in ("U1", "U2"))] = p
    with_joint = ClassicalPsm(psm.csm, psm.priors, joint_prior=joint)
    with pytest.raises(InvalidModelError):
        lift(with_joint)


# -- corollary-1 harness -------------------------------------------------------------


def test_corollary1_xor_query():
    psm = xor_chain_psm()
    query = ClassicalQuery({"V1": "0", "V2": "0"}, {"V1": "1"}, {"V2": "1"})
    classical_value, quantum_value = corollary1_check(psm, query)
    assert abs(classical_value - 1.0) < 1e-12
    assert abs(quantum_value - 1.0) < 1e-12


def test_corollary1_factual_antecedent():
    psm = xor_chain_psm()
    query = ClassicalQuery({"V1": "1"}, {"V1": "1"}, {"V2": "1"})
    classical_value, quantum_value = corollary1_check(psm, query)
    # factual do: equals the ordinary conditional P(V2 = 1 | V1 = 1) = 1/2
    assert abs(classical_value - 0.5) < 1e-12
    assert abs(classical_value - quantum_value) < 1e-12


def test_corollary1_randomized_agreement():
    rng = np.random.default_rng(41)
    checked = 0
    for _ in range(15):
        psm = random_binary_psm(rng, int(rng.integers(1, 4)))
        query = random_classical_query(rng, psm)
        try:
            classical_value, quantum_value = corollary1_check(psm, query)
        except ZeroEvidenceProbabilityError:
            continue
        assert abs(classical_value - quantum_value) < 1e-9
        checked += 1
    assert checked >= 5


def test_lift_ternary_variable_roundtrip():
    # non-power-of-two value sets go through the binary extension
    v1 = FiniteVar("V1", ("a", "b", "c"))
    v2 = FiniteVar("V2", BITS)
    u1 = FiniteVar("U1", ("x", "y", "z"))
    u2 = FiniteVar("U2", BITS)
    f1 = StructuralFunction("V1", (), {("x",): "a", ("y",): "b", ("z",): "c"})
    f2 = StructuralFunction(
        "V2",
        ("V1",),
        {(u, p): BITS[(int(u == "1") + int(p == "b")) % 2] for u in BITS for p in ("a", "b", "c")},
    )
    psm = ClassicalPsm(
        ClassicalCsm((v1, v2), (u1, u2), (f1, f2)),
        ((0.2, 0.3, 0.5), (0.6, 0.4)),
    )
    result = lift(psm)
    assert validate_qsm(result.qsm).ok
    assert result.qsm.node("V1").in_dim == 4  # padded to a two-qubit space
    assert tv_distance(quantum_joint(result), brute_force_joint(psm)) < 1e-12

    query = ClassicalQuery({"V2": "1"}, {"V1": "b"}, {"V2": "0"})
    classical_value, quantum_value = corollary1_check(psm, query, result)
    assert abs(classical_value - quantum_value) < 1e-9
