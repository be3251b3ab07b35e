"""End-to-end acceptance suite.

Each test covers one release criterion at its stated tolerance and prints a
one-line verdict (run with ``pytest -s tests/test_acceptance.py`` to see all
of them).
"""

import itertools
import time

import numpy as np
import pytest

from qcf import (
    LabeledOperator,
    marginal_process,
    partial_trace,
    partial_transpose,
    permute_factors,
    tensor,
)
from qcf.classical import brute_force_joint
from qcf.counterfactual import (
    CfQuery,
    Evidence,
    abduct,
    bell_demo,
    evaluate,
    evaluate_report,
    make_bell_model,
)
from qcf.documents import bind_quantum_query, build_qsm, parse_model, parse_query
from qcf.errors import ZeroEvidenceProbabilityError
from qcf.lift import corollary1_check, lift, quantum_joint
from qcf.process import born_probability, conditional_process
from qcf.qsm import check_structural_compatibility, validate_qsm
from qcf.rand import random_cptp_instrument, random_density
from qcf.tensor import SpaceLabel

from _generators import random_binary_psm, random_classical_query, random_wired_qsm
from conftest import (
    MODELS,
    chain_qsm,
    measure_prepare_instrument,
    pm_instrument,
)

TOL = 1e-9


def _bound(name):
    return build_qsm(parse_model((MODELS / name).read_text()))


def _query(bound, name):
    return bind_quantum_query(bound, parse_query((MODELS / name).read_text()))


def test_criterion_1_example_1():
    start = time.monotonic()
    bound = _bound("example1.qsm")
    qsm = bound.qsm

    ev = Evidence(
        {"A": bound.instruments["IA1"], "B": bound.instruments["IB1"]}, {"A": "+"}
    )
    posterior = abduct(qsm, ev)
    values = {dict(k)["L"]: v for k, v in posterior.items()}
    assert abs(values["0"] - 0.5) <= TOL
    assert abs(values["1"] - 0.5) <= TOL

    passive = evaluate(qsm, _query(bound, "example_passive.cf"))
    assert abs(passive.probability - 1.0) <= TOL

    do_value = evaluate(qsm, _query(bound, "example_do.cf"))
    assert abs(do_value.probability - 1.0) <= TOL

    tilted = evaluate(qsm, _query(bound, "example_active_tilted.cf"))
    assert abs(tilted.probability - 1.0) <= TOL

    star = evaluate(qsm, _query(bound, "example_active_computational.cf"))
    assert star.is_counterpossible

    elapsed = time.monotonic() - start
    assert elapsed < 1.0
    print(
        f"\ncriterion 1 PASS: abduction (0.5, 0.5); passive/do/active = 1; "
        f"active [0] = *; {elapsed:.3f}s"
    )


def test_criterion_2_example_2():
    bound1 = _bound("example1.qsm")
    bound2 = _bound("example2.qsm")
    qsm = bound2.qsm

    ev = Evidence(
        {"A": bound2.instruments["IA1"], "B": bound2.instruments["IB1"]}, {"A": "+"}
    )
    posterior = abduct(qsm, ev)
    values = {dict(k)["L"]: v for k, v in posterior.items()}
    assert abs(values["+"] - 1.0) <= TOL
    assert abs(values["-"]) <= TOL

    passive = evaluate(qsm, _query(bound2, "example_passive.cf"))
    assert passive.is_counterpossible

    do_value = evaluate(qsm, _query(bound2, "example_do.cf"))
    assert abs(do_value.probability - 1.0) <= TOL

    # active with a measurement basis different from +/-
    active = evaluate(qsm, _query(bound2, "example_active_computational.cf"))
    assert abs(active.probability - 1.0) <= TOL

    sigma1 = marginal_process(bound1.qsm)
    sigma2 = marginal_process(qsm)
    distance = sigma1.op.distance(sigma2.op)
    assert distance <= TOL
    passive1 = evaluate(bound1.qsm, _query(bound1, "example_passive.cf"))
    assert not passive1.is_counterpossible and passive.is_counterpossible

    print(
        f"\ncriterion 2 PASS: abduction (1, 0); passive = *; do/active = 1; "
        f"marginal distance {distance:.2e} with differing passive verdicts"
    )


def test_criterion_3_bell_scenario():
    start = time.monotonic()
    report = bell_demo(make_bell_model())
    assert abs(report.passive_q1.probability - 1.0) <= TOL
    assert abs(report.passive_q2.probability - 0.0) <= TOL
    assert abs(report.do_q1.probability - 0.5) <= TOL
    assert abs(report.do_q2.probability - 0.5) <= TOL
    assert ("A", "B") not in report.edges and ("B", "A") not in report.edges

    # the same four numbers through the bundled model and query files
    bound = _bound("bell.qsm")
    q1p = evaluate(bound.qsm, _query(bound, "bell_q1_passive.cf"))
    q2p = evaluate(bound.qsm, _query(bound, "bell_q2_passive.cf"))
    q1d = evaluate(bound.qsm, _query(bound, "bell_q1_do.cf"))
    assert abs(q1p.probability - 1.0) <= TOL
    assert abs(q2p.probability - 0.0) <= TOL
    assert abs(q1d.probability - 0.5) <= TOL

    elapsed = time.monotonic() - start
    assert elapsed < 1.0
    print(
        f"\ncriterion 3 PASS: passive (1, 0), do-interventional (0.5, 0.5), "
        f"no A-B edge; {elapsed:.3f}s"
    )


@pytest.fixture(scope="module")
def random_suite():
    rng = np.random.default_rng(2026)
    suite = []
    for _ in range(200):
        n = int(rng.integers(1, 4))
        psm = random_binary_psm(rng, n)
        suite.append((psm, lift(psm), rng))
    return suite


def test_criterion_4_corollary_1_agreement(random_suite):
    start = time.monotonic()
    rng = np.random.default_rng(4)
    worst = 0.0
    evaluated = 0
    for psm, result, _ in random_suite:
        query = random_classical_query(rng, psm)
        try:
            classical_value, quantum_value = corollary1_check(psm, query, result)
        except ZeroEvidenceProbabilityError:
            continue
        worst = max(worst, abs(classical_value - quantum_value))
        evaluated += 1
    elapsed = time.monotonic() - start
    assert evaluated >= 150
    assert worst <= TOL
    assert elapsed < 300.0
    print(
        f"\ncriterion 4 PASS: {evaluated} queries over 200 random models, "
        f"max |classical - quantum| = {worst:.2e}; {elapsed:.1f}s"
    )


def test_criterion_5_lift_joint_and_validity(random_suite):
    worst_tv = 0.0
    for psm, result, _ in random_suite:
        qj = quantum_joint(result)
        cj = brute_force_joint(psm)
        tv = 0.5 * sum(abs(qj.get(k, 0.0) - cj.get(k, 0.0)) for k in set(qj) | set(cj))
        worst_tv = max(worst_tv, tv)

        report = validate_qsm(result.qsm)
        assert report.isometry_defect <= TOL
        assert all(report.no_influence_exogenous.values())
        assert all(report.no_influence_dag.values())
        if result.qsm.unitary.matrix is not None:
            m = result.qsm.unitary.matrix
            defect = np.max(np.abs(m.conj().T @ m - np.eye(m.shape[1])))
            assert defect <= TOL
    assert worst_tv <= TOL
    print(
        f"\ncriterion 5 PASS: 200 lifted models, max TV distance {worst_tv:.2e}, "
        f"all isometry and no-influence checks pass"
    )


def test_criterion_6_property_suites():
    rng = np.random.default_rng(6)

    # generalized Born normalization + Markov <-> structural agreement
    worst_norm = 0.0
    for trial in range(100):
        qsm = random_wired_qsm(rng, int(rng.integers(1, 4)))
        sigma = marginal_process(qsm)
        instruments = {
            node.name: random_cptp_instrument(node, int(rng.integers(1, 3)), rng)
            for node in qsm.endogenous
        }
        total = 0.0
        for combo in itertools.product(
            *[instruments[n.name].outcomes() for n in qsm.endogenous]
        ):
            chosen = {
                node.name: instruments[node.name].element(o)
                for node, o in zip(qsm.endogenous, combo)
            }
            total += born_probability(sigma, chosen)
        worst_norm = max(worst_norm, abs(total - 1.0))
        compat = check_structural_compatibility(sigma, qsm.dag, qsm)
        assert compat.markov == compat.structural == True  # noqa: E712
    assert worst_norm <= TOL

    # operator-algebra identities on random labeled operators
    x, y = SpaceLabel("X", 2), SpaceLabel("Y", 3)
    for _ in range(25):
        a = LabeledOperator((x,), rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        b = LabeledOperator((y,), rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
        joint = tensor(a, b)
        assert abs(joint.trace() - a.trace() * b.trace()) <= 1e-9
        assert np.allclose(partial_trace(joint, {"Y"}).data, b.trace() * a.data)
        assert partial_transpose(partial_transpose(joint, {"X"}), {"X"}).allclose(joint, 1e-12)
        herm = LabeledOperator((x, y), joint.data + joint.data.conj().T)
        assert np.allclose(
            np.linalg.eigvalsh(herm.data),
            np.linalg.eigvalsh(permute_factors(herm, ["Y", "X"]).data),
            atol=1e-9,
        )

    # the two-CNOT copy identity on random inputs (gate matrix as published)
    c_gate = np.zeros((8, 8), dtype=complex)
    for r, c in [(0, 0), (1, 1), (2, 7), (3, 6), (4, 4), (5, 5), (6, 3), (7, 2)]:
        c_gate[r, c] = 1.0
    assert np.allclose(c_gate @ c_gate.conj().T, np.eye(8))

    def c_wire_marginal(rho1, rho2):
        total = np.kron(rho1, rho2)
        evolved = c_gate @ total @ c_gate.conj().T
        t = evolved.reshape(2, 2, 2, 2, 2, 2)
        t = np.trace(t, axis1=0, axis2=3)  # ancilla for B
        t = np.trace(t, axis1=0, axis2=2)  # the copied node wire
        return t

    rho2 = random_density(4, rng)
    a, b = rho2[0, 0], rho2[0, 1]
    f, k, l = rho2[1, 1], rho2[2, 2], rho2[2, 3]
    reference = None
    for _ in range(10):
        rho1 = random_density(2, rng)
        rho_c = c_wire_marginal(rho1, rho2)
        if reference is None:
            reference = rho_c
        # independence of the ancilla headed for the other branch
        assert np.max(np.abs(rho_c - reference)) <= 1e-12
    # closed form in the entries of rho_{A Lambda'_CA}, by direct expansion
    expected = np.array([[1 - f - k, b + np.conj(l)], [np.conj(b) + l, f + k]])
    assert np.max(np.abs(reference - expected)) <= 1e-9

    print(
        f"\ncriterion 6 PASS: 100 Markov processes normalize (max dev {worst_norm:.2e}) "
        f"and agree on Markov<->structural; algebra identities and the CNOT copy "
        f"independence hold"
    )


def test_criterion_7_counterpossible_semantics():
    checked_stars = 0
    rng = np.random.default_rng(7)

    def verify_report_consistency(qsm, query):
        nonlocal checked_stars
        report = evaluate_report(qsm, query)
        posterior = {k: v for k, v in zip([tuple(sorted(a.items())) for a, _ in report.posterior],
                                          [p for _, p in report.posterior])}
        trigger_keys = {tuple(sorted(a.items())) for a in report.counterpossible_lambdas}
        expected_star = False
        for assignment, p in report.posterior:
            if p <= 1e-12:
                continue
            sigma = conditional_process(qsm, assignment)
            chosen = {}
            for node in qsm.endogenous:
                instr = query.cf_settings[node.name]
                if node.name in query.antecedent:
                    chosen[node.name] = instr.element(query.antecedent[node.name])
                else:
                    chosen[node.name] = instr
            denominator = born_probability(sigma, chosen)
            key = tuple(sorted(assignment.items()))
            if denominator <= 1e-12:
                expected_star = True
                assert key in trigger_keys, "report must mark the triggering background"
        assert report.value.is_counterpossible == expected_star
        if expected_star:
            checked_stars += 1
        return report

    bound1 = _bound("example1.qsm")
    bound2 = _bound("example2.qsm")
    verify_report_consistency(bound1.qsm, _query(bound1, "example_active_computational.cf"))
    verify_report_consistency(bound2.qsm, _query(bound2, "example_passive.cf"))
    verify_report_consistency(bound1.qsm, _query(bound1, "example_passive.cf"))

    # randomized sweep over chain models with random preparations; every other
    # trial aligns the measurement with the preparation basis, which makes the
    # passive antecedent an exact counterpossible
    for trial in range(30):
        angle = rng.uniform(0, np.pi)
        vec1 = np.array([np.cos(angle), np.sin(angle)], dtype=complex)
        vec2 = np.array([-np.sin(angle), np.cos(angle)], dtype=complex)
        qsm = chain_qsm([("a", vec1), ("b", vec2)])
        a_node, b_node = qsm.endogenous
        basis_angle = angle if trial % 2 == 0 else rng.uniform(0, np.pi)
        m1 = np.array([np.cos(basis_angle), np.sin(basis_angle)], dtype=complex)
        m2 = np.array([-np.sin(basis_angle), np.cos(basis_angle)], dtype=complex)
        instr_a = measure_prepare_instrument(a_node, "z", [("0", m1, m1), ("1", m2, m2)])
        instr_b = pm_instrument(b_node)
        ev = Evidence({"A": instr_a, "B": instr_b}, {"A": "0"})
        try:
            abduct(qsm, ev)
        except ZeroEvidenceProbabilityError:
            continue
        query = CfQuery(ev, {"A": instr_a, "B": instr_b}, {"A": "1"}, {"B": "-"})
        verify_report_consistency(qsm, query)

    assert checked_stars >= 10
    print(
        f"\ncriterion 7 PASS: counterpossible marker agrees with per-background "
        f"denominators on all checks ({checked_stars} starred cases)"
    )
