"""Counterfactual queries over quantum structural causal models: abduction,
action, prediction, counterpossible handling, passive/active classification
and the minimality disambiguation rule."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

import numpy as np

from .errors import (
    InvalidModelError,
    ModelMismatchError,
    NoDoStateDeclaredError,
    ZeroEvidenceProbabilityError,
)
from .instruments import Instrument, InstrumentElement, QuantumNode, make_do_instrument
from .process import born_probability, conditional_process
from .qsm import Qsm, marginal_process
from .tensor import (
    DEFAULT_TOL,
    LabeledOperator,
    Tolerance,
    identity,
    is_psd,
    partial_trace,
    projector,
)


class CfKind(enum.Enum):
    PASSIVE = "passive"
    ACTIVE = "active"
    DO_INTERVENTIONAL = "do-interventional"


@dataclass(frozen=True)
class CfValue:
    """Either a probability or the counterpossible marker."""

    probability: Optional[float]

    @staticmethod
    def counterpossible() -> "CfValue":
        return CfValue(None)

    @staticmethod
    def of(p: float) -> "CfValue":
        return CfValue(min(max(float(p), 0.0), 1.0))

    @property
    def is_counterpossible(self) -> bool:
        return self.probability is None

    def __str__(self) -> str:
        return "*" if self.probability is None else repr(self.probability)


@dataclass
class Evidence:
    """Implemented instruments per endogenous node and the outcomes actually
    observed (outcomes may be partial; unobserved nodes are outcome-summed)."""

    settings: dict[str, Instrument]
    outcomes: dict[str, str]

    def check(self, qsm: Qsm):
        names = {n.name for n in qsm.endogenous}
        if set(self.settings) != names:
            raise InvalidModelError("evidence must assign an instrument to every node")
        for node, outcome in self.outcomes.items():
            self.settings[node].element(outcome)  # raises if absent


@dataclass
class CfQuery:
    """A standard counterfactual query: counterfactual instruments for every
    node, antecedent outcomes at nodes B, consequent outcomes at nodes C."""

    evidence: Evidence
    cf_settings: dict[str, Instrument]
    antecedent: dict[str, str]
    consequent: dict[str, str]

    def check(self, qsm: Qsm):
        self.evidence.check(qsm)
        names = {n.name for n in qsm.endogenous}
        if set(self.cf_settings) != names:
            raise InvalidModelError("query must assign a counterfactual instrument to every node")
        overlap = set(self.antecedent) & set(self.consequent)
        if overlap:
            raise InvalidModelError(f"antecedent and consequent overlap on {sorted(overlap)}")
        for node, outcome in {**self.antecedent, **self.consequent}.items():
            if node not in names:
                raise InvalidModelError(f"query references unknown node {node!r}")
            self.cf_settings[node].element(outcome)


@dataclass
class AmbiguousQuery:
    """A counterfactual query whose antecedent instruments are unspecified;
    resolved by the minimality rule into a passive or do-interventional
    standard query."""

    evidence: Evidence
    antecedent: dict[str, str]
    consequent: dict[str, str]
    cf_settings: dict[str, Instrument] = field(default_factory=dict)


@dataclass
class EvaluationReport:
    kind: CfKind
    posterior: list[tuple[dict[str, str], float]]
    per_lambda: list[tuple[dict[str, str], Optional[CfValue]]]
    counterpossible_lambdas: list[dict[str, str]]
    value: CfValue
    evidence_probability: float


def abduct(qsm: Qsm, evidence: Evidence, tol: Tolerance = DEFAULT_TOL) -> dict:
    """Bayesian update over joint exogenous outcomes given the evidence.

    Returns {assignment-key: probability} over all nonzero-prior assignments;
    keys are tuples of (exogenous node, outcome) pairs in model order.
    """
    evidence.check(qsm)
    weights = {}
    total = 0.0
    for assignment, prior in qsm.lambda_assignments():
        lik = _likelihood(qsm, assignment, evidence.settings, evidence.outcomes)
        w = prior * lik
        weights[_key(assignment)] = w
        total += w
    if total <= tol.eps_prob:
        raise ZeroEvidenceProbabilityError(
            f"evidence has probability {total}, below eps_prob"
        )
    return {k: w / total for k, w in weights.items()}


def _key(assignment: Mapping[str, str]) -> tuple:
    return tuple(sorted(assignment.items()))


def _likelihood(qsm, assignment, settings, outcomes) -> float:
    sigma = conditional_process(qsm, assignment)
    chosen: dict[str, Union[Instrument, InstrumentElement]] = {}
    for node in qsm.endogenous:
        instr = settings[node.name]
        if node.name in outcomes:
            chosen[node.name] = instr.element(outcomes[node.name])
        else:
            chosen[node.name] = instr
    return born_probability(sigma, chosen)


def counterfactual_probability(
    qsm: Qsm,
    assignment: Mapping[str, str],
    query: CfQuery,
    tol: Tolerance = DEFAULT_TOL,
) -> CfValue:
    """P^lambda_{z'}(c' | b'): the ratio of two Born evaluations on the
    conditional process; the counterpossible marker when the antecedent has
    (numerically) zero probability."""
    sigma = conditional_process(qsm, assignment)
    denominator = _born_fixing(sigma, qsm, query.cf_settings, query.antecedent)
    if denominator <= tol.eps_prob:
        return CfValue.counterpossible()
    numerator = _born_fixing(
        sigma, qsm, query.cf_settings, {**query.antecedent, **query.consequent}
    )
    return CfValue.of(numerator / denominator)


def _born_fixing(sigma, qsm, settings, fixed_outcomes) -> float:
    chosen: dict[str, Union[Instrument, InstrumentElement]] = {}
    for node in qsm.endogenous:
        instr = settings[node.name]
        if node.name in fixed_outcomes:
            chosen[node.name] = instr.element(fixed_outcomes[node.name])
        else:
            chosen[node.name] = instr
    return born_probability(sigma, chosen)


def evaluate(qsm: Qsm, query: CfQuery, tol: Tolerance = DEFAULT_TOL) -> CfValue:
    return evaluate_report(qsm, query, tol).value


def evaluate_report(
    qsm: Qsm, query: CfQuery, tol: Tolerance = DEFAULT_TOL
) -> EvaluationReport:
    """Abduction / action / prediction with full bookkeeping.

    The expected counterfactual probability is the posterior-weighted sum of
    the per-assignment counterfactual probabilities; it is the counterpossible
    marker as soon as any assignment with nonzero posterior is itself a
    counterpossible (assignments with zero posterior are ignored).
    """
    query.check(qsm)
    posterior = abduct(qsm, query.evidence, tol)
    evidence_prob = _evidence_probability(qsm, query.evidence)

    assignments = {_key(a): a for a, _ in qsm.lambda_assignments()}
    per_lambda: list[tuple[dict, Optional[CfValue]]] = []
    triggers: list[dict] = []
    acc = 0.0
    star = False
    for key, weight in posterior.items():
        assignment = assignments[key]
        if weight <= tol.eps_prob:
            per_lambda.append((assignment, None))
            continue
        cfp = counterfactual_probability(qsm, assignment, query, tol)
        per_lambda.append((assignment, cfp))
        if cfp.is_counterpossible:
            star = True
            triggers.append(assignment)
        elif not star:
            acc += weight * cfp.probability

    value = CfValue.counterpossible() if star else CfValue.of(acc)
    kind = classify(query, tol)
    post_list = [(assignments[k], w) for k, w in posterior.items()]
    return EvaluationReport(kind, post_list, per_lambda, triggers, value, evidence_prob)


def _evidence_probability(qsm: Qsm, evidence: Evidence) -> float:
    sigma = marginal_process(qsm)
    chosen: dict[str, Union[Instrument, InstrumentElement]] = {}
    for node in qsm.endogenous:
        instr = evidence.settings[node.name]
        if node.name in evidence.outcomes:
            chosen[node.name] = instr.element(evidence.outcomes[node.name])
        else:
            chosen[node.name] = instr
    return born_probability(sigma, chosen)


def is_do_instrument(instr: Instrument, tol: Tolerance = DEFAULT_TOL) -> bool:
    """Single-element instrument of the arrow-breaking form rho^T (x) I."""
    if len(instr.elements) != 1:
        return False
    choi = instr.elements[0].choi
    node = instr.node
    in_names = [f.name for f in node.in_labels]
    reduced = partial_trace(choi, in_names)
    rho_t = LabeledOperator(reduced.factors, reduced.data / node.in_dim)
    from .tensor import pad_with_identity

    candidate = pad_with_identity(rho_t, choi.factors)
    if choi.distance(candidate) > max(tol.eps_trace, 1e-9):
        return False
    rho = LabeledOperator(rho_t.factors, rho_t.data.T)
    return is_psd(rho, tol) and abs(rho.trace() - 1.0) <= tol.eps_trace


def classify(query: CfQuery, tol: Tolerance = DEFAULT_TOL) -> CfKind:
    """Passive iff the antecedent nodes keep their evidence instruments;
    do-interventional iff they all get single-element do-instruments."""
    b_nodes = list(query.antecedent)
    if all(
        query.cf_settings[b].semantically_equal(query.evidence.settings[b], tol.eps_trace)
        for b in b_nodes
    ):
        return CfKind.PASSIVE
    if all(is_do_instrument(query.cf_settings[b], tol) for b in b_nodes):
        return CfKind.DO_INTERVENTIONAL
    return CfKind.ACTIVE


def disambiguate_minimal(
    qsm: Qsm, ambiguous: AmbiguousQuery, tol: Tolerance = DEFAULT_TOL
) -> CfQuery:
    """Complete an ambiguous query per the minimality rule: keep the evidence
    instruments at the antecedent nodes if that reading is not a
    counterpossible; otherwise substitute declared do-instruments."""
    settings = dict(ambiguous.cf_settings)
    for node, instr in ambiguous.evidence.settings.items():
        settings.setdefault(node, instr)

    passive_settings = dict(settings)
    for b in ambiguous.antecedent:
        passive_settings[b] = ambiguous.evidence.settings[b]
    passive = CfQuery(
        ambiguous.evidence, passive_settings, dict(ambiguous.antecedent), dict(ambiguous.consequent)
    )
    passive.check(qsm)

    posterior = abduct(qsm, ambiguous.evidence, tol)
    assignments = {_key(a): a for a, _ in qsm.lambda_assignments()}
    possible = True
    for key, weight in posterior.items():
        if weight <= tol.eps_prob:
            continue
        sigma = conditional_process(qsm, assignments[key])
        if _born_fixing(sigma, qsm, passive_settings, ambiguous.antecedent) <= tol.eps_prob:
            possible = False
            break
    if possible:
        return passive

    do_settings = dict(settings)
    for b, outcome in ambiguous.antecedent.items():
        declared = qsm.do_states.get(b, {})
        if outcome not in declared:
            raise NoDoStateDeclaredError(
                f"passive reading is a counterpossible and no do-state is declared "
                f"for outcome {outcome!r} at node {b}"
            )
        do_settings[b] = make_do_instrument(qsm.node(b), declared[outcome], outcome)
    do_query = CfQuery(
        ambiguous.evidence, do_settings, dict(ambiguous.antecedent), dict(ambiguous.consequent)
    )
    do_query.check(qsm)
    return do_query


# -- Bell demo ---------------------------------------------------------------


@dataclass
class BellReport:
    passive_q1: CfValue
    passive_q2: CfValue
    do_q1: CfValue
    do_q2: CfValue
    edges: tuple[tuple[str, str], ...]


def bell_demo(qsm: Qsm, tol: Tolerance = DEFAULT_TOL) -> BellReport:
    """The common-cause scenario: evidence a = b = 0 under computational-basis
    instruments at A and B and a Bell-pair preparation at C; passive and
    do-interventional readings of "had a' been different, would b' = 1"."""
    names = {n.name for n in qsm.endogenous}
    if names != {"A", "B", "C"}:
        raise ModelMismatchError("Bell model must have endogenous nodes A, B, C")
    a_node, b_node, c_node = qsm.node("A"), qsm.node("B"), qsm.node("C")
    if a_node.in_dim != 2 or b_node.in_dim != 2 or c_node.out_dim != 4:
        raise ModelMismatchError("Bell model needs qubit A/B nodes and a 4-dim C output")
    if ("A", "B") in qsm.dag.edges or ("B", "A") in qsm.dag.edges:
        raise ModelMismatchError("Bell model must not have an edge between A and B")
    if set(qsm.dag.edges) != {("C", "A"), ("C", "B")}:
        raise ModelMismatchError("Bell model edges must be C->A and C->B")

    ket0 = np.array([1.0, 0.0], dtype=complex)
    ket1 = np.array([0.0, 1.0], dtype=complex)
    bell = np.zeros(4, dtype=complex)
    bell[0] = bell[3] = 1.0 / np.sqrt(2.0)

    def basis_instr(node: QuantumNode, setting: str) -> Instrument:
        els = []
        for k, vec in enumerate((ket0, ket1)):
            data = np.kron(projector(vec).T, projector(vec))
            els.append(InstrumentElement(str(k), LabeledOperator(node.choi_factors, data)))
        return Instrument(node, setting, tuple(els))

    i_a = basis_instr(a_node, "zA")
    i_b = basis_instr(b_node, "zB")
    prep = np.kron(projector(bell).T, np.eye(c_node.in_dim, dtype=complex))
    i_c = Instrument(
        c_node, "zC", (InstrumentElement("phi+", LabeledOperator(c_node.choi_factors, prep)),)
    )

    # the model must transport C's preparation to A.in (x) B.in unchanged
    sigma = marginal_process(qsm)
    probe = _born_fixing(
        sigma,
        qsm,
        {"A": i_a, "B": i_b, "C": i_c},
        {"A": "0", "B": "0", "C": "phi+"},
    )
    if abs(probe - 0.5) > 1e-6:
        raise ModelMismatchError(
            "model does not route the Bell preparation through identity channels"
        )

    evidence = Evidence({"A": i_a, "B": i_b, "C": i_c}, {"A": "0", "B": "0", "C": "phi+"})

    def passive(antecedent_value: str) -> CfValue:
        query = CfQuery(
            evidence,
            {"A": i_a, "B": i_b, "C": i_c},
            {"A": antecedent_value},
            {"B": "1"},
        )
        return evaluate(qsm, query, tol)

    def do_reading(antecedent_value: str) -> CfValue:
        vec = ket1 if antecedent_value == "1" else ket0
        state = LabeledOperator(a_node.out_labels, projector(vec))
        query = CfQuery(
            evidence,
            {"A": make_do_instrument(a_node, state, antecedent_value), "B": i_b, "C": i_c},
            {"A": antecedent_value},
            {"B": "1"},
        )
        return evaluate(qsm, query, tol)

    return BellReport(
        passive_q1=passive("1"),
        passive_q2=passive("0"),
        do_q1=do_reading("1"),
        do_q2=do_reading("0"),
        edges=tuple(sorted(qsm.dag.edges)),
    )


def make_bell_model() -> Qsm:
    """The Fig.-style common cause model: C's two output qubits wired by
    identity channels into A and B."""
    from .instruments import ExogenousInstrument, ExogenousOutcome, trivial_exogenous
    from .qsm import build_wired_qsm
    from .dag import Dag

    a = QuantumNode.qubit("A")
    b = QuantumNode.qubit("B")
    c = QuantumNode.of_dims("C", 4, [2, 2])
    lc_node = QuantumNode.of_dims("LC", 1, 4)
    lc = ExogenousInstrument(
        lc_node,
        (
            ExogenousOutcome(
                ".", 1.0, LabeledOperator(lc_node.out_labels, np.eye(4, dtype=complex) / 4.0)
            ),
        ),
    )
    dag = Dag(["A", "B", "C"], {("C", "A"), ("C", "B")})
    wires = {
        "C.out.0": "A.in",
        "C.out.1": "B.in",
        "LC.out": "C.in",
        "A.out": "sink",
        "B.out": "sink",
    }
    return build_wired_qsm(
        [a, b, c], [trivial_exogenous("LA"), trivial_exogenous("LB"), lc], dag, wires
    )
