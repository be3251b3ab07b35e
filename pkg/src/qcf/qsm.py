"""Quantum structural causal models: assembly, validation, marginalization
and structural-compatibility checking."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dag import Dag
from .errors import (
    DimensionMismatchError,
    InvalidModelError,
    NodeMismatchError,
    TooLargeError,
)
from .instruments import (
    ExogenousInstrument,
    QuantumNode,
    validate_instrument,
)
from .maps import LinearMap, wire_permutation
from .process import (
    ChannelOperator,
    ProcessOperator,
    check_no_influence_map,
    check_no_influence_perm,
    conditional_process,
    markov_report,
)
from .tensor import (
    DEFAULT_TOL,
    LabeledOperator,
    SpaceLabel,
    Tolerance,
    permute_factors,
    tensor_all,
)

_DENSE_LIMIT = 4096


def make_sink(in_labels) -> QuantumNode:
    """Sink node with the given input factors and a trivial output space."""
    in_labels = tuple(in_labels)
    return QuantumNode("S", in_labels, (SpaceLabel("S.out", 1),))


@dataclass
class Qsm:
    """Endogenous quantum nodes, one discard-and-prepare exogenous instrument
    per node, a sink, and a unitary (or isometry) routing node outputs and
    exogenous preparations into node inputs and the sink."""

    endogenous: tuple[QuantumNode, ...]
    exogenous: tuple[ExogenousInstrument, ...]
    sink: QuantumNode
    unitary: LinearMap
    dag: Dag
    do_states: dict = field(default_factory=dict)

    def __post_init__(self):
        self.endogenous = tuple(self.endogenous)
        self.exogenous = tuple(self.exogenous)
        if len(self.endogenous) != len(self.exogenous):
            raise InvalidModelError("need exactly one exogenous instrument per node")
        if set(self.dag.nodes) != {n.name for n in self.endogenous}:
            raise NodeMismatchError("dag nodes do not match endogenous node names")
        canon_out = [f.name for f in self._canonical_out()]
        canon_in = [f.name for f in self._canonical_in()]
        have_out = [f.name for f in self.unitary.out_factors]
        have_in = [f.name for f in self.unitary.in_factors]
        if sorted(canon_out) != sorted(have_out) or sorted(canon_in) != sorted(have_in):
            raise DimensionMismatchError(
                "unitary factors do not match node/exogenous/sink spaces"
            )
        if have_out != canon_out or have_in != canon_in:
            self.unitary = self.unitary.reorder(out_names=canon_out, in_names=canon_in)

    def _canonical_out(self):
        return tuple(f for n in self.endogenous for f in n.in_labels) + tuple(
            self.sink.in_labels
        )

    def _canonical_in(self):
        return tuple(f for n in self.endogenous for f in n.out_labels) + tuple(
            f for ex in self.exogenous for f in ex.node.out_labels
        )

    def node(self, name: str) -> QuantumNode:
        for n in self.endogenous:
            if n.name == name:
                return n
        raise NodeMismatchError(f"no endogenous node named {name!r}")

    def exogenous_for(self, endo_name: str) -> ExogenousInstrument:
        idx = [n.name for n in self.endogenous].index(endo_name)
        return self.exogenous[idx]

    def lambda_assignments(self):
        """All joint exogenous outcome assignments with their prior weight,
        restricted to nonzero prior."""
        combos = [({}, 1.0)]
        for ex in self.exogenous:
            new = []
            for assign, w in combos:
                for o in ex.outcomes:
                    if o.prob > 0.0:
                        a = dict(assign)
                        a[ex.node.name] = o.label
                        new.append((a, w * o.prob))
            combos = new
        return combos

    def prior(self, assignment) -> float:
        p = 1.0
        for ex in self.exogenous:
            p *= ex.outcome(assignment[ex.node.name]).prob
        return p


def build_wired_qsm(endogenous, exogenous, dag, wires, do_states=None) -> Qsm:
    """Construct a QSM whose unitary is a wire permutation.

    ``wires`` maps each input factor name (endogenous node outputs and
    exogenous outputs) either to an input factor name of an endogenous node
    or to the string "sink".  Sink factors are created in wire order.
    """
    endogenous = tuple(endogenous)
    exogenous = tuple(exogenous)
    in_factors = tuple(f for n in endogenous for f in n.out_labels) + tuple(
        f for ex in exogenous for f in ex.node.out_labels
    )
    endo_in = tuple(f for n in endogenous for f in n.in_labels)
    routing = {}
    sink_labels = []
    for f in in_factors:
        if f.name not in wires:
            if f.dim == 1:
                tgt = "sink"  # trivial factors need no explicit routing
            else:
                raise InvalidModelError(f"factor {f.name} has no wire")
        else:
            tgt = wires[f.name]
        if tgt == "sink":
            label = SpaceLabel(f"S.in.{len(sink_labels)}", f.dim)
            sink_labels.append(label)
            routing[f.name] = label.name
        else:
            routing[f.name] = tgt
    sink = make_sink(sink_labels)
    out_factors = endo_in + tuple(sink.in_labels)
    unitary = wire_permutation(out_factors, in_factors, routing)
    return Qsm(endogenous, exogenous, sink, unitary, dag, do_states or {})


@dataclass
class QsmValidation:
    isometry_defect: float
    exogenous_valid: dict
    no_influence_exogenous: dict
    no_influence_dag: dict
    ok: bool


def _no_influence(qsm: Qsm, source_labels, target_labels, tol: Tolerance) -> bool:
    perm = getattr(qsm.unitary, "permutation", None)
    if perm is not None:
        return check_no_influence_perm(
            perm,
            qsm.unitary.in_factors,
            qsm.unitary.out_factors,
            source_labels,
            target_labels,
        )
    if qsm.unitary.in_dim > _DENSE_LIMIT:
        raise TooLargeError("model too large for dense no-influence checking")
    return check_no_influence_map(qsm.unitary, source_labels, target_labels, tol)


def validate_qsm(qsm: Qsm, tol: Tolerance = DEFAULT_TOL) -> QsmValidation:
    """Isometry residual, exogenous-instrument validity, and both families of
    no-influence constraints (exogenous wiring and dag structure)."""
    perm = getattr(qsm.unitary, "permutation", None)
    if perm is not None:
        defect = 0.0 if len(set(map(int, perm))) == len(perm) else 1.0
    else:
        defect = qsm.unitary.isometry_defect()

    exo_valid = {}
    for ex in qsm.exogenous:
        report = validate_instrument(ex.as_instrument(), tol)
        exo_valid[ex.node.name] = report.valid

    ni_exo = {}
    for j, ex in enumerate(qsm.exogenous):
        for i, node in enumerate(qsm.endogenous):
            if i == j:
                continue
            ni_exo[(ex.node.name, node.name)] = _no_influence(
                qsm, [f.name for f in ex.node.out_labels], [f.name for f in node.in_labels], tol
            )

    ni_dag = {}
    parents = {n: set(qsm.dag.parents(n)) for n in qsm.dag.nodes}
    for src in qsm.endogenous:
        for dst in qsm.endogenous:
            if src.name == dst.name or src.name in parents[dst.name]:
                continue
            ni_dag[(src.name, dst.name)] = _no_influence(
                qsm, [f.name for f in src.out_labels], [f.name for f in dst.in_labels], tol
            )

    ok = (
        defect <= tol.eps_trace
        and all(exo_valid.values())
        and all(ni_exo.values())
        and all(ni_dag.values())
    )
    return QsmValidation(defect, exo_valid, ni_exo, ni_dag, ok)


def marginal_process(qsm: Qsm) -> ProcessOperator:
    """sigma over endogenous nodes, marginalized over the exogenous outcomes
    (equals sum_lambda P(lambda) sigma^lambda)."""
    acc = None
    factors = None
    for assignment, weight in qsm.lambda_assignments():
        sigma = conditional_process(qsm, assignment)
        if acc is None:
            acc = weight * sigma.op.data
            factors = sigma.op.factors
        else:
            acc = acc + weight * sigma.op.data
    if acc is None:
        raise InvalidModelError("no exogenous assignment has nonzero probability")
    return ProcessOperator(qsm.endogenous, LabeledOperator(factors, acc))


@dataclass
class CompatibilityReport:
    markov: bool
    structural: bool
    residuals: dict


def derive_markov_factors(qsm: Qsm) -> list[ChannelOperator]:
    """Candidate factorization of the marginal process: per node, the Choi
    operator of the channel from its parents' outputs to its input, with the
    other node outputs fed the maximally mixed state and the exogenous nodes
    fed their average preparations."""
    if qsm.unitary.in_dim > _DENSE_LIMIT:
        raise TooLargeError("model too large for dense factor derivation")
    factors = []
    endo_names = [n.name for n in qsm.endogenous]
    for node in qsm.endogenous:
        pa = qsm.dag.parents(node.name)
        pa_out = [f.name for p in pa for f in qsm.node(p).out_labels]
        keep = [f.name for f in node.in_labels]
        other_out = [
            f
            for n in qsm.endogenous
            if n.name not in pa
            for f in n.out_labels
        ]
        fed_parts = []
        for f in other_out:
            fed_parts.append(
                LabeledOperator((f,), np.eye(f.dim, dtype=complex) / f.dim)
            )
        for ex in qsm.exogenous:
            fed_parts.append(ex.average_state())
        fed = tensor_all(fed_parts)
        op = _channel_choi_dense(qsm.unitary, pa_out, keep, fed)
        factors.append(ChannelOperator(node.name, tuple(pa), op))
    return factors


def _channel_choi_dense(W: LinearMap, x_names, keep_names, fed: LabeledOperator) -> LabeledOperator:
    """Process-convention Choi of X -> Tr_rest[W (X (x) fed) W^dagger],
    restricted to the kept output factors."""
    in_names = [f.name for f in W.in_factors]
    out_names = [f.name for f in W.out_factors]
    fed_names = [n for n in in_names if n not in set(x_names)]
    rest_out = [n for n in out_names if n not in set(keep_names)]
    Wr = W.reorder(out_names=list(keep_names) + rest_out, in_names=list(x_names) + fed_names)
    fed = permute_factors(fed, fed_names)
    d_k = math.prod(f.dim for f in Wr.out_factors if f.name in set(keep_names))
    d_r = Wr.out_dim // d_k
    d_x = math.prod(f.dim for f in Wr.in_factors if f.name in set(x_names))
    d_f = Wr.in_dim // d_x

    T = Wr.matrix.reshape(d_k, d_r, d_x, d_f)
    M = np.einsum("krxf,fg->krxg", T, fed.data)
    R = np.einsum("krxg,lryg->kxly", M, T.conj()).reshape(d_k * d_x, d_k * d_x)
    kept = tuple(f for f in Wr.out_factors if f.name in set(keep_names))
    xfac = tuple(f for f in Wr.in_factors if f.name in set(x_names))
    return LabeledOperator(kept + xfac, R)


def check_structural_compatibility(
    sigma: ProcessOperator, dag: Dag, qsm: Qsm, tol: Tolerance = DEFAULT_TOL
) -> CompatibilityReport:
    """Structural verdict: the model marginal reproduces sigma and the model
    unitary satisfies the dag's no-influence constraints.  Markov verdict:
    the derived parent-conditional factorization reproduces sigma."""
    if {n.name for n in sigma.nodes} != {n.name for n in qsm.endogenous}:
        raise NodeMismatchError("process and model are over different nodes")

    marginal = marginal_process(qsm)
    marg_dist = sigma.op.distance(marginal.op)

    parents = {n: set(dag.parents(n)) for n in dag.nodes}
    ni_ok = True
    for src in qsm.endogenous:
        for dst in qsm.endogenous:
            if src.name == dst.name or src.name in parents[dst.name]:
                continue
            if not _no_influence(
                qsm,
                [f.name for f in src.out_labels],
                [f.name for f in dst.in_labels],
                tol,
            ):
                ni_ok = False
    structural = marg_dist <= tol.eps_trace and ni_ok

    factors = derive_markov_factors(qsm)
    report = markov_report(sigma, dag, factors, tol)

    residuals = {
        "marginal_distance": marg_dist,
        "no_influence_ok": ni_ok,
        "markov_commutator": report.max_commutator,
        "markov_product_distance": report.product_distance,
    }
    return CompatibilityReport(report.ok, structural, residuals)
