"""Constructive embedding of classical probabilistic structural models into
quantum structural models: binary extension, reversible extension, CNOT copy
protocol, isometry assembly, exogenous-distribution encoding, and the
classical/quantum agreement harness."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .classical import (
    ClassicalCsm,
    ClassicalPsm,
    ClassicalQuery,
    FiniteVar,
    StructuralFunction,
    classical_counterfactual,
)
from .counterfactual import CfQuery, Evidence, evaluate
from .errors import InconsistentPlanError, InvalidModelError, TooLargeError
from .instruments import (
    ExogenousInstrument,
    ExogenousOutcome,
    Instrument,
    InstrumentElement,
    QuantumNode,
    make_do_instrument,
)
from .maps import LinearMap
from .qsm import Qsm
from .tensor import LabeledOperator, SpaceLabel

DIMENSION_GUARD = 2**16


def _pow2ceil(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def _pad_labels(values: tuple[str, ...], size: int) -> tuple[str, ...]:
    pads = []
    k = 0
    existing = set(values)
    while len(values) + len(pads) < size:
        cand = f"~pad{k}"
        if cand not in existing:
            pads.append(cand)
        k += 1
    return values + tuple(pads)


# -- (i) binary extension -----------------------------------------------------


@dataclass
class BinaryCsm:
    """A CSM whose value sets all have power-of-two cardinality; original
    values keep their positions, padded inputs map to the function value at
    the lexicographically smallest original input."""

    csm: ClassicalCsm
    original_endo: dict[str, int]  # name -> number of original values
    original_exo: dict[str, int]


def binarize(csm: ClassicalCsm) -> BinaryCsm:
    endo = tuple(
        FiniteVar(v.name, _pad_labels(v.values, _pow2ceil(len(v.values))))
        for v in csm.endogenous
    )
    exo = tuple(
        FiniteVar(v.name, _pad_labels(v.values, _pow2ceil(len(v.values))))
        for v in csm.exogenous
    )
    endo_by_name = {v.name: v for v in endo}
    functions = []
    for f, u_old, u_new in zip(csm.functions_in_order(), csm.exogenous, exo):
        old_endo = {v.name: v for v in csm.endogenous}
        star_key = (u_old.values[0],) + tuple(old_endo[p].values[0] for p in f.parents)
        star_value = f.table[star_key]
        domains = [u_new.values] + [endo_by_name[p].values for p in f.parents]
        table = {}
        for key in itertools.product(*domains):
            original = key[0] in u_old.values and all(
                kp in old_endo[p].values for kp, p in zip(key[1:], f.parents)
            )
            table[key] = f.table[key] if original else star_value
        functions.append(StructuralFunction(f.target, f.parents, table))
    bcsm = ClassicalCsm(endo, exo, tuple(functions))
    return BinaryCsm(
        bcsm,
        {v.name: len(v.values) for v in csm.endogenous},
        {v.name: len(v.values) for v in csm.exogenous},
    )


def extend_priors(psm: ClassicalPsm, b: BinaryCsm) -> ClassicalPsm:
    """The PSM over the binary extension: original priors, zero on padding."""
    priors = []
    for var, prior in zip(b.csm.exogenous, psm.priors):
        priors.append(tuple(prior) + (0.0,) * (len(var.values) - len(prior)))
    return ClassicalPsm(b.csm, tuple(priors))


# -- (ii) reversible extension -------------------------------------------------


@dataclass
class NodeReversible:
    """Per-node bijection (u', pa...) -> (v, s) on index-coded values.

    ``u_plus`` extends the binarized exogenous set with zero-probability
    values so that a bijection exists whose value component agrees with the
    structural function on the whole binarized domain; the ancilla set T'
    is kept as a structural singleton.
    """

    name: str
    n_bits: int
    v_size: int
    u_size: int  # binarized (pre-extension) exogenous cardinality
    u_plus: int
    t_size: int
    s_size: int
    s_tilde: int  # max preimage size before power-of-two padding
    parents: tuple[str, ...]
    parent_sizes: tuple[int, ...]
    forward: dict  # (u_idx, pa_idx tuple) -> (v_idx, s_idx)


@dataclass
class ReversibleCsm:
    binary: BinaryCsm
    nodes: dict[str, NodeReversible]


def reversify(b: BinaryCsm) -> ReversibleCsm:
    csm = b.csm
    endo = {v.name: v for v in csm.endogenous}
    nodes = {}
    for f, u_var in zip(csm.functions_in_order(), csm.exogenous):
        var = endo[f.target]
        v_size = len(var.values)
        u_size = len(u_var.values)
        parent_sizes = tuple(len(endo[p].values) for p in f.parents)
        pa_space = list(itertools.product(*[range(s) for s in parent_sizes]))
        pa_total = math.prod(parent_sizes) if parent_sizes else 1

        classes: list[list[tuple]] = [[] for _ in range(v_size)]
        for u_idx in range(u_size):
            for pa in pa_space:
                key = (u_var.values[u_idx],) + tuple(
                    endo[p].values[i] for p, i in zip(f.parents, pa)
                )
                v_idx = var.index(f.table[key])
                classes[v_idx].append((u_idx,) + pa)
        s_tilde = max(len(c) for c in classes)
        s_size = _pow2ceil(s_tilde)
        u_plus = max(u_size, (v_size * s_size) // pa_total)
        if u_plus * pa_total != v_size * s_size:
            raise InconsistentPlanError(
                f"cardinality equation fails at {f.target}: "
                f"{u_plus}*{pa_total} != {v_size}*{s_size}"
            )

        filler = [
            (u_idx,) + pa
            for u_idx in range(u_size, u_plus)
            for pa in pa_space
        ]
        filler.reverse()  # pop() hands them out in lexicographic order
        forward = {}
        for v_idx in range(v_size):
            members = list(classes[v_idx])
            while len(members) < s_size:
                members.append(filler.pop())
            members.sort()
            for rank, key in enumerate(members):
                forward[key] = (v_idx, rank)
        if filler:
            raise InconsistentPlanError(f"unassigned filler rows at {f.target}")
        if len(forward) != u_plus * pa_total or len(set(forward.values())) != len(forward):
            raise InconsistentPlanError(f"extension at {f.target} is not a bijection")

        nodes[f.target] = NodeReversible(
            name=f.target,
            n_bits=int(math.log2(v_size)),
            v_size=v_size,
            u_size=u_size,
            u_plus=u_plus,
            t_size=1,
            s_size=s_size,
            s_tilde=s_tilde,
            parents=f.parents,
            parent_sizes=parent_sizes,
            forward=forward,
        )
    return ReversibleCsm(b, nodes)


# -- (iii) copy protocol -------------------------------------------------------


@dataclass
class NodeCopyPlan:
    children: tuple[str, ...]
    ancillae: tuple[str, ...]  # one label per child, in child order
    gates: tuple[tuple[str, int], ...]  # (ancilla, qubit index within the node)


@dataclass
class CopyPlan:
    nodes: dict[str, NodeCopyPlan]

    def gate_count(self, name: str) -> int:
        return len(self.nodes[name].gates)


def plan_copies(r: ReversibleCsm) -> CopyPlan:
    dag = r.binary.csm.dag
    order = dag.topological_order()
    plans = {}
    for name in order:
        children = tuple(c for c in order if name in dag.parents(c))
        n_bits = r.nodes[name].n_bits
        ancillae = tuple(f"anc.{child}.{name}" for child in children)
        gates = tuple(
            (anc, k) for anc in ancillae for k in range(n_bits)
        )
        plans[name] = NodeCopyPlan(children, ancillae, gates)
    return CopyPlan(plans)


# -- (iv) assembly --------------------------------------------------------------


@dataclass
class LiftResult:
    qsm: Qsm
    measurements: dict[str, Instrument]
    value_labels: dict[str, tuple[str, ...]]  # node -> original value labels
    copies: dict[str, int]  # node -> number of carried copies r_i
    sink_dims: dict[str, int]
    reversible: ReversibleCsm
    plan: CopyPlan

    def measurement_settings(self) -> dict[str, Instrument]:
        return dict(self.measurements)

    def do_instrument(self, name: str, value: str) -> Instrument:
        """Arrow-breaking preparation of the copied basis state for ``value``."""
        node = self.qsm.node(name)
        k = self.value_labels[name].index(value)
        r = self.copies[name]
        v_size = self.reversible.nodes[name].v_size
        idx = 0
        for _ in range(r):
            idx = idx * v_size + k
        data = np.zeros((node.out_dim, node.out_dim), dtype=complex)
        data[idx, idx] = 1.0
        return make_do_instrument(node, LabeledOperator(node.out_labels, data), value)


def assemble_isometry(r: ReversibleCsm, plan: CopyPlan) -> LiftResult:
    csm = r.binary.csm
    dag = csm.dag
    order = dag.topological_order()
    nodes = {name: r.nodes[name] for name in order}
    children = {name: plan.nodes[name].children for name in order}
    for name in order:
        want = tuple(c for c in order if name in dag.parents(c))
        if children[name] != want:
            raise InconsistentPlanError(f"copy plan at {name} does not match the dag")
    r_copies = {name: max(len(children[name]), 1) for name in order}

    # quantum nodes: r_i carried copies of the value space
    q_nodes = []
    for name in order:
        d = nodes[name].v_size ** r_copies[name]
        q_nodes.append(QuantumNode.of_dims(name, d, d))
    q_by_name = {n.name: n for n in q_nodes}

    # exogenous nodes: ancilla bundle (x) extended exogenous register
    exo_instruments = []
    for name in order:
        anc_dim = nodes[name].v_size ** len(children[name])
        exo_node = QuantumNode.of_dims(f"L.{name}", 1, [anc_dim, nodes[name].u_plus])
        exo_instruments.append((name, exo_node))

    # factor layout of the global permutation
    in_factors: list[SpaceLabel] = []
    for n in q_nodes:
        in_factors.extend(n.out_labels)
    for _, exo_node in exo_instruments:
        in_factors.extend(exo_node.out_labels)

    sink_labels: list[SpaceLabel] = []
    sink_dims = {}
    for name in order:
        node = nodes[name]
        if children[name]:
            sink_labels.append(SpaceLabel(f"S.{name}.own", node.v_size))
        sink_labels.append(SpaceLabel(f"S.{name}.aux", node.s_size))
        sink_dims[name] = node.s_size * (node.v_size if children[name] else 1)
    for name in order:
        if not children[name]:
            sink_labels.append(SpaceLabel(f"S.{name}.pass", q_by_name[name].out_dim))
    out_factors: list[SpaceLabel] = []
    for n in q_nodes:
        out_factors.extend(n.in_labels)
    out_factors.extend(sink_labels)

    in_dims = [f.dim for f in in_factors]
    out_dims = [f.dim for f in out_factors]
    total = math.prod(in_dims)
    if total != math.prod(out_dims):
        raise InconsistentPlanError("assembled map is not square")
    if total > DIMENSION_GUARD:
        raise TooLargeError(f"lifted dimension {total} exceeds the guard")

    slot = {
        name: {child: k for k, child in enumerate(children[name])} for name in order
    }

    def route(in_vals: list[int]) -> list[int]:
        pos = 0
        w: dict[str, tuple[int, ...]] = {}
        for name in order:
            node = nodes[name]
            r_i = r_copies[name]
            composite = in_vals[pos]
            pos += 1
            vals = []
            for _ in range(r_i):
                composite, v = divmod(composite, node.v_size)
                vals.append(v)
            vals.reverse()
            w[name] = tuple(vals)
        anc: dict[str, tuple[int, ...]] = {}
        u_val: dict[str, int] = {}
        for name in order:
            node = nodes[name]
            a_composite = in_vals[pos]
            u_val[name] = in_vals[pos + 1]
            pos += 2
            vals = []
            for _ in range(len(children[name])):
                a_composite, v = divmod(a_composite, node.v_size)
                vals.append(v)
            vals.reverse()
            anc[name] = tuple(vals)

        node_in: dict[str, int] = {}
        own: dict[str, int] = {}
        aux: dict[str, int] = {}
        for name in order:
            node = nodes[name]
            pa_vals = tuple(w[p][slot[p][name]] for p in node.parents)
            v_idx, s_idx = node.forward[(u_val[name],) + pa_vals]
            own[name] = v_idx
            aux[name] = s_idx
            if children[name]:
                composite = 0
                for a in anc[name]:
                    composite = composite * node.v_size + (a ^ v_idx)
                node_in[name] = composite
            else:
                node_in[name] = v_idx

        out_vals = [node_in[name] for name in order]
        for name in order:
            if children[name]:
                out_vals.append(own[name])
            out_vals.append(aux[name])
        for name in order:
            if not children[name]:
                composite = 0
                for v in w[name]:
                    composite = composite * nodes[name].v_size + v
                out_vals.append(composite)
        return out_vals

    perm = np.empty(total, dtype=np.int64)
    for idx in range(total):
        rest = idx
        in_vals = [0] * len(in_dims)
        for k in range(len(in_dims) - 1, -1, -1):
            rest, in_vals[k] = divmod(rest, in_dims[k])
        out_vals = route(in_vals)
        out_idx = 0
        for v, d in zip(out_vals, out_dims):
            out_idx = out_idx * d + v
        perm[idx] = out_idx
    if len(set(perm.tolist())) != total:
        raise InconsistentPlanError("assembled map is not a bijection")

    if total <= 2048:
        matrix = np.zeros((total, total), dtype=complex)
        matrix[perm, np.arange(total)] = 1.0
    else:
        matrix = None
    unitary = LinearMap(tuple(out_factors), tuple(in_factors), matrix)
    unitary.permutation = perm

    sink = QuantumNode("S", tuple(sink_labels), (SpaceLabel("S.out", 1),))

    # exogenous preparations: ancillae at |0>, embedded original value on the
    # extended register, original per-value probabilities
    psm = getattr(r, "_psm", None)
    exo_final = []
    value_labels = {}
    for name, exo_node in exo_instruments:
        var = csm.exo_for(name)
        n_orig = r.binary.original_exo[var.name]
        outs = []
        for k in range(n_orig):
            d = exo_node.out_dim
            data = np.zeros((d, d), dtype=complex)
            data[k, k] = 1.0  # ancilla composite 0, register value k
            prob = psm.priors_by_node[name][k] if psm else 1.0 / n_orig
            outs.append(
                ExogenousOutcome(var.values[k], prob, LabeledOperator(exo_node.out_labels, data))
            )
        exo_final.append(ExogenousInstrument(exo_node, tuple(outs)))

    qsm = Qsm(tuple(q_nodes), tuple(exo_final), sink, unitary, dag)

    measurements = {}
    for name in order:
        node = nodes[name]
        n_orig = r.binary.original_endo[name]
        value_labels[name] = tuple(
            csm.endo_var(name).values[k] for k in range(n_orig)
        )
        measurements[name] = _basis_measurement(
            q_by_name[name], node.v_size, r_copies[name], n_orig, value_labels[name]
        )

    return LiftResult(
        qsm=qsm,
        measurements=measurements,
        value_labels=value_labels,
        copies=r_copies,
        sink_dims=sink_dims,
        reversible=r,
        plan=plan,
    )


def _basis_measurement(
    q_node: QuantumNode, v_size: int, r: int, n_orig: int, labels: tuple[str, ...]
) -> Instrument:
    """Projective measurement of the copied preferred basis, completed (when
    the diagonal projectors do not span the space) by an element routing the
    never-occurring remainder to the maximally mixed state."""
    d = q_node.out_dim
    elements = []
    covered = np.zeros((d, d), dtype=complex)
    for k in range(n_orig):
        idx = 0
        for _ in range(r):
            idx = idx * v_size + k
        proj = np.zeros((d, d), dtype=complex)
        proj[idx, idx] = 1.0
        covered += proj
        choi = np.kron(proj.T, proj)
        elements.append(
            InstrumentElement(labels[k], LabeledOperator(q_node.choi_factors, choi))
        )
    rest = np.eye(d, dtype=complex) - covered
    if np.max(np.abs(rest)) > 1e-12:
        omega = np.eye(d, dtype=complex) / d
        choi = np.kron(omega.T, rest)
        elements.append(
            InstrumentElement("~other", LabeledOperator(q_node.choi_factors, choi))
        )
    return Instrument(q_node, "basis", tuple(elements))


def lift(psm: ClassicalPsm) -> LiftResult:
    """The full pipeline from a product-prior PSM to a QSM whose preferred
    basis measurements reproduce the classical joint."""
    if psm.joint_prior is not None:
        raise InvalidModelError("lifting requires a product-form exogenous prior")
    b = binarize(psm.csm)
    r = reversify(b)
    # stash per-node priors for the exogenous encoding
    priors_by_node = {}
    for var, prior, endo in zip(psm.csm.exogenous, psm.priors, psm.csm.endogenous):
        priors_by_node[endo.name] = tuple(prior)
    holder = _PriorHolder(priors_by_node)
    r._psm = holder
    plan = plan_copies(r)
    return assemble_isometry(r, plan)


@dataclass
class _PriorHolder:
    priors_by_node: dict


def quantum_joint(result: LiftResult) -> dict:
    """The lifted model's basis-measurement joint over original values, keyed
    like the classical brute-force joint (variable declaration order)."""
    from .qsm import marginal_process
    from .process import born_probability

    sigma = marginal_process(result.qsm)
    names = [v.name for v in result.reversible.binary.csm.endogenous]
    joint = {}
    for combo in itertools.product(*[result.value_labels[n] for n in names]):
        chosen = {
            name: result.measurements[name].element(value)
            for name, value in zip(names, combo)
        }
        joint[combo] = born_probability(sigma, chosen)
    return joint


def corollary1_check(
    psm: ClassicalPsm, query: ClassicalQuery, result: LiftResult | None = None
) -> tuple[float, float]:
    """Evaluate the same counterfactual classically (three-step procedure) and
    as a do-interventional query in the lifted model; returns both values."""
    classical_value = classical_counterfactual(psm, query)

    if result is None:
        result = lift(psm)
    settings = result.measurement_settings()
    evidence = Evidence(settings, dict(query.evidence))
    cf_settings = dict(settings)
    antecedent = {}
    for name, value in query.antecedent.items():
        cf_settings[name] = result.do_instrument(name, value)
        antecedent[name] = value
    cf_query = CfQuery(evidence, cf_settings, antecedent, dict(query.consequent))
    quantum_value = evaluate(result.qsm, cf_query)
    if quantum_value.is_counterpossible:
        raise InvalidModelError("do-interventional lifted query cannot be a counterpossible")
    return classical_value, quantum_value.probability
