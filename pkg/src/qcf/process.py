"""Process operators: generalized Born rule, Markov factorization,
no-influence tests, conditional processes and likelihoods."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, Union

import numpy as np

from .dag import Dag
from .errors import (
    CoverageError,
    LabelMismatchError,
    MissingAssignmentError,
    TooLargeError,
    UnknownLabelError,
    ZeroProbabilityOutcomeError,
)
from .instruments import Instrument, InstrumentElement, QuantumNode
from .maps import LinearMap
from .tensor import (
    DEFAULT_TOL,
    LabeledOperator,
    SpaceLabel,
    Tolerance,
    expect,
    identity,
    is_psd,
    multiply,
    pad_with_identity,
    partial_trace,
    permute_factors,
    tensor_all,
)

if TYPE_CHECKING:  # pragma: no cover
    from .qsm import Qsm

Assignment = Mapping[str, Union[Instrument, InstrumentElement]]

# Dense conditional-process contraction is refused above this total map dim;
# larger models must provide a basis permutation (see lift).
_DENSE_MAP_LIMIT = 4096


def canonical_factors(nodes) -> tuple[SpaceLabel, ...]:
    factors: tuple[SpaceLabel, ...] = ()
    for node in nodes:
        factors += node.in_labels + node.out_labels
    return factors


@dataclass
class ProcessOperator:
    nodes: tuple[QuantumNode, ...]
    op: LabeledOperator

    def __post_init__(self):
        self.nodes = tuple(self.nodes)
        want = {f.name for f in canonical_factors(self.nodes)}
        if set(self.op.names) != want:
            raise LabelMismatchError(
                f"process factors {sorted(self.op.names)} != node factors {sorted(want)}"
            )

    def node(self, name: str) -> QuantumNode:
        for n in self.nodes:
            if n.name == name:
                return n
        raise UnknownLabelError(f"no node named {name!r}")

    def in_names(self) -> list[str]:
        return [f.name for n in self.nodes for f in n.in_labels]

    def out_names(self) -> list[str]:
        return [f.name for n in self.nodes for f in n.out_labels]


@dataclass
class ProcessValidation:
    psd: bool
    trace_residual: float
    battery_deviation: float
    valid: bool


def born_probability(proc: ProcessOperator, chosen: Assignment) -> float:
    """P = Tr[sigma (tau_1 (x) ... (x) tau_n)].

    Each node maps to either one instrument element (outcome fixed) or a whole
    instrument (outcome summed, i.e. the channel).
    """
    taus = []
    for node in proc.nodes:
        if node.name not in chosen:
            raise MissingAssignmentError(f"no instrument assigned at node {node.name}")
        entry = chosen[node.name]
        if isinstance(entry, InstrumentElement):
            taus.append(entry.choi)
        elif isinstance(entry, Instrument):
            taus.append(entry.channel())
        else:
            raise MissingAssignmentError(
                f"assignment at {node.name} must be an Instrument or InstrumentElement"
            )
    product = tensor_all(taus)
    if set(product.names) != set(proc.op.names):
        raise LabelMismatchError("instrument factors do not match the process factors")
    p = expect(proc.op, product).real
    return min(max(p, 0.0), 1.0)


def validate_process(
    proc: ProcessOperator,
    tol: Tolerance = DEFAULT_TOL,
    battery: int = 64,
    seed: int = 7,
) -> ProcessValidation:
    """Necessary conditions for Def.-style normalization: positivity, the
    trace condition Tr_ins = I_outs, and a randomized battery of product
    CPTP instruments that must all give total probability 1."""
    from .rand import random_cptp_choi

    psd = is_psd(proc.op, tol)
    reduced = partial_trace(proc.op, proc.in_names())
    out_labels = tuple(f for n in proc.nodes for f in n.out_labels)
    residual = reduced.distance(identity(out_labels))

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(battery):
        taus = [random_cptp_choi(node, rng) for node in proc.nodes]
        val = expect(proc.op, tensor_all(taus)).real
        worst = max(worst, abs(val - 1.0))
    valid = psd and residual <= tol.eps_trace and worst <= 1e-7
    return ProcessValidation(psd, residual, worst, valid)


# -- Markov factorization ---------------------------------------------------


@dataclass
class ChannelOperator:
    """A parent-conditional channel operator: PSD on the target's input
    factors and the parents' output factors, with Tr_target_in = I_parents_out."""

    target: str
    parents: tuple[str, ...]
    op: LabeledOperator


@dataclass
class MarkovReport:
    ok: bool
    parent_mismatch: bool
    channel_ok: bool
    max_commutator: float
    product_distance: float


def markov_report(
    proc: ProcessOperator,
    dag: Dag,
    factors: list[ChannelOperator],
    tol: Tolerance = DEFAULT_TOL,
) -> MarkovReport:
    targets = [f.target for f in factors]
    if sorted(targets) != sorted(n.name for n in proc.nodes):
        raise CoverageError(
            f"factors cover {sorted(targets)}, process has {sorted(n.name for n in proc.nodes)}"
        )
    parent_mismatch = any(
        tuple(sorted(f.parents)) != tuple(sorted(dag.parents(f.target))) for f in factors
    )

    channel_ok = True
    for f in factors:
        node = proc.node(f.target)
        if not is_psd(f.op, tol):
            channel_ok = False
            continue
        reduced = partial_trace(f.op, [l.name for l in node.in_labels])
        parent_out = tuple(l for p in f.parents for l in proc.node(p).out_labels)
        if reduced.distance(identity(parent_out)) > tol.eps_trace:
            channel_ok = False

    full = proc.op.factors
    padded = [pad_with_identity(f.op, full) for f in factors]
    max_comm = 0.0
    for i in range(len(padded)):
        for j in range(i + 1, len(padded)):
            comm = padded[i].data @ padded[j].data - padded[j].data @ padded[i].data
            max_comm = max(max_comm, float(np.max(np.abs(comm))))
    product = padded[0]
    for p in padded[1:]:
        product = multiply(product, p)
    distance = proc.op.distance(product)

    ok = (
        not parent_mismatch
        and channel_ok
        and max_comm <= tol.eps_trace
        and distance <= tol.eps_trace
    )
    return MarkovReport(ok, parent_mismatch, channel_ok, max_comm, distance)


def check_markov(
    proc: ProcessOperator,
    dag: Dag,
    factors: list[ChannelOperator],
    tol: Tolerance = DEFAULT_TOL,
) -> bool:
    return markov_report(proc, dag, factors, tol).ok


# -- no-influence test (Def.-style: source input does not reach target output)


def _as_names(arg) -> tuple[str, ...]:
    if isinstance(arg, str):
        return (arg,)
    return tuple(f.name if isinstance(f, SpaceLabel) else f for f in arg)


def check_no_influence(
    unitary_choi: LabeledOperator,
    outputs,
    source,
    target,
    tol: Tolerance = DEFAULT_TOL,
) -> bool:
    """True iff tracing every codomain factor but ``target`` leaves an operator
    of the form (channel on target|other-inputs) (x) I_source.

    ``outputs`` names the codomain factors of the unitary's Choi operator;
    ``source``/``target`` may be single factor names or composite systems.
    """
    outputs = set(_as_names(outputs))
    source = _as_names(source)
    target = _as_names(target)
    all_names = set(unitary_choi.names)
    if not set(target) <= outputs:
        raise UnknownLabelError(f"target {target} is not among the output factors")
    if set(source) & outputs or not set(source) <= all_names:
        raise UnknownLabelError(f"source {source} is not among the input factors")
    reduced = partial_trace(unitary_choi, outputs - set(target))
    return _factors_off_source(reduced, source, tol)


def check_no_influence_map(
    unitary: LinearMap, source, target, tol: Tolerance = DEFAULT_TOL
) -> bool:
    """Same test, computed from the map matrix without forming the full Choi."""
    source = _as_names(source)
    target = _as_names(target)
    out_names = [f.name for f in unitary.out_factors]
    in_names = [f.name for f in unitary.in_factors]
    if not set(target) <= set(out_names):
        raise UnknownLabelError(f"target {target} is not among the output factors")
    if not set(source) <= set(in_names):
        raise UnknownLabelError(f"source {source} is not among the input factors")
    reordered = unitary.reorder(
        out_names=[n for n in out_names if n not in target] + list(target)
    )
    d_t = math.prod(f.dim for f in reordered.out_factors if f.name in target)
    d_c = reordered.out_dim // d_t
    d_in = reordered.in_dim
    W = reordered.matrix.reshape(d_c, d_t, d_in)
    R = np.einsum("cdm,cen->dmen", W, W.conj()).reshape(d_t * d_in, d_t * d_in)
    kept = tuple(f for f in reordered.out_factors if f.name in target)
    reduced = LabeledOperator(kept + reordered.in_factors, R)
    return _factors_off_source(reduced, source, tol)


def check_no_influence_perm(
    permutation: np.ndarray,
    in_factors,
    out_factors,
    source,
    target,
) -> bool:
    """No-influence test for basis-permutation unitaries, via the sparse
    support of Tr_C[rho^U]; exact (no tolerance needed)."""
    in_factors = tuple(in_factors)
    out_factors = tuple(out_factors)
    source = set(_as_names(source))
    target = set(_as_names(target))
    in_names = [f.name for f in in_factors]
    out_names = [f.name for f in out_factors]
    if not source <= set(in_names) or not target <= set(out_names):
        raise UnknownLabelError("source must be input factors, target output factors")

    in_dims = [f.dim for f in in_factors]
    out_dims = [f.dim for f in out_factors]
    s_pos = [i for i, n in enumerate(in_names) if n in source]
    t_pos = [i for i, n in enumerate(out_names) if n in target]
    d_source = math.prod(in_dims[i] for i in s_pos)
    if d_source == 1:
        return True

    def decompose(idx, dims):
        vals = []
        for d in reversed(dims):
            idx, v = divmod(idx, d)
            vals.append(v)
        vals.reverse()
        return vals

    def split_in(idx):
        vals = decompose(idx, in_dims)
        a = tuple(vals[i] for i in s_pos)
        b = tuple(v for k, v in enumerate(vals) if k not in s_pos)
        return a, b

    def split_out(idx):
        vals = decompose(idx, out_dims)
        t = tuple(vals[i] for i in t_pos)
        c = tuple(v for k, v in enumerate(vals) if k not in t_pos)
        return t, c

    # Tr_C[rho^U] = sum over trace-classes c of |psi_c><psi_c| with
    # psi_c = sum_{m: c(p(m)) = c} |t(p(m)), b(m), a(m)>.  It factorizes as
    # S (x) I_source iff every class has a constant source component and the
    # multiset of (t, b)-support sets is identical across source values.
    groups: dict[tuple, list[int]] = {}
    for m, out in enumerate(permutation):
        _, c = split_out(int(out))
        groups.setdefault(c, []).append(m)

    support_by_a: dict[tuple, dict[tuple, int]] = {}
    for members in groups.values():
        entries = []
        a_values = set()
        for m in members:
            a, b = split_in(m)
            t, _ = split_out(int(permutation[m]))
            a_values.add(a)
            entries.append((t, b))
        if len(a_values) != 1:
            return False
        support = tuple(sorted(entries))
        counts = support_by_a.setdefault(support, {})
        a = next(iter(a_values))
        counts[a] = counts.get(a, 0) + 1
    for counts in support_by_a.values():
        if len(counts) != d_source or len(set(counts.values())) != 1:
            return False
    return True


def _factors_off_source(reduced: LabeledOperator, source, tol: Tolerance) -> bool:
    """Check reduced == (Tr_source[reduced]/d_source) (x) I_source."""
    source = set(_as_names(source))
    d_source = math.prod(f.dim for f in reduced.factors if f.name in source)
    rest = partial_trace(reduced, source)
    scaled = LabeledOperator(rest.factors, rest.data / d_source)
    candidate = pad_with_identity(scaled, reduced.factors)
    return reduced.distance(candidate) <= max(tol.eps_trace, tol.eps_psd)


# -- conditional process operators -------------------------------------------


def conditional_process(qsm: "Qsm", assignment: Mapping[str, str]) -> ProcessOperator:
    """The process over endogenous nodes conditioned on exogenous outcomes,
    i.e. prepare the assigned states, apply the model unitary and discard the
    sink.  Feeding the normalized states directly is the same as contracting
    with the weighted preparation operators and dividing by the stored joint
    outcome probability."""
    for ex in qsm.exogenous:
        label = assignment.get(ex.node.name)
        if label is None:
            raise MissingAssignmentError(f"no outcome assigned at {ex.node.name}")
        if ex.outcome(label).prob <= 0.0:
            raise ZeroProbabilityOutcomeError(
                f"outcome {label!r} at {ex.node.name} has zero probability"
            )
    sigma = _conditioned_sigma(qsm, assignment)
    return ProcessOperator(qsm.endogenous, sigma)


def likelihood(
    qsm: "Qsm",
    assignment: Mapping[str, str],
    settings: Mapping[str, Instrument],
    outcomes: Mapping[str, str],
) -> float:
    """P_z(a | lambda): Born probability on the conditional process, with
    outcome-summed channels at nodes without an observed outcome."""
    sigma = conditional_process(qsm, assignment)
    chosen: dict[str, Union[Instrument, InstrumentElement]] = {}
    for node in qsm.endogenous:
        instr = settings[node.name]
        if node.name in outcomes:
            chosen[node.name] = instr.element(outcomes[node.name])
        else:
            chosen[node.name] = instr
    return born_probability(sigma, chosen)


def _conditioned_sigma(qsm: "Qsm", assignment: Mapping[str, str]) -> LabeledOperator:
    """Choi operator of X -> Tr_sink[W (X (x) rho_lambda) W^dagger]."""
    states = []
    for ex in qsm.exogenous:
        state = ex.outcome(assignment[ex.node.name]).state
        states.append(permute_factors(state, [f.name for f in ex.node.out_labels]))
    perm = getattr(qsm.unitary, "permutation", None)
    if perm is not None and all(_is_diagonal(s.data) for s in states):
        return _sigma_from_permutation(qsm, states)
    if qsm.unitary.in_dim > _DENSE_MAP_LIMIT:
        raise TooLargeError(
            "model too large for dense conditioning and not basis-diagonal"
        )
    return _sigma_dense(qsm, states)


def _is_diagonal(m: np.ndarray) -> bool:
    return bool(np.max(np.abs(m - np.diag(np.diag(m)))) < 1e-14)


def _sigma_dense(qsm: "Qsm", states) -> LabeledOperator:
    endo_out = [f.name for n in qsm.endogenous for f in n.out_labels]
    endo_in = [f.name for n in qsm.endogenous for f in n.in_labels]
    exo_out = [f.name for ex in qsm.exogenous for f in ex.node.out_labels]
    sink = [f.name for f in qsm.sink.in_labels]
    W = qsm.unitary.reorder(out_names=endo_in + sink, in_names=endo_out + exo_out)

    rho = tensor_all(states)
    rho = permute_factors(rho, exo_out) if exo_out else rho
    d_ni = math.prod(f.dim for n in qsm.endogenous for f in n.in_labels)
    d_no = math.prod(f.dim for n in qsm.endogenous for f in n.out_labels)
    d_s = W.out_dim // d_ni
    d_eo = W.in_dim // d_no

    T = W.matrix.reshape(d_ni, d_s, d_no, d_eo)
    M = np.einsum("nsoe,ef->nsof", T, rho.data)
    sig = np.einsum("nsof,mspf->nomp", M, T.conj()).reshape(d_ni * d_no, d_ni * d_no)

    factors = tuple(f for n in qsm.endogenous for f in n.in_labels) + tuple(
        f for n in qsm.endogenous for f in n.out_labels
    )
    return LabeledOperator(factors, sig)


def _sigma_from_permutation(qsm: "Qsm", states) -> LabeledOperator:
    """Fast path for basis-permutation unitaries with basis-diagonal
    exogenous preparations."""
    endo_in = [f for n in qsm.endogenous for f in n.in_labels]
    endo_out = [f for n in qsm.endogenous for f in n.out_labels]
    d_ni = math.prod(f.dim for f in endo_in)
    d_no = math.prod(f.dim for f in endo_out)
    d_s = qsm.unitary.out_dim // d_ni

    # exogenous weights over composite basis indices
    weights = [(0, 1.0)]
    for s in states:
        diag = np.diag(s.data).real
        new = []
        for idx, w in weights:
            for k, p in enumerate(diag):
                if p > 0.0:
                    new.append((idx * len(diag) + k, w * p))
        weights = new

    perm = qsm.unitary.permutation
    d_eo = qsm.unitary.in_dim // d_no
    sig = np.zeros((d_ni * d_no, d_ni * d_no), dtype=complex)
    for x, w in weights:
        outs = perm[np.arange(d_no) * d_eo + x]
        node_part = outs // d_s
        sink_part = outs % d_s
        for i in range(d_no):
            si = sink_part[i]
            rows = np.nonzero(sink_part == si)[0]
            for j in rows:
                sig[node_part[i] * d_no + i, node_part[j] * d_no + j] += w
    factors = tuple(endo_in) + tuple(endo_out)
    return LabeledOperator(factors, sig)
