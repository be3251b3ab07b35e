"""Quantum nodes and instruments as Choi-operator families.

An instrument element's Choi operator lives on ``node.out (x) node.in`` and
follows the intervention convention: the map output is transposed, so a
measure-and-prepare element reads ``(prepared)^T (x) (measured)``.  Summed
over outcomes, a valid instrument satisfies ``Tr_out = I_in``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadStateError, DimensionMismatchError, InvalidModelError
from .tensor import (
    DEFAULT_TOL,
    LabeledOperator,
    SpaceLabel,
    Tolerance,
    identity,
    is_psd,
    partial_trace,
    tensor,
)


def _sublabels(name: str, side: str, dims) -> tuple[SpaceLabel, ...]:
    dims = list(dims)
    if len(dims) == 1:
        return (SpaceLabel(f"{name}.{side}", dims[0]),)
    return tuple(SpaceLabel(f"{name}.{side}.{k}", d) for k, d in enumerate(dims))


@dataclass(frozen=True)
class QuantumNode:
    """A locus of intervention with labeled input and output spaces.

    Either side may be declared as a list of dims, in which case it is
    carried as several tensor factors (``name.out.0``, ``name.out.1``, ...).
    """

    name: str
    in_labels: tuple[SpaceLabel, ...]
    out_labels: tuple[SpaceLabel, ...]

    @staticmethod
    def of_dims(name: str, in_dims, out_dims) -> "QuantumNode":
        if isinstance(in_dims, int):
            in_dims = [in_dims]
        if isinstance(out_dims, int):
            out_dims = [out_dims]
        return QuantumNode(name, _sublabels(name, "in", in_dims), _sublabels(name, "out", out_dims))

    @staticmethod
    def qubit(name: str) -> "QuantumNode":
        return QuantumNode.of_dims(name, 2, 2)

    @property
    def in_dim(self) -> int:
        return math.prod(f.dim for f in self.in_labels)

    @property
    def out_dim(self) -> int:
        return math.prod(f.dim for f in self.out_labels)

    @property
    def choi_factors(self) -> tuple[SpaceLabel, ...]:
        return self.out_labels + self.in_labels

    @property
    def all_labels(self) -> tuple[SpaceLabel, ...]:
        return self.in_labels + self.out_labels


@dataclass(frozen=True)
class InstrumentElement:
    outcome: str
    choi: LabeledOperator


@dataclass(frozen=True)
class Instrument:
    node: QuantumNode
    setting: str
    elements: tuple[InstrumentElement, ...]

    def __post_init__(self):
        outcomes = [e.outcome for e in self.elements]
        if len(set(outcomes)) != len(outcomes):
            raise InvalidModelError(f"duplicate outcomes in instrument {self.setting!r}")
        for e in self.elements:
            if set(e.choi.names) != {f.name for f in self.node.choi_factors}:
                raise DimensionMismatchError(
                    f"element {e.outcome!r} of {self.setting!r} is not over the node factors"
                )

    def element(self, outcome: str) -> InstrumentElement:
        for e in self.elements:
            if e.outcome == outcome:
                return e
        raise InvalidModelError(
            f"instrument {self.setting!r} has no outcome {outcome!r}"
        )

    def outcomes(self) -> tuple[str, ...]:
        return tuple(e.outcome for e in self.elements)

    def channel(self) -> LabeledOperator:
        """Outcome-summed Choi operator tau^{|z}."""
        first = self.elements[0].choi
        acc = first.data.copy()
        for e in self.elements[1:]:
            acc += _aligned(e.choi, first).data
        return LabeledOperator(first.factors, acc)

    def semantically_equal(self, other: "Instrument", atol: float = 1e-9) -> bool:
        """Same node, same outcome labels, element-wise equal Choi operators."""
        if self.node.name != other.node.name:
            return False
        if set(self.outcomes()) != set(other.outcomes()):
            return False
        return all(
            e.choi.allclose(other.element(e.outcome).choi, atol) for e in self.elements
        )


def _aligned(op: LabeledOperator, like: LabeledOperator) -> LabeledOperator:
    from .tensor import permute_factors

    return permute_factors(op, like.names)


@dataclass(frozen=True)
class ExogenousOutcome:
    label: str
    prob: float
    state: LabeledOperator  # density operator over node.out_labels


@dataclass(frozen=True)
class ExogenousInstrument:
    """Discard-and-prepare instrument at an exogenous node: with probability
    ``prob`` prepare ``state`` on the node output, regardless of the input."""

    node: QuantumNode
    outcomes: tuple[ExogenousOutcome, ...]

    def __post_init__(self):
        total = sum(o.prob for o in self.outcomes)
        if abs(total - 1.0) > 1e-9:
            raise InvalidModelError(
                f"exogenous outcome probabilities at {self.node.name} sum to {total}"
            )
        for o in self.outcomes:
            if o.prob < 0:
                raise InvalidModelError(f"negative probability for outcome {o.label!r}")

    def outcome(self, label: str) -> ExogenousOutcome:
        for o in self.outcomes:
            if o.label == label:
                return o
        raise InvalidModelError(f"no exogenous outcome {label!r} at {self.node.name}")

    def average_state(self) -> LabeledOperator:
        """sum_lambda P(lambda) rho^lambda."""
        acc = None
        for o in self.outcomes:
            term = o.prob * o.state.data
            acc = term if acc is None else acc + term
        return LabeledOperator(self.outcomes[0].state.factors, acc)

    def as_instrument(self, setting: str = "prepare") -> Instrument:
        """The same object as a plain instrument (elements P(l) rho^T (x) I)."""
        elements = []
        for o in self.outcomes:
            elements.append(
                InstrumentElement(o.label, discard_and_prepare_choi(self.node, o.state, o.prob))
            )
        return Instrument(self.node, setting, tuple(elements))


def trivial_exogenous(name: str) -> ExogenousInstrument:
    """A dim-1 exogenous node with a single certain outcome; used for
    endogenous nodes whose background is fully known."""
    node = QuantumNode.of_dims(name, 1, 1)
    state = LabeledOperator(node.out_labels, np.ones((1, 1), dtype=complex))
    return ExogenousInstrument(node, (ExogenousOutcome(".", 1.0, state),))


@dataclass
class InstrumentValidation:
    element_psd: dict[str, bool]
    trace_residual: float
    valid: bool


def validate_instrument(instr: Instrument, tol: Tolerance = DEFAULT_TOL) -> InstrumentValidation:
    """Check the CP condition per element and the trace condition on the sum."""
    element_psd = {e.outcome: is_psd(e.choi, tol) for e in instr.elements}
    total = instr.channel()
    out_names = [f.name for f in instr.node.out_labels]
    reduced = partial_trace(total, out_names)
    eye = identity(instr.node.in_labels)
    residual = reduced.distance(eye)
    valid = all(element_psd.values()) and residual <= tol.eps_trace
    return InstrumentValidation(element_psd, residual, valid)


def choi_of_map(node: QuantumNode, kraus_or_map) -> LabeledOperator:
    """Choi operator (intervention convention) of a CP map from the node input
    to the node output, given as a Kraus list or a callable on matrices."""
    d_in, d_out = node.in_dim, node.out_dim
    if callable(kraus_or_map):
        apply = kraus_or_map
    else:
        kraus = [np.asarray(K, dtype=complex) for K in kraus_or_map]
        for K in kraus:
            if K.shape != (d_out, d_in):
                raise DimensionMismatchError(
                    f"Kraus operator shape {K.shape} != ({d_out}, {d_in})"
                )
        apply = lambda X: sum(K @ X @ K.conj().T for K in kraus)

    choi = np.zeros((d_out * d_in, d_out * d_in), dtype=complex)
    for i in range(d_in):
        for j in range(d_in):
            E = np.zeros((d_in, d_in), dtype=complex)
            E[i, j] = 1.0
            out = np.asarray(apply(E), dtype=complex)
            if out.shape != (d_out, d_out):
                raise DimensionMismatchError("map output has wrong dimension")
            basis = np.zeros((d_in, d_in), dtype=complex)
            basis[j, i] = 1.0
            choi += np.kron(out.T, basis)
    return LabeledOperator(node.choi_factors, choi)


def discard_and_prepare_choi(node: QuantumNode, state: LabeledOperator, weight: float = 1.0) -> LabeledOperator:
    """weight * (state)^T (x) I_in over the node's Choi factors."""
    d_out = node.out_dim
    rho = _aligned(state, identity(node.out_labels)).data
    if rho.shape != (d_out, d_out):
        raise DimensionMismatchError("prepared state does not match the node output dim")
    data = weight * np.kron(rho.T, np.eye(node.in_dim, dtype=complex))
    return LabeledOperator(node.choi_factors, data)


def make_do_instrument(node: QuantumNode, state: LabeledOperator, outcome: str = "do") -> Instrument:
    """Single-element arrow-breaking instrument preparing ``state``."""
    if abs(complex(np.trace(state.data)) - 1.0) > 1e-9:
        raise BadStateError("do-state must have unit trace")
    if not is_psd(state):
        raise BadStateError("do-state must be positive semi-definite")
    element = InstrumentElement(outcome, discard_and_prepare_choi(node, state))
    return Instrument(node, f"do({outcome})", (element,))


def make_exogenous_tilde(ex: ExogenousInstrument) -> list[tuple[str, LabeledOperator]]:
    """The tilde-convention operators P(l) (rho^l)^T (x) I/dim(in) per outcome."""
    out = []
    d_in = ex.node.in_dim
    eye = identity(ex.node.in_labels)
    for o in ex.outcomes:
        rho_t = LabeledOperator(o.state.factors, o.state.data.T)
        op = tensor(rho_t, eye)
        op = LabeledOperator(op.factors, op.data * (o.prob / d_in))
        out.append((o.label, op))
    return out
