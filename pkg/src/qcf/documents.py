"""Textual model and query documents: tokenizer, recursive-descent parser,
serializer, and binding into live model objects.

Complex matrices are written as nested arrays of [re, im] pairs, row-major.
A model file declares one model; queries live in separate files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dag import Dag
from .errors import ParseError
from .instruments import (
    ExogenousInstrument,
    ExogenousOutcome,
    Instrument,
    InstrumentElement,
    QuantumNode,
    trivial_exogenous,
    validate_instrument,
)
from .maps import LinearMap
from .classical import ClassicalCsm, ClassicalPsm, FiniteVar, StructuralFunction
from .qsm import Qsm, build_wired_qsm, make_sink
from .tensor import DEFAULT_TOL, LabeledOperator, SpaceLabel, is_psd


# -- tokens -------------------------------------------------------------------

_PUNCT = ("->", "{", "}", "[", "]", "(", ")", ",")


@dataclass(frozen=True)
class Token:
    kind: str  # "ident" | "string" | "number" | "punct" | "eof"
    value: str
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    line, col = 1, 1
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if text.startswith("->", i):
            tokens.append(Token("punct", "->", line, col))
            i += 2
            col += 2
            continue
        if c in "{}[](),":
            tokens.append(Token("punct", c, line, col))
            i += 1
            col += 1
            continue
        if c == '"':
            j = i + 1
            buf = []
            while j < n and text[j] != '"':
                if text[j] == "\n":
                    raise ParseError("unterminated string", line, col)
                buf.append(text[j])
                j += 1
            if j >= n:
                raise ParseError("unterminated string", line, col)
            tokens.append(Token("string", "".join(buf), line, col))
            col += j - i + 1
            i = j + 1
            continue
        if c.isdigit() or (c in "+-" and i + 1 < n and (text[i + 1].isdigit() or text[i + 1] == ".")):
            j = i
            if c in "+-":
                j += 1
            while j < n and (text[j].isdigit() or text[j] in ".eE" or (text[j] in "+-" and text[j - 1] in "eE")):
                j += 1
            word = text[i:j]
            try:
                float(word)
            except ValueError:
                raise ParseError(f"malformed number {word!r}", line, col) from None
            tokens.append(Token("number", word, line, col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c in "_~":
            j = i
            while j < n and (text[j].isalnum() or text[j] in "._~-"):
                j += 1
            tokens.append(Token("ident", text[i:j], line, col))
            col += j - i
            i = j
            continue
        raise ParseError(f"unexpected character {c!r}", line, col)
    tokens.append(Token("eof", "", line, col))
    return tokens


class _Cursor:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def fail(self, message: str, expected: str | None = None):
        tok = self.peek()
        raise ParseError(message, tok.line, tok.column, expected=expected)

    def expect_punct(self, value: str) -> Token:
        tok = self.peek()
        if tok.kind != "punct" or tok.value != value:
            self.fail(f"found {describe(tok)}", expected=repr(value))
        return self.next()

    def expect_ident(self, *values: str) -> Token:
        tok = self.peek()
        if tok.kind != "ident" or (values and tok.value not in values):
            want = " or ".join(values) if values else "identifier"
            self.fail(f"found {describe(tok)}", expected=want)
        return self.next()

    def expect_string(self) -> Token:
        tok = self.peek()
        if tok.kind != "string":
            self.fail(f"found {describe(tok)}", expected="quoted string")
        return self.next()

    def expect_number(self) -> Token:
        tok = self.peek()
        if tok.kind != "number":
            self.fail(f"found {describe(tok)}", expected="number")
        return self.next()

    def at_ident(self, value: str) -> bool:
        tok = self.peek()
        return tok.kind == "ident" and tok.value == value


def describe(tok: Token) -> str:
    if tok.kind == "eof":
        return "end of input"
    return f"{tok.kind} {tok.value!r}"


# -- document model ------------------------------------------------------------


@dataclass
class Loc:
    line: int
    column: int

    @staticmethod
    def of(tok: Token) -> "Loc":
        return Loc(tok.line, tok.column)


@dataclass
class NodeDecl:
    name: str
    in_dims: tuple[int, ...]
    out_dims: tuple[int, ...]
    loc: Loc


@dataclass
class ExoOutcomeDecl:
    label: str
    prob: float
    matrix: Optional[list]  # None means the trivial dim-1 state
    loc: Loc


@dataclass
class ExoDecl:
    name: str
    for_node: str
    in_dim: int
    outcomes: list[ExoOutcomeDecl]
    loc: Loc
    out_dims: Optional[tuple[int, ...]] = None  # factored output space


@dataclass
class InstrElementDecl:
    outcome: str
    matrix: list
    loc: Loc


@dataclass
class InstrDecl:
    name: str
    node: str
    elements: list[InstrElementDecl]
    loc: Loc


@dataclass
class WireDecl:
    source: str
    target: str  # factor ref or "sink"
    loc: Loc


@dataclass
class UnitaryDecl:
    form: str  # "matrix" | "permutation"
    out_refs: list[str]
    in_refs: list[str]
    matrix: Optional[list] = None
    permutation: Optional[list] = None
    loc: Loc = field(default_factory=lambda: Loc(0, 0))


@dataclass
class DoStateDecl:
    node: str
    outcome: str
    matrix: list
    loc: Loc


@dataclass
class VarDecl:
    name: str
    values: tuple[str, ...]
    loc: Loc


@dataclass
class ClassicalExoDecl:
    name: str
    for_node: str
    values: tuple[str, ...]
    prior: tuple[float, ...]
    loc: Loc


@dataclass
class FunctionRow:
    inputs: tuple[str, ...]
    output: str
    loc: Loc


@dataclass
class FunctionDecl:
    target: str
    exo: str
    parents: tuple[str, ...]
    rows: list[FunctionRow]
    loc: Loc


@dataclass
class ModelDocument:
    kind: str  # "qsm" | "classical-psm"
    nodes: list[NodeDecl] = field(default_factory=list)
    edges: list[tuple[str, str]] = field(default_factory=list)
    exogenous: list[ExoDecl] = field(default_factory=list)
    instruments: list[InstrDecl] = field(default_factory=list)
    wires: list[WireDecl] = field(default_factory=list)
    unitary: Optional[UnitaryDecl] = None
    do_states: list[DoStateDecl] = field(default_factory=list)
    variables: list[VarDecl] = field(default_factory=list)
    classical_exogenous: list[ClassicalExoDecl] = field(default_factory=list)
    functions: list[FunctionDecl] = field(default_factory=list)

    def __eq__(self, other):
        if not isinstance(other, ModelDocument):
            return NotImplemented
        return _strip(self) == _strip(other)


@dataclass
class QueryDocument:
    kind: str  # "classical" | "quantum-standard" | "quantum-ambiguous"
    evidence_settings: dict = field(default_factory=dict)  # node -> instrument name
    evidence_outcomes: dict = field(default_factory=dict)  # node -> outcome
    cf_settings: dict = field(default_factory=dict)  # node -> instrument name
    cf_do: dict = field(default_factory=dict)  # node -> (outcome, matrix)
    antecedent: dict = field(default_factory=dict)
    consequent: dict = field(default_factory=dict)
    classical_evidence: dict = field(default_factory=dict)
    classical_antecedent: dict = field(default_factory=dict)
    classical_consequent: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, QueryDocument):
            return NotImplemented
        return _strip(self) == _strip(other)


def _strip(obj):
    """Structural value of a document, ignoring source locations."""
    if isinstance(obj, Loc):
        return None
    if isinstance(obj, (list, tuple)):
        return [_strip(x) for x in obj]
    if isinstance(obj, dict):
        return {k: _strip(v) for k, v in sorted(obj.items())}
    if hasattr(obj, "__dataclass_fields__"):
        return {
            k: _strip(getattr(obj, k)) for k in obj.__dataclass_fields__ if k != "loc"
        }
    return obj


# -- parsing -------------------------------------------------------------------


def parse_model(text: str) -> ModelDocument:
    cur = _Cursor(tokenize(text))
    head = cur.expect_ident("qsm", "classical")
    if head.value == "qsm":
        return _parse_qsm(cur)
    return _parse_classical(cur)


def parse_query(text: str) -> QueryDocument:
    cur = _Cursor(tokenize(text))
    cur.expect_ident("query")
    head = cur.expect_ident("classical", "quantum")
    if head.value == "classical":
        return _parse_classical_query(cur)
    return _parse_quantum_query(cur)


def _parse_matrix(cur: _Cursor) -> list:
    """Nested [[ [re, im], ... ], ...] rows."""
    cur.expect_punct("[")
    rows = []
    while True:
        rows.append(_parse_row(cur))
        tok = cur.peek()
        if tok.kind == "punct" and tok.value == ",":
            cur.next()
            continue
        break
    cur.expect_punct("]")
    return rows


def _parse_row(cur: _Cursor) -> list:
    cur.expect_punct("[")
    cells = []
    while True:
        cells.append(_parse_cell(cur))
        tok = cur.peek()
        if tok.kind == "punct" and tok.value == ",":
            cur.next()
            continue
        break
    cur.expect_punct("]")
    return cells


def _parse_cell(cur: _Cursor) -> list:
    cur.expect_punct("[")
    re_tok = cur.expect_number()
    cur.expect_punct(",")
    im_tok = cur.expect_number()
    cur.expect_punct("]")
    return [float(re_tok.value), float(im_tok.value)]


def _parse_name_list(cur: _Cursor, kind: str) -> list[str]:
    cur.expect_punct("[")
    names = []
    while True:
        tok = cur.peek()
        if tok.kind == "punct" and tok.value == "]":
            break
        if kind == "string":
            names.append(cur.expect_string().value)
        else:
            names.append(cur.expect_ident().value)
        tok = cur.peek()
        if tok.kind == "punct" and tok.value == ",":
            cur.next()
    cur.expect_punct("]")
    return names


def _parse_qsm(cur: _Cursor) -> ModelDocument:
    doc = ModelDocument(kind="qsm")
    cur.expect_punct("{")
    while True:
        tok = cur.peek()
        if tok.kind == "punct" and tok.value == "}":
            cur.next()
            break
        head = cur.expect_ident(
            "node", "edge", "exogenous", "instrument", "wire", "unitary", "do_state"
        )
        if head.value == "node":
            name = cur.expect_ident()
            cur.expect_punct("{")
            cur.expect_ident("in")
            in_dims = _parse_dims(cur)
            cur.expect_ident("out")
            out_dims = _parse_dims(cur)
            cur.expect_punct("}")
            doc.nodes.append(NodeDecl(name.value, in_dims, out_dims, Loc.of(name)))
        elif head.value == "edge":
            a = cur.expect_ident()
            cur.expect_punct("->")
            b = cur.expect_ident()
            doc.edges.append((a.value, b.value))
        elif head.value == "exogenous":
            name = cur.expect_ident()
            cur.expect_ident("for")
            target = cur.expect_ident()
            cur.expect_punct("{")
            in_dim = 1
            out_dims = None
            outcomes = []
            while not (cur.peek().kind == "punct" and cur.peek().value == "}"):
                item = cur.expect_ident("in", "out", "outcome")
                if item.value == "in":
                    in_dim = int(cur.expect_number().value)
                elif item.value == "out":
                    out_dims = _parse_dims(cur)
                else:
                    label = cur.expect_string()
                    cur.expect_ident("prob")
                    prob = float(cur.expect_number().value)
                    matrix = None
                    if cur.at_ident("state"):
                        cur.next()
                        cur.expect_ident("matrix")
                        matrix = _parse_matrix(cur)
                    outcomes.append(
                        ExoOutcomeDecl(label.value, prob, matrix, Loc.of(label))
                    )
            cur.expect_punct("}")
            doc.exogenous.append(
                ExoDecl(name.value, target.value, in_dim, outcomes, Loc.of(name), out_dims)
            )
        elif head.value == "instrument":
            name = cur.expect_ident()
            cur.expect_ident("at")
            node = cur.expect_ident()
            cur.expect_punct("{")
            elements = []
            while not (cur.peek().kind == "punct" and cur.peek().value == "}"):
                cur.expect_ident("element")
                label = cur.expect_string()
                cur.expect_ident("matrix")
                matrix = _parse_matrix(cur)
                elements.append(InstrElementDecl(label.value, matrix, Loc.of(label)))
            cur.expect_punct("}")
            doc.instruments.append(
                InstrDecl(name.value, node.value, elements, Loc.of(name))
            )
        elif head.value == "wire":
            src = cur.expect_ident()
            cur.expect_punct("->")
            dst = cur.expect_ident()
            doc.wires.append(WireDecl(src.value, dst.value, Loc.of(src)))
        elif head.value == "unitary":
            form = cur.expect_ident("matrix", "permutation")
            cur.expect_ident("out")
            out_refs = _parse_name_list(cur, "ident")
            cur.expect_ident("in")
            in_refs = _parse_name_list(cur, "ident")
            if form.value == "matrix":
                matrix = _parse_matrix(cur)
                doc.unitary = UnitaryDecl(
                    "matrix", out_refs, in_refs, matrix=matrix, loc=Loc.of(form)
                )
            else:
                cur.expect_punct("[")
                perm = []
                while not (cur.peek().kind == "punct" and cur.peek().value == "]"):
                    perm.append(int(cur.expect_number().value))
                    if cur.peek().kind == "punct" and cur.peek().value == ",":
                        cur.next()
                cur.expect_punct("]")
                doc.unitary = UnitaryDecl(
                    "permutation", out_refs, in_refs, permutation=perm, loc=Loc.of(form)
                )
        elif head.value == "do_state":
            node = cur.expect_ident()
            outcome = cur.expect_string()
            cur.expect_ident("matrix")
            matrix = _parse_matrix(cur)
            doc.do_states.append(
                DoStateDecl(node.value, outcome.value, matrix, Loc.of(node))
            )
    _expect_eof(cur)
    return doc


def _parse_dims(cur: _Cursor) -> tuple[int, ...]:
    dims = [int(cur.expect_number().value)]
    while cur.peek().kind == "number":
        dims.append(int(cur.next().value))
    return tuple(dims)


def _parse_classical(cur: _Cursor) -> ModelDocument:
    doc = ModelDocument(kind="classical-psm")
    cur.expect_punct("{")
    while True:
        tok = cur.peek()
        if tok.kind == "punct" and tok.value == "}":
            cur.next()
            break
        head = cur.expect_ident("variable", "exogenous", "function")
        if head.value == "variable":
            name = cur.expect_ident()
            cur.expect_ident("values")
            values = tuple(_parse_name_list(cur, "string"))
            doc.variables.append(VarDecl(name.value, values, Loc.of(name)))
        elif head.value == "exogenous":
            name = cur.expect_ident()
            cur.expect_ident("for")
            target = cur.expect_ident()
            cur.expect_ident("values")
            values = tuple(_parse_name_list(cur, "string"))
            cur.expect_ident("prior")
            cur.expect_punct("[")
            prior = []
            while not (cur.peek().kind == "punct" and cur.peek().value == "]"):
                prior.append(float(cur.expect_number().value))
                if cur.peek().kind == "punct" and cur.peek().value == ",":
                    cur.next()
            cur.expect_punct("]")
            doc.classical_exogenous.append(
                ClassicalExoDecl(name.value, target.value, values, tuple(prior), Loc.of(name))
            )
        else:
            target = cur.expect_ident()
            cur.expect_ident("from")
            cur.expect_punct("(")
            args = []
            while not (cur.peek().kind == "punct" and cur.peek().value == ")"):
                args.append(cur.expect_ident().value)
                if cur.peek().kind == "punct" and cur.peek().value == ",":
                    cur.next()
            cur.expect_punct(")")
            if not args:
                cur.fail("function needs at least its exogenous argument")
            cur.expect_punct("{")
            rows = []
            while not (cur.peek().kind == "punct" and cur.peek().value == "}"):
                open_tok = cur.expect_punct("(")
                inputs = []
                while not (cur.peek().kind == "punct" and cur.peek().value == ")"):
                    inputs.append(cur.expect_string().value)
                    if cur.peek().kind == "punct" and cur.peek().value == ",":
                        cur.next()
                cur.expect_punct(")")
                cur.expect_punct("->")
                out = cur.expect_string()
                rows.append(FunctionRow(tuple(inputs), out.value, Loc.of(open_tok)))
            cur.expect_punct("}")
            doc.functions.append(
                FunctionDecl(target.value, args[0], tuple(args[1:]), rows, Loc.of(target))
            )
    _expect_eof(cur)
    return doc


def _parse_classical_query(cur: _Cursor) -> QueryDocument:
    doc = QueryDocument(kind="classical")
    cur.expect_punct("{")
    while not (cur.peek().kind == "punct" and cur.peek().value == "}"):
        head = cur.expect_ident("evidence", "antecedent", "consequent")
        bucket = {
            "evidence": doc.classical_evidence,
            "antecedent": doc.classical_antecedent,
            "consequent": doc.classical_consequent,
        }[head.value]
        cur.expect_punct("{")
        while not (cur.peek().kind == "punct" and cur.peek().value == "}"):
            name = cur.expect_ident()
            value = cur.expect_string()
            bucket[name.value] = value.value
        cur.expect_punct("}")
    cur.expect_punct("}")
    _expect_eof(cur)
    return doc


def _parse_quantum_query(cur: _Cursor) -> QueryDocument:
    doc = QueryDocument(kind="quantum-standard")
    cur.expect_punct("{")
    while not (cur.peek().kind == "punct" and cur.peek().value == "}"):
        head = cur.expect_ident("evidence", "counterfactual")
        cur.expect_punct("{")
        if head.value == "evidence":
            while not (cur.peek().kind == "punct" and cur.peek().value == "}"):
                item = cur.expect_ident("setting", "outcome")
                node = cur.expect_ident()
                if item.value == "setting":
                    doc.evidence_settings[node.value] = cur.expect_ident().value
                else:
                    doc.evidence_outcomes[node.value] = cur.expect_string().value
        else:
            while not (cur.peek().kind == "punct" and cur.peek().value == "}"):
                item = cur.expect_ident("setting", "do", "antecedent", "consequent")
                node = cur.expect_ident()
                if item.value == "setting":
                    doc.cf_settings[node.value] = cur.expect_ident().value
                elif item.value == "do":
                    outcome = cur.expect_string()
                    cur.expect_ident("state")
                    cur.expect_ident("matrix")
                    matrix = _parse_matrix(cur)
                    doc.cf_do[node.value] = (outcome.value, matrix)
                elif item.value == "antecedent":
                    doc.antecedent[node.value] = cur.expect_string().value
                else:
                    doc.consequent[node.value] = cur.expect_string().value
        cur.expect_punct("}")
    cur.expect_punct("}")
    _expect_eof(cur)
    for node in doc.antecedent:
        if node not in doc.cf_settings and node not in doc.cf_do:
            doc.kind = "quantum-ambiguous"
    return doc


def _expect_eof(cur: _Cursor):
    tok = cur.peek()
    if tok.kind != "eof":
        cur.fail(f"trailing content: {describe(tok)}", expected="end of input")

# -- semantic construction -------------------------------------------------


def _semantic(message: str, loc: Loc) -> ParseError:
    return ParseError(message, loc.line, loc.column, kind="semantic")


def _matrix_to_array(matrix: list, loc: Loc) -> np.ndarray:
    rows = len(matrix)
    arr = np.zeros((rows, len(matrix[0])), dtype=complex)
    for i, row in enumerate(matrix):
        if len(row) != len(matrix[0]):
            raise _semantic("ragged matrix rows", loc)
        for j, cell in enumerate(row):
            arr[i, j] = complex(cell[0], cell[1])
    if arr.shape[0] != arr.shape[1]:
        raise _semantic(f"matrix must be square, got {arr.shape}", loc)
    return arr


def _array_to_matrix(arr: np.ndarray) -> list:
    return [[[float(c.real), float(c.imag)] for c in row] for row in arr]


@dataclass
class BoundQsm:
    """A QSM together with the named instruments declared alongside it."""

    qsm: Qsm
    instruments: dict[str, Instrument]
    document: ModelDocument


def build_qsm(doc: ModelDocument, tol=DEFAULT_TOL) -> BoundQsm:
    if doc.kind != "qsm":
        raise ParseError("not a qsm document", 1, 1, kind="semantic")
    nodes = {}
    node_order = []
    for decl in doc.nodes:
        if decl.name in nodes:
            raise _semantic(f"node {decl.name} declared twice", decl.loc)
        nodes[decl.name] = QuantumNode.of_dims(decl.name, list(decl.in_dims), list(decl.out_dims))
        node_order.append(decl.name)
    if not nodes:
        raise ParseError("qsm declares no nodes", 1, 1, kind="semantic")

    for a, b in doc.edges:
        for end in (a, b):
            if end not in nodes:
                raise ParseError(f"edge references undeclared node {end}", 1, 1, kind="semantic")
    dag = Dag(node_order, set(doc.edges))

    exo_by_target = {}
    exo_instances = {}
    for decl in doc.exogenous:
        if decl.for_node not in nodes:
            raise _semantic(f"exogenous {decl.name} is for undeclared node {decl.for_node}", decl.loc)
        if decl.for_node in exo_by_target:
            raise _semantic(f"node {decl.for_node} has two exogenous declarations", decl.loc)
        out_dim = None
        outcomes = []
        for out in decl.outcomes:
            if out.matrix is None:
                state = np.ones((1, 1), dtype=complex)
            else:
                state = _matrix_to_array(out.matrix, out.loc)
            if out_dim is None:
                out_dim = state.shape[0]
            elif state.shape[0] != out_dim:
                raise _semantic("exogenous outcome states have mixed dimensions", out.loc)
            outcomes.append((out, state))
        if out_dim is None:
            raise _semantic(f"exogenous {decl.name} declares no outcomes", decl.loc)
        if decl.out_dims is not None:
            if math.prod(decl.out_dims) != out_dim:
                raise _semantic(
                    f"declared output dims {decl.out_dims} do not match the "
                    f"{out_dim}-dim outcome states",
                    decl.loc,
                )
            exo_node = QuantumNode.of_dims(decl.name, decl.in_dim, list(decl.out_dims))
        else:
            exo_node = QuantumNode.of_dims(decl.name, decl.in_dim, out_dim)
        built = []
        for out, state in outcomes:
            op = LabeledOperator(exo_node.out_labels, state)
            if not is_psd(op, tol):
                eigs = np.linalg.eigvalsh((state + state.conj().T) / 2)
                raise _semantic(
                    f"outcome {out.label!r} state is not positive semi-definite "
                    f"(min eigenvalue {eigs.min():.3e})",
                    out.loc,
                )
            if abs(np.trace(state) - 1.0) > tol.eps_trace * 10:
                raise _semantic(
                    f"outcome {out.label!r} state has trace {np.trace(state).real!r}, not 1",
                    out.loc,
                )
            built.append(ExogenousOutcome(out.label, out.prob, op))
        total = sum(o.prob for o in built)
        if abs(total - 1.0) > 1e-9:
            raise _semantic(
                f"exogenous {decl.name} outcome probabilities sum to {total}", decl.loc
            )
        exo_by_target[decl.for_node] = ExogenousInstrument(exo_node, tuple(built))
        exo_instances[decl.name] = exo_by_target[decl.for_node]

    exogenous = []
    for name in node_order:
        if name in exo_by_target:
            exogenous.append(exo_by_target[name])
        else:
            exogenous.append(trivial_exogenous(f"~exo.{name}"))

    endo_nodes = [nodes[n] for n in node_order]
    do_states = {}
    for decl in doc.do_states:
        if decl.node not in nodes:
            raise _semantic(f"do_state references undeclared node {decl.node}", decl.loc)
        state = _matrix_to_array(decl.matrix, decl.loc)
        node = nodes[decl.node]
        if state.shape[0] != node.out_dim:
            raise _semantic(
                f"do_state for {decl.node} has dim {state.shape[0]}, node output is {node.out_dim}",
                decl.loc,
            )
        op = LabeledOperator(node.out_labels, state)
        if not is_psd(op, tol):
            eigs = np.linalg.eigvalsh((state + state.conj().T) / 2)
            raise _semantic(
                f"do_state for {decl.node} is not positive semi-definite "
                f"(min eigenvalue {eigs.min():.3e})",
                decl.loc,
            )
        do_states.setdefault(decl.node, {})[decl.outcome] = op

    if doc.unitary is not None and doc.wires:
        raise _semantic("declare either wires or an explicit unitary, not both", doc.unitary.loc)

    if doc.unitary is None:
        wires = {}
        for decl in doc.wires:
            if decl.source in wires:
                raise _semantic(f"factor {decl.source} wired twice", decl.loc)
            wires[decl.source] = decl.target
        known = {
            f.name for n in endo_nodes for f in n.out_labels
        } | {f.name for ex in exogenous for f in ex.node.out_labels}
        targets = {f.name for n in endo_nodes for f in n.in_labels}
        for decl in doc.wires:
            if decl.source not in known:
                raise _semantic(f"wire source {decl.source} is not an output factor", decl.loc)
            if decl.target != "sink" and decl.target not in targets:
                raise _semantic(f"wire target {decl.target} is not a node input factor", decl.loc)
        try:
            qsm = build_wired_qsm(endo_nodes, exogenous, dag, wires, do_states)
        except Exception as exc:  # dimension/coverage problems
            raise ParseError(str(exc), 1, 1, kind="semantic") from exc
    else:
        decl = doc.unitary
        label_index = {}
        for n in endo_nodes:
            for f in n.in_labels + n.out_labels:
                label_index[f.name] = f
        for ex in exogenous:
            for f in ex.node.out_labels:
                label_index[f.name] = f
        in_factors = []
        for ref in decl.in_refs:
            if ref not in label_index:
                raise _semantic(f"unknown factor {ref} in unitary input list", decl.loc)
            in_factors.append(label_index[ref])
        out_factors = []
        sink_labels = []
        for ref in decl.out_refs:
            if ref in label_index:
                out_factors.append(label_index[ref])
            elif ref.startswith("S."):
                raise _semantic(
                    f"sink factor {ref} needs an explicit dim; declare via sink_dims", decl.loc
                )
            else:
                raise _semantic(f"unknown factor {ref} in unitary output list", decl.loc)
        d_in = math.prod(f.dim for f in in_factors)
        d_out = math.prod(f.dim for f in out_factors)
        if d_in % d_out != 0 and d_in != d_out:
            raise _semantic("unitary output dims do not divide input dims", decl.loc)
        sink_dim = d_in // d_out if d_in >= d_out else 1
        sink_label = SpaceLabel("S.in.0", sink_dim)
        sink = make_sink([sink_label] if sink_dim >= 1 else [])
        out_factors = out_factors + list(sink.in_labels)
        if decl.form == "matrix":
            matrix = _matrix_to_array(decl.matrix, decl.loc)
            if matrix.shape != (d_in, d_in):
                raise _semantic(
                    f"unitary matrix is {matrix.shape}, expected {(d_in, d_in)}", decl.loc
                )
            unitary = LinearMap(tuple(out_factors), tuple(in_factors), matrix)
        else:
            perm = np.asarray(decl.permutation, dtype=np.int64)
            if len(perm) != d_in or sorted(perm.tolist()) != list(range(d_in)):
                raise _semantic("permutation is not a bijection on the input space", decl.loc)
            matrix = None
            if d_in <= 2048:
                matrix = np.zeros((d_in, d_in), dtype=complex)
                matrix[perm, np.arange(d_in)] = 1.0
            unitary = LinearMap(tuple(out_factors), tuple(in_factors), matrix)
            unitary.permutation = perm
        qsm = Qsm(tuple(endo_nodes), tuple(exogenous), sink, unitary, dag, do_states)

    instruments = {}
    for decl in doc.instruments:
        if decl.node not in nodes:
            raise _semantic(f"instrument {decl.name} is at undeclared node {decl.node}", decl.loc)
        if decl.name in instruments:
            raise _semantic(f"instrument {decl.name} declared twice", decl.loc)
        node = nodes[decl.node]
        elements = []
        for el in decl.elements:
            arr = _matrix_to_array(el.matrix, el.loc)
            want = node.out_dim * node.in_dim
            if arr.shape[0] != want:
                raise _semantic(
                    f"element {el.outcome!r} has dim {arr.shape[0]}, expected {want} "
                    f"(node output (x) input)",
                    el.loc,
                )
            choi = LabeledOperator(node.choi_factors, arr)
            if not is_psd(choi, tol):
                eigs = np.linalg.eigvalsh((arr + arr.conj().T) / 2)
                raise _semantic(
                    f"element {el.outcome!r} is not completely positive "
                    f"(min Choi eigenvalue {eigs.min():.3e})",
                    el.loc,
                )
            elements.append(InstrumentElement(el.outcome, choi))
        instr = Instrument(node, decl.name, tuple(elements))
        report = validate_instrument(instr, tol)
        if report.trace_residual > tol.eps_trace:
            raise _semantic(
                f"instrument {decl.name} violates the trace condition "
                f"(residual {report.trace_residual:.3e})",
                decl.loc,
            )
        instruments[decl.name] = instr

    return BoundQsm(qsm, instruments, doc)


def build_classical(doc: ModelDocument) -> ClassicalPsm:
    if doc.kind != "classical-psm":
        raise ParseError("not a classical model document", 1, 1, kind="semantic")
    variables = {}
    order = []
    for decl in doc.variables:
        if decl.name in variables:
            raise _semantic(f"variable {decl.name} declared twice", decl.loc)
        variables[decl.name] = FiniteVar(decl.name, decl.values)
        order.append(decl.name)
    exo_for = {}
    priors = {}
    for decl in doc.classical_exogenous:
        if decl.for_node not in variables:
            raise _semantic(
                f"exogenous {decl.name} is for undeclared variable {decl.for_node}", decl.loc
            )
        if decl.for_node in exo_for:
            raise _semantic(f"variable {decl.for_node} has two exogenous declarations", decl.loc)
        if len(decl.prior) != len(decl.values):
            raise _semantic(
                f"prior for {decl.name} has {len(decl.prior)} entries for "
                f"{len(decl.values)} values",
                decl.loc,
            )
        exo_for[decl.for_node] = FiniteVar(decl.name, decl.values)
        priors[decl.for_node] = tuple(decl.prior)
    functions = {}
    for decl in doc.functions:
        if decl.target not in variables:
            raise _semantic(f"function targets undeclared variable {decl.target}", decl.loc)
        if decl.target in functions:
            raise _semantic(f"variable {decl.target} has two functions", decl.loc)
        exo_var = exo_for.get(decl.target)
        if exo_var is None or exo_var.name != decl.exo:
            raise _semantic(
                f"function for {decl.target} must take its exogenous variable first", decl.loc
            )
        for p in decl.parents:
            if p not in variables:
                raise _semantic(f"function parent {p} is undeclared", decl.loc)
        table = {}
        for row in decl.rows:
            if len(row.inputs) != 1 + len(decl.parents):
                raise _semantic(
                    f"row has {len(row.inputs)} inputs, expected {1 + len(decl.parents)}",
                    row.loc,
                )
            if row.inputs in table:
                raise _semantic(f"duplicate row {row.inputs}", row.loc)
            table[row.inputs] = row.output
        functions[decl.target] = StructuralFunction(decl.target, decl.parents, table)

    missing = [n for n in order if n not in exo_for]
    if missing:
        raise ParseError(
            f"variables without exogenous declarations: {missing}", 1, 1, kind="semantic"
        )
    missing = [n for n in order if n not in functions]
    if missing:
        raise ParseError(f"variables without functions: {missing}", 1, 1, kind="semantic")

    try:
        csm = ClassicalCsm(
            tuple(variables[n] for n in order),
            tuple(exo_for[n] for n in order),
            tuple(functions[n] for n in order),
        )
        return ClassicalPsm(csm, tuple(priors[n] for n in order))
    except Exception as exc:
        raise ParseError(str(exc), 1, 1, kind="semantic") from exc


def bind_quantum_query(bound: BoundQsm, doc: QueryDocument, tol=DEFAULT_TOL):
    """Resolve a quantum query document against a model: returns a CfQuery
    (standard) or AmbiguousQuery (antecedent instruments unspecified)."""
    from .counterfactual import AmbiguousQuery, CfQuery, Evidence
    from .instruments import make_do_instrument

    if doc.kind == "classical":
        raise ParseError("classical query bound against a quantum model", 1, 1, kind="semantic")

    def resolve(name: str) -> Instrument:
        if name not in bound.instruments:
            raise ParseError(f"unknown instrument {name}", 1, 1, kind="semantic")
        return bound.instruments[name]

    settings = {n: resolve(ref) for n, ref in doc.evidence_settings.items()}
    evidence = Evidence(settings, dict(doc.evidence_outcomes))

    cf_settings = {n: resolve(ref) for n, ref in doc.cf_settings.items()}
    for node_name, (outcome, matrix) in doc.cf_do.items():
        node = bound.qsm.node(node_name)
        state = LabeledOperator(
            node.out_labels, _matrix_to_array(matrix, Loc(1, 1))
        )
        cf_settings[node_name] = make_do_instrument(node, state, outcome)

    if doc.kind == "quantum-ambiguous":
        return AmbiguousQuery(evidence, dict(doc.antecedent), dict(doc.consequent), cf_settings)
    for node_name in bound.qsm.dag.nodes:
        cf_settings.setdefault(node_name, settings.get(node_name))
    return CfQuery(evidence, cf_settings, dict(doc.antecedent), dict(doc.consequent))


def bind_classical_query(doc: QueryDocument):
    from .classical import ClassicalQuery

    if doc.kind != "classical":
        raise ParseError("expected a classical query document", 1, 1, kind="semantic")
    return ClassicalQuery(
        dict(doc.classical_evidence),
        dict(doc.classical_antecedent),
        dict(doc.classical_consequent),
    )


# -- serialization -----------------------------------------------------------


def _fmt_num(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _fmt_matrix(matrix: list, indent: str) -> str:
    rows = []
    for row in matrix:
        cells = ", ".join(f"[{_fmt_num(c[0])}, {_fmt_num(c[1])}]" for c in row)
        rows.append(f"{indent}  [{cells}]")
    return "[\n" + ",\n".join(rows) + f"\n{indent}]"


def serialize_model(doc: ModelDocument) -> str:
    lines = []
    if doc.kind == "qsm":
        lines.append("qsm {")
        for n in doc.nodes:
            ins = " ".join(str(d) for d in n.in_dims)
            outs = " ".join(str(d) for d in n.out_dims)
            lines.append(f"  node {n.name} {{ in {ins} out {outs} }}")
        for a, b in doc.edges:
            lines.append(f"  edge {a} -> {b}")
        for e in doc.exogenous:
            lines.append(f"  exogenous {e.name} for {e.for_node} {{")
            lines.append(f"    in {e.in_dim}")
            if e.out_dims is not None:
                lines.append("    out " + " ".join(str(d) for d in e.out_dims))
            for o in e.outcomes:
                if o.matrix is None:
                    lines.append(f'    outcome "{o.label}" prob {_fmt_num(o.prob)}')
                else:
                    m = _fmt_matrix(o.matrix, "    ")
                    lines.append(f'    outcome "{o.label}" prob {_fmt_num(o.prob)} state matrix {m}')
            lines.append("  }")
        for i in doc.instruments:
            lines.append(f"  instrument {i.name} at {i.node} {{")
            for el in i.elements:
                m = _fmt_matrix(el.matrix, "    ")
                lines.append(f'    element "{el.outcome}" matrix {m}')
            lines.append("  }")
        for w in doc.wires:
            lines.append(f"  wire {w.source} -> {w.target}")
        if doc.unitary is not None:
            u = doc.unitary
            outs = ", ".join(u.out_refs)
            ins = ", ".join(u.in_refs)
            if u.form == "matrix":
                m = _fmt_matrix(u.matrix, "  ")
                lines.append(f"  unitary matrix out [{outs}] in [{ins}] {m}")
            else:
                perm = ", ".join(str(p) for p in u.permutation)
                lines.append(f"  unitary permutation out [{outs}] in [{ins}] [{perm}]")
        for d in doc.do_states:
            m = _fmt_matrix(d.matrix, "  ")
            lines.append(f'  do_state {d.node} "{d.outcome}" matrix {m}')
        lines.append("}")
    else:
        lines.append("classical {")
        for v in doc.variables:
            vals = ", ".join(f'"{x}"' for x in v.values)
            lines.append(f"  variable {v.name} values [{vals}]")
        for e in doc.classical_exogenous:
            vals = ", ".join(f'"{x}"' for x in e.values)
            prior = ", ".join(_fmt_num(p) for p in e.prior)
            lines.append(
                f"  exogenous {e.name} for {e.for_node} values [{vals}] prior [{prior}]"
            )
        for f in doc.functions:
            args = ", ".join((f.exo,) + f.parents)
            lines.append(f"  function {f.target} from ({args}) {{")
            for row in f.rows:
                ins = ", ".join(f'"{x}"' for x in row.inputs)
                lines.append(f'    ({ins}) -> "{row.output}"')
            lines.append("  }")
        lines.append("}")
    return "\n".join(lines) + "\n"


def serialize_query(doc: QueryDocument) -> str:
    lines = []
    if doc.kind == "classical":
        lines.append("query classical {")
        for title, bucket in (
            ("evidence", doc.classical_evidence),
            ("antecedent", doc.classical_antecedent),
            ("consequent", doc.classical_consequent),
        ):
            lines.append(f"  {title} {{")
            for name, value in bucket.items():
                lines.append(f'    {name} "{value}"')
            lines.append("  }")
        lines.append("}")
    else:
        lines.append("query quantum {")
        lines.append("  evidence {")
        for node, ref in doc.evidence_settings.items():
            lines.append(f"    setting {node} {ref}")
        for node, outcome in doc.evidence_outcomes.items():
            lines.append(f'    outcome {node} "{outcome}"')
        lines.append("  }")
        lines.append("  counterfactual {")
        for node, ref in doc.cf_settings.items():
            lines.append(f"    setting {node} {ref}")
        for node, (outcome, matrix) in doc.cf_do.items():
            m = _fmt_matrix(matrix, "    ")
            lines.append(f'    do {node} "{outcome}" state matrix {m}')
        for node, outcome in doc.antecedent.items():
            lines.append(f'    antecedent {node} "{outcome}"')
        for node, outcome in doc.consequent.items():
            lines.append(f'    consequent {node} "{outcome}"')
        lines.append("  }")
        lines.append("}")
    return "\n".join(lines) + "\n"


def model_to_document(bound_or_qsm, instruments: dict[str, Instrument] | None = None) -> ModelDocument:
    """Document form of a QSM (permutation or matrix unitary), used by the
    lift emitter; wire-built models keep their original documents."""
    qsm = bound_or_qsm.qsm if isinstance(bound_or_qsm, BoundQsm) else bound_or_qsm
    instruments = instruments or {}
    doc = ModelDocument(kind="qsm")
    for n in qsm.endogenous:
        doc.nodes.append(
            NodeDecl(n.name, tuple(f.dim for f in n.in_labels), tuple(f.dim for f in n.out_labels), Loc(0, 0))
        )
    doc.edges = sorted(qsm.dag.edges)
    for endo, ex in zip(qsm.endogenous, qsm.exogenous):
        outcomes = []
        for o in ex.outcomes:
            outcomes.append(
                ExoOutcomeDecl(o.label, o.prob, _array_to_matrix(o.state.data), Loc(0, 0))
            )
        out_dims = tuple(f.dim for f in ex.node.out_labels)
        doc.exogenous.append(
            ExoDecl(
                ex.node.name, endo.name, ex.node.in_dim, outcomes, Loc(0, 0),
                out_dims if len(out_dims) > 1 else None,
            )
        )
    for name, instr in instruments.items():
        elements = [
            InstrElementDecl(e.outcome, _array_to_matrix(e.choi.data), Loc(0, 0))
            for e in instr.elements
        ]
        doc.instruments.append(InstrDecl(name, instr.node.name, elements, Loc(0, 0)))
    out_refs = [f.name for f in qsm.unitary.out_factors if not f.name.startswith("S.")]
    in_refs = [f.name for f in qsm.unitary.in_factors]
    perm = getattr(qsm.unitary, "permutation", None)
    if perm is not None:
        doc.unitary = UnitaryDecl(
            "permutation", out_refs, in_refs, permutation=[int(p) for p in perm], loc=Loc(0, 0)
        )
    else:
        doc.unitary = UnitaryDecl(
            "matrix", out_refs, in_refs, matrix=_array_to_matrix(qsm.unitary.matrix), loc=Loc(0, 0)
        )
    for node, states in qsm.do_states.items():
        for outcome, op in states.items():
            doc.do_states.append(DoStateDecl(node, outcome, _array_to_matrix(op.data), Loc(0, 0)))
    return doc
