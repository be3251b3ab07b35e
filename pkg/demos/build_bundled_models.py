"""Regenerate the bundled model and query files in models/.

The two chain examples share everything except the exogenous preparation
basis; the Bell file is the common-cause scenario.  Run from the repo root:

    python demos/build_bundled_models.py
"""

import math
from pathlib import Path

import numpy as np

from qcf.documents import (
    DoStateDecl,
    ExoDecl,
    ExoOutcomeDecl,
    InstrDecl,
    InstrElementDecl,
    Loc,
    ModelDocument,
    NodeDecl,
    QueryDocument,
    WireDecl,
    parse_model,
    parse_query,
    serialize_model,
    serialize_query,
)

L0 = Loc(0, 0)
KET0 = np.array([1.0, 0.0], dtype=complex)
KET1 = np.array([0.0, 1.0], dtype=complex)
PLUS = (KET0 + KET1) / math.sqrt(2.0)
MINUS = (KET0 - KET1) / math.sqrt(2.0)


def proj(v):
    return np.outer(v, v.conj())


def as_matrix(arr):
    arr = np.round(np.asarray(arr, dtype=complex), 12)
    return [[[float(c.real), float(c.imag)] for c in row] for row in arr]


def measure_prepare(measured, prepared):
    """Instrument element Choi: (prepared)^T (x) (measured projector)."""
    return as_matrix(np.kron(proj(prepared).T, proj(measured)))


def chain_model(outcome_states) -> ModelDocument:
    doc = ModelDocument(kind="qsm")
    doc.nodes = [
        NodeDecl("A", (2,), (2,), L0),
        NodeDecl("B", (2,), (2,), L0),
    ]
    doc.edges = [("A", "B")]
    doc.exogenous = [
        ExoDecl(
            "L",
            "A",
            1,
            [
                ExoOutcomeDecl(label, 0.5, as_matrix(proj(vec)), L0)
                for label, vec in outcome_states
            ],
            L0,
        )
    ]
    doc.wires = [
        WireDecl("L.out", "A.in", L0),
        WireDecl("A.out", "B.in", L0),
        WireDecl("B.out", "sink", L0),
    ]
    pm = [("+", PLUS), ("-", MINUS)]
    doc.instruments = [
        InstrDecl(
            "IA1",
            "A",
            [InstrElementDecl(o, measure_prepare(v, v), L0) for o, v in pm],
            L0,
        ),
        InstrDecl(
            "IB1",
            "B",
            [InstrElementDecl(o, measure_prepare(v, v), L0) for o, v in pm],
            L0,
        ),
        # active instrument: measure the computational basis, prepare +/-
        InstrDecl(
            "IA3",
            "A",
            [
                InstrElementDecl("+", measure_prepare(KET0, PLUS), L0),
                InstrElementDecl("-", measure_prepare(KET1, MINUS), L0),
            ],
            L0,
        ),
        # active instrument with a tilted measurement basis (angle pi/8)
        InstrDecl(
            "IA4",
            "A",
            [
                InstrElementDecl("+", measure_prepare(_tilt(), PLUS), L0),
                InstrElementDecl("-", measure_prepare(_tilt_perp(), MINUS), L0),
            ],
            L0,
        ),
    ]
    doc.do_states = [DoStateDecl("A", "-", as_matrix(proj(MINUS)), L0)]
    return doc


def _tilt():
    t = math.pi / 8.0
    return np.array([math.cos(t), math.sin(t)], dtype=complex)


def _tilt_perp():
    t = math.pi / 8.0
    return np.array([-math.sin(t), math.cos(t)], dtype=complex)


def bell_model() -> ModelDocument:
    doc = ModelDocument(kind="qsm")
    doc.nodes = [
        NodeDecl("A", (2,), (2,), L0),
        NodeDecl("B", (2,), (2,), L0),
        NodeDecl("C", (4,), (2, 2), L0),
    ]
    doc.edges = [("C", "A"), ("C", "B")]
    doc.exogenous = [
        ExoDecl(
            "LC",
            "C",
            1,
            [ExoOutcomeDecl(".", 1.0, as_matrix(np.eye(4) / 4.0), L0)],
            L0,
        )
    ]
    doc.wires = [
        WireDecl("C.out.0", "A.in", L0),
        WireDecl("C.out.1", "B.in", L0),
        WireDecl("LC.out", "C.in", L0),
        WireDecl("A.out", "sink", L0),
        WireDecl("B.out", "sink", L0),
    ]
    bell = np.zeros(4, dtype=complex)
    bell[0] = bell[3] = 1.0 / math.sqrt(2.0)
    doc.instruments = [
        InstrDecl(
            "IA",
            "A",
            [
                InstrElementDecl("0", measure_prepare(KET0, KET0), L0),
                InstrElementDecl("1", measure_prepare(KET1, KET1), L0),
            ],
            L0,
        ),
        InstrDecl(
            "IB",
            "B",
            [
                InstrElementDecl("0", measure_prepare(KET0, KET0), L0),
                InstrElementDecl("1", measure_prepare(KET1, KET1), L0),
            ],
            L0,
        ),
        InstrDecl(
            "IC",
            "C",
            [
                InstrElementDecl(
                    "phi+", as_matrix(np.kron(proj(bell).T, np.eye(4))), L0
                )
            ],
            L0,
        ),
    ]
    doc.do_states = [
        DoStateDecl("A", "0", as_matrix(proj(KET0)), L0),
        DoStateDecl("A", "1", as_matrix(proj(KET1)), L0),
    ]
    return doc


def quantum_query(settings, outcomes, cf_settings, antecedent, consequent, do=None):
    doc = QueryDocument(kind="quantum-standard")
    doc.evidence_settings = dict(settings)
    doc.evidence_outcomes = dict(outcomes)
    doc.cf_settings = dict(cf_settings)
    doc.cf_do = dict(do or {})
    doc.antecedent = dict(antecedent)
    doc.consequent = dict(consequent)
    for node in doc.antecedent:
        if node not in doc.cf_settings and node not in doc.cf_do:
            doc.kind = "quantum-ambiguous"
    return doc


def xor_chain_classical() -> str:
    return """classical {
  variable V1 values ["0", "1"]
  variable V2 values ["0", "1"]
  exogenous U1 for V1 values ["0", "1"] prior [0.5, 0.5]
  exogenous U2 for V2 values ["0", "1"] prior [0.5, 0.5]
  function V1 from (U1) {
    ("0") -> "0"
    ("1") -> "1"
  }
  function V2 from (U2, V1) {
    ("0", "0") -> "0"
    ("0", "1") -> "1"
    ("1", "0") -> "1"
    ("1", "1") -> "0"
  }
}
"""


def main():
    out = Path(__file__).resolve().parent.parent / "models"
    out.mkdir(exist_ok=True)

    def write_model(name, doc_or_text, header):
        text = doc_or_text if isinstance(doc_or_text, str) else serialize_model(doc_or_text)
        body = f"# {header}\n{text}"
        (out / name).write_text(body, encoding="utf-8")
        if name.endswith(".psm") or name.endswith(".qsm"):
            parse_model(body)  # must round-trip

    def write_query(name, doc, header):
        body = f"# {header}\n{serialize_query(doc)}"
        (out / name).write_text(body, encoding="utf-8")
        parse_query(body)

    write_model(
        "example1.qsm",
        chain_model([("0", KET0), ("1", KET1)]),
        "Chain model, computational-basis exogenous preparation.",
    )
    write_model(
        "example2.qsm",
        chain_model([("+", PLUS), ("-", MINUS)]),
        "Chain model, conjugate-basis exogenous preparation (same average state).",
    )
    write_model("bell.qsm", bell_model(), "Common-cause scenario with a Bell-pair preparation.")
    write_model("xor_chain.psm", xor_chain_classical(), "Two-variable XOR chain, uniform noise.")

    ev = ({"A": "IA1", "B": "IB1"}, {"A": "+"})
    cf_same = {"A": "IA1", "B": "IB1"}
    write_query(
        "example_passive.cf",
        quantum_query(*ev, cf_same, {"A": "-"}, {"B": "-"}),
        'Passive: had a\' been "-" under the same instruments, would b\' be "-"?',
    )
    write_query(
        "example_do.cf",
        quantum_query(
            *ev,
            {"B": "IB1"},
            {"A": "-"},
            {"B": "-"},
            do={"A": ("-", as_matrix(proj(MINUS)))},
        ),
        "Do-interventional: prepare the minus state at A.",
    )
    write_query(
        "example_active_computational.cf",
        quantum_query(*ev, {"A": "IA3", "B": "IB1"}, {"A": "-"}, {"B": "-"}),
        "Active: computational-basis measurement at A (counterpossible in example 1).",
    )
    write_query(
        "example_active_tilted.cf",
        quantum_query(*ev, {"A": "IA4", "B": "IB1"}, {"A": "-"}, {"B": "-"}),
        "Active: tilted measurement at A (numerically well-defined in both examples).",
    )
    write_query(
        "example_ambiguous.cf",
        quantum_query(*ev, {"B": "IB1"}, {"A": "-"}, {"B": "-"}),
        "Ambiguous: no instrument specified at the antecedent node.",
    )

    bell_ev = ({"A": "IA", "B": "IB", "C": "IC"}, {"A": "0", "B": "0", "C": "phi+"})
    bell_cf = {"A": "IA", "B": "IB", "C": "IC"}
    write_query(
        "bell_q1_passive.cf",
        quantum_query(*bell_ev, bell_cf, {"A": "1"}, {"B": "1"}),
        "Bell Q1, passive reading.",
    )
    write_query(
        "bell_q2_passive.cf",
        quantum_query(*bell_ev, bell_cf, {"A": "0"}, {"B": "1"}),
        "Bell Q2, passive reading.",
    )
    write_query(
        "bell_q1_do.cf",
        quantum_query(
            *bell_ev,
            {"B": "IB", "C": "IC"},
            {"A": "1"},
            {"B": "1"},
            do={"A": ("1", as_matrix(proj(KET1)))},
        ),
        "Bell Q1, do-interventional reading.",
    )
    write_query(
        "xor_query.cf",
        _classical_query(),
        "Had V1 been 1 given V1 = V2 = 0, would V2 be 1?",
    )
    print(f"wrote {len(list(out.iterdir()))} files to {out}")


def _classical_query():
    doc = QueryDocument(kind="classical")
    doc.classical_evidence = {"V1": "0", "V2": "0"}
    doc.classical_antecedent = {"V1": "1"}
    doc.classical_consequent = {"V2": "1"}
    return doc


if __name__ == "__main__":
    main()
