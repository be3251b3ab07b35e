import math
from pathlib import Path

import numpy as np
import pytest

from qcf import (
    Dag,
    ExogenousInstrument,
    ExogenousOutcome,
    Instrument,
    InstrumentElement,
    LabeledOperator,
    QuantumNode,
    build_wired_qsm,
    projector,
)
from qcf.instruments import trivial_exogenous

MODELS = Path(__file__).resolve().parent.parent / "models"

KET0 = np.array([1.0, 0.0], dtype=complex)
KET1 = np.array([0.0, 1.0], dtype=complex)
PLUS = (KET0 + KET1) / math.sqrt(2.0)
MINUS = (KET0 - KET1) / math.sqrt(2.0)


def measure_prepare_instrument(node, setting, pairs):
    """Elements (prepared)^T (x) (measured) from (outcome, measured, prepared)."""
    els = tuple(
        InstrumentElement(
            outcome,
            LabeledOperator(
                node.choi_factors, np.kron(projector(prepared).T, projector(measured))
            ),
        )
        for outcome, measured, prepared in pairs
    )
    return Instrument(node, setting, els)


def pm_instrument(node, setting="1"):
    return measure_prepare_instrument(
        node, setting, [("+", PLUS, PLUS), ("-", MINUS, MINUS)]
    )


def chain_qsm(outcome_states, probs=None):
    """The two-node chain with a declared exogenous preparation at A."""
    a = QuantumNode.qubit("A")
    b = QuantumNode.qubit("B")
    lam = QuantumNode.of_dims("L", 1, 2)
    if probs is None:
        probs = [1.0 / len(outcome_states)] * len(outcome_states)
    outcomes = tuple(
        ExogenousOutcome(label, p, LabeledOperator(lam.out_labels, projector(vec)))
        for (label, vec), p in zip(outcome_states, probs)
    )
    exo = ExogenousInstrument(lam, outcomes)
    dag = Dag(["A", "B"], {("A", "B")})
    return build_wired_qsm(
        [a, b],
        [exo, trivial_exogenous("LB")],
        dag,
        {"L.out": "A.in", "A.out": "B.in", "B.out": "sink"},
    )


@pytest.fixture
def example1():
    return chain_qsm([("0", KET0), ("1", KET1)])


@pytest.fixture
def example2():
    return chain_qsm([("+", PLUS), ("-", MINUS)])


def identity_process_choi(out_label, in_label):
    """sum_ij |i><j| (x) |i><j| over (out_label, in_label)."""
    d = out_label.dim
    data = sum(
        np.kron(np.outer(np.eye(d)[i], np.eye(d)[j]), np.outer(np.eye(d)[i], np.eye(d)[j]))
        for i in range(d)
        for j in range(d)
    )
    return LabeledOperator((out_label, in_label), data)
