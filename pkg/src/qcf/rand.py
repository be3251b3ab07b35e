"""Random operators, channels and instruments for validation batteries and
property tests."""

from __future__ import annotations

import numpy as np

from .instruments import Instrument, InstrumentElement, QuantumNode, choi_of_map
from .tensor import LabeledOperator


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-ish unitary via QR with phase fixing."""
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(z)
    phases = np.diag(r).copy()
    phases /= np.abs(phases)
    return q * phases


def random_isometry(d_out: int, d_in: int, rng: np.random.Generator) -> np.ndarray:
    if d_in > d_out:
        raise ValueError("isometry needs d_in <= d_out")
    return random_unitary(d_out, rng)[:, :d_in]


def random_density(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_state(labels, rng: np.random.Generator) -> LabeledOperator:
    labels = tuple(labels)
    d = 1
    for f in labels:
        d *= f.dim
    return LabeledOperator(labels, random_density(d, rng))


def random_cptp_instrument(
    node: QuantumNode, n_outcomes: int, rng: np.random.Generator, setting: str = "rand"
) -> Instrument:
    """Random instrument with ``n_outcomes`` CP elements summing to a channel,
    built from a Stinespring isometry with an ``n_outcomes``-dim environment."""
    d_in, d_out = node.in_dim, node.out_dim
    V = random_isometry(d_out * n_outcomes, d_in, rng)
    elements = []
    for a in range(n_outcomes):
        K = V[a * d_out : (a + 1) * d_out, :]
        choi = choi_of_map(node, [K])
        elements.append(InstrumentElement(str(a), choi))
    return Instrument(node, setting, tuple(elements))


def random_cptp_choi(node: QuantumNode, rng: np.random.Generator) -> LabeledOperator:
    """Choi operator (intervention convention) of a random channel."""
    d_in, d_out = node.in_dim, node.out_dim
    env = 2
    V = random_isometry(d_out * env, d_in, rng)
    kraus = [V[k * d_out : (k + 1) * d_out, :] for k in range(env)]
    return choi_of_map(node, kraus)
