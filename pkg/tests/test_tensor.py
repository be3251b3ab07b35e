import numpy as np
import pytest

from qcf import (
    LabeledOperator,
    SpaceLabel,
    Tolerance,
    basis_projector,
    identity,
    is_hermitian,
    is_psd,
    partial_trace,
    partial_transpose,
    permute_factors,
    projector,
    tensor,
)
from qcf.errors import DuplicateLabelError, NotAPermutationError, UnknownLabelError
from qcf.rand import random_density

from conftest import KET0, KET1, MINUS, PLUS

X = SpaceLabel("X", 2)
Y = SpaceLabel("Y", 3)


def rand_op(labels, rng, hermitian=False):
    d = int(np.prod([f.dim for f in labels]))
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    if hermitian:
        m = m + m.conj().T
    return LabeledOperator(tuple(labels), m)


def bell_projector():
    v = np.zeros(4, dtype=complex)
    v[0] = v[3] = 1 / np.sqrt(2)
    return v


def test_tensor_identities():
    out = tensor(identity([X]), identity([Y]))
    assert out.names == ("X", "Y")
    assert np.allclose(out.data, np.eye(6))


def test_tensor_basis_projectors():
    x2 = SpaceLabel("X", 2)
    y2 = SpaceLabel("Y", 2)
    out = tensor(basis_projector(x2, 0), basis_projector(y2, 1))
    expect = np.zeros((4, 4))
    expect[1, 1] = 1.0  # |01>
    assert np.allclose(out.data, expect)


def test_tensor_plus_minus_pattern():
    # direct 4x4 Kronecker expansion as the oracle
    x2, y2 = SpaceLabel("X", 2), SpaceLabel("Y", 2)
    got = tensor(
        LabeledOperator((x2,), projector(PLUS)), LabeledOperator((y2,), projector(MINUS))
    )
    oracle = np.kron(projector(PLUS), projector(MINUS))
    assert np.allclose(got.data, oracle)
    assert np.allclose(np.abs(got.data), 0.25)


def test_tensor_rejects_duplicate_labels():
    with pytest.raises(DuplicateLabelError):
        tensor(identity([X]), identity([SpaceLabel("X", 2)]))


def test_partial_trace_product_state():
    rng = np.random.default_rng(1)
    rho_x = LabeledOperator((X,), random_density(2, rng))
    rho_y = LabeledOperator((Y,), random_density(3, rng))
    joint = tensor(rho_x, rho_y)
    reduced = partial_trace(joint, {"Y"})
    assert reduced.names == ("X",)
    assert np.allclose(reduced.data, rho_x.data)


def test_partial_trace_bell_marginal():
    ab = (SpaceLabel("A", 2), SpaceLabel("B", 2))
    bell = LabeledOperator(ab, projector(bell_projector()))
    reduced = partial_trace(bell, {"B"})
    assert np.allclose(reduced.data, np.eye(2) / 2)


def test_partial_trace_all_factors_gives_scalar():
    rng = np.random.default_rng(2)
    rho = LabeledOperator((X, Y), random_density(6, rng))
    scalar = partial_trace(rho, {"X", "Y"})
    assert scalar.data.shape == (1, 1)
    assert abs(scalar.data[0, 0] - 1.0) < 1e-12


def test_partial_trace_unknown_label():
    with pytest.raises(UnknownLabelError):
        partial_trace(identity([X]), {"Z"})


def test_partial_transpose_empty_and_unit():
    rng = np.random.default_rng(3)
    rho = rand_op([X, Y], rng)
    assert partial_transpose(rho, set()).allclose(rho, 0)
    unit = LabeledOperator((X,), np.outer(KET0, KET1.conj()))
    flipped = partial_transpose(unit, {"X"})
    assert np.allclose(flipped.data, np.outer(KET1, KET0.conj()))


def test_partial_transpose_bell_gives_swap():
    ab = (SpaceLabel("A", 2), SpaceLabel("B", 2))
    bell = LabeledOperator(ab, projector(bell_projector()))
    pt = partial_transpose(bell, {"B"})
    swap = np.zeros((4, 4))
    for i in range(2):
        for j in range(2):
            swap[i * 2 + j, j * 2 + i] = 1.0
    assert np.allclose(pt.data, swap / 2)


def test_permute_factors_swaps_product():
    rng = np.random.default_rng(4)
    rho_x = LabeledOperator((X,), random_density(2, rng))
    rho_y = LabeledOperator((Y,), random_density(3, rng))
    joint = tensor(rho_x, rho_y)
    swapped = permute_factors(joint, ["Y", "X"])
    assert swapped.names == ("Y", "X")
    assert np.allclose(swapped.data, np.kron(rho_y.data, rho_x.data))
    # identity permutation and double swap
    assert permute_factors(joint, ["X", "Y"]) is joint
    assert permute_factors(swapped, ["X", "Y"]).allclose(joint, 0)


def test_permute_factors_rejects_non_permutation():
    with pytest.raises(NotAPermutationError):
        permute_factors(identity([X, Y]), ["X", "X"])


def test_psd_and_hermitian_checks():
    assert is_psd(LabeledOperator((X,), np.eye(2) / 2))
    bad = LabeledOperator((X,), np.diag([1.0, -0.1]))
    assert not is_psd(bad, Tolerance(eps_psd=1e-9))
    ab = (SpaceLabel("A", 2), SpaceLabel("B", 2))
    assert is_psd(LabeledOperator(ab, projector(bell_projector())))
    skew = LabeledOperator((X,), np.array([[0, 1], [0, 0]], dtype=complex))
    assert not is_hermitian(skew)


# -- algebra invariants on random operators ----------------------------------


def test_tensor_associative_and_trace_multiplicative():
    rng = np.random.default_rng(5)
    z = SpaceLabel("Z", 2)
    a, b, c = rand_op([X], rng), rand_op([Y], rng), rand_op([z], rng)
    left = tensor(tensor(a, b), c)
    right = tensor(a, tensor(b, c))
    assert left.allclose(right, 1e-12)
    ab = tensor(a, b)
    assert abs(ab.trace() - a.trace() * b.trace()) < 1e-9


def test_partial_trace_of_tensor_scales():
    rng = np.random.default_rng(6)
    a, b = rand_op([X], rng), rand_op([Y], rng)
    joint = tensor(a, b)
    reduced = partial_trace(joint, {"Y"})
    assert np.allclose(reduced.data, b.trace() * a.data)


def test_partial_transpose_involution_and_commutes_with_trace():
    rng = np.random.default_rng(7)
    z = SpaceLabel("Z", 3)
    op = rand_op([X, Y, z], rng)
    twice = partial_transpose(partial_transpose(op, {"Y"}), {"Y"})
    assert twice.allclose(op, 1e-12)
    assert abs(partial_transpose(op, {"Y"}).trace() - op.trace()) < 1e-9
    # transpose on Y then trace out Z == trace out Z then transpose on Y
    one = partial_trace(partial_transpose(op, {"Y"}), {"Z"})
    other = partial_transpose(partial_trace(op, {"Z"}), {"Y"})
    assert one.allclose(other, 1e-12)


def test_permute_preserves_eigenvalues():
    rng = np.random.default_rng(8)
    for _ in range(5):
        op = rand_op([X, Y], rng, hermitian=True)
        permuted = permute_factors(op, ["Y", "X"])
        assert np.allclose(
            np.linalg.eigvalsh(op.data), np.linalg.eigvalsh(permuted.data), atol=1e-9
        )
