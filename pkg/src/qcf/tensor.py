"""Dense complex linear algebra over labeled composite Hilbert spaces.

Operators carry an ordered list of labeled factors; the factor list is the
single source of truth for composite indexing (row-major).  Equality of two
operators is defined up to a permutation of factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatchError,
    DuplicateLabelError,
    NotAPermutationError,
    UnknownLabelError,
)


@dataclass(frozen=True)
class SpaceLabel:
    """A named Hilbert-space factor of dimension ``dim``."""

    name: str
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionMismatchError(f"factor {self.name!r} has dim {self.dim} < 1")


@dataclass(frozen=True)
class Tolerance:
    """Numerical cutoffs used by validation and probability classification."""

    eps_herm: float = 1e-9
    eps_psd: float = 1e-9
    eps_trace: float = 1e-9
    eps_prob: float = 1e-12

    def __post_init__(self):
        for name in ("eps_herm", "eps_psd", "eps_trace", "eps_prob"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def scaled(self, factor: float) -> "Tolerance":
        return Tolerance(
            self.eps_herm * factor,
            self.eps_psd * factor,
            self.eps_trace * factor,
            self.eps_prob * factor,
        )


DEFAULT_TOL = Tolerance()


def _dims(factors) -> tuple[int, ...]:
    return tuple(f.dim for f in factors)


@dataclass
class LabeledOperator:
    """A complex square matrix over an ordered list of labeled factors."""

    factors: tuple[SpaceLabel, ...]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.factors = tuple(self.factors)
        names = [f.name for f in self.factors]
        if len(set(names)) != len(names):
            raise DuplicateLabelError(f"duplicate factor names in {names}")
        d = math.prod(_dims(self.factors))
        data = np.asarray(self.data, dtype=complex)
        if data.shape != (d, d):
            raise DimensionMismatchError(
                f"matrix shape {data.shape} does not match factor dims {_dims(self.factors)}"
            )
        self.data = data

    # -- bookkeeping ------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.factors)

    def factor(self, name: str) -> SpaceLabel:
        for f in self.factors:
            if f.name == name:
                return f
        raise UnknownLabelError(f"no factor named {name!r}")

    def _axes(self, names) -> list[int]:
        index = {f.name: i for i, f in enumerate(self.factors)}
        axes = []
        for name in names:
            if name not in index:
                raise UnknownLabelError(f"no factor named {name!r}")
            axes.append(index[name])
        return axes

    def _as_tensor(self) -> np.ndarray:
        dims = _dims(self.factors)
        return self.data.reshape(dims + dims)

    def copy(self) -> "LabeledOperator":
        return LabeledOperator(self.factors, self.data.copy())

    # -- scalar results ---------------------------------------------------

    def trace(self) -> complex:
        return complex(np.trace(self.data))

    def dagger(self) -> "LabeledOperator":
        return LabeledOperator(self.factors, self.data.conj().T)

    # -- comparison -------------------------------------------------------

    def allclose(self, other: "LabeledOperator", atol: float = 1e-9) -> bool:
        """Equality up to factor permutation, within ``atol``."""
        if set(self.names) != set(other.names):
            return False
        aligned = permute_factors(other, self.names)
        return bool(np.max(np.abs(self.data - aligned.data)) <= atol)

    def distance(self, other: "LabeledOperator") -> float:
        """Max-entry distance after aligning factor order."""
        aligned = permute_factors(other, self.names)
        return float(np.max(np.abs(self.data - aligned.data)))


def identity(factors) -> LabeledOperator:
    d = math.prod(_dims(factors))
    return LabeledOperator(tuple(factors), np.eye(d, dtype=complex))


def basis_ket(dim: int, k: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[k] = 1.0
    return v


def projector(vec: np.ndarray) -> np.ndarray:
    v = np.asarray(vec, dtype=complex).reshape(-1)
    return np.outer(v, v.conj())


def basis_projector(label: SpaceLabel, k: int) -> LabeledOperator:
    return LabeledOperator((label,), projector(basis_ket(label.dim, k)))


def maximally_mixed(label: SpaceLabel) -> LabeledOperator:
    return LabeledOperator((label,), np.eye(label.dim, dtype=complex) / label.dim)


def tensor(a: LabeledOperator, b: LabeledOperator) -> LabeledOperator:
    """Kronecker product; factor list is the concatenation ``a.factors ++ b.factors``."""
    overlap = set(a.names) & set(b.names)
    if overlap:
        raise DuplicateLabelError(f"factor names occur on both sides: {sorted(overlap)}")
    return LabeledOperator(a.factors + b.factors, np.kron(a.data, b.data))


def tensor_all(ops) -> LabeledOperator:
    ops = list(ops)
    if not ops:
        return LabeledOperator((), np.ones((1, 1), dtype=complex))
    out = ops[0]
    for op in ops[1:]:
        out = tensor(out, op)
    return out


def partial_trace(op: LabeledOperator, discard) -> LabeledOperator:
    """Trace out the named factors; remaining factors keep their relative order."""
    discard = set(discard)
    axes = sorted(op._axes(discard))
    tens = op._as_tensor()
    n = len(op.factors)
    # np.trace removes one (row, col) axis pair at a time; renumber as we go.
    removed = 0
    for ax in axes:
        row = ax - removed
        col = row + (n - removed)
        tens = np.trace(tens, axis1=row, axis2=col)
        removed += 1
    kept = tuple(f for f in op.factors if f.name not in discard)
    d = math.prod(_dims(kept))
    return LabeledOperator(kept, tens.reshape(d, d))


def partial_transpose(op: LabeledOperator, on) -> LabeledOperator:
    """Transpose the named factors (involutive, trace preserving)."""
    axes = op._axes(set(on))
    n = len(op.factors)
    perm = list(range(2 * n))
    for ax in axes:
        perm[ax], perm[ax + n] = perm[ax + n], perm[ax]
    tens = op._as_tensor().transpose(perm)
    return LabeledOperator(op.factors, tens.reshape(op.dim, op.dim))


def permute_factors(op: LabeledOperator, new_order) -> LabeledOperator:
    """Reindex ``op`` so its factor list matches ``new_order`` (a name sequence)."""
    names = [f.name if isinstance(f, SpaceLabel) else f for f in new_order]
    if sorted(names) != sorted(op.names):
        raise NotAPermutationError(
            f"{names} is not a permutation of factors {list(op.names)}"
        )
    if tuple(names) == op.names:
        return op
    axes = op._axes(names)
    n = len(op.factors)
    perm = axes + [ax + n for ax in axes]
    tens = op._as_tensor().transpose(perm)
    factors = tuple(op.factors[ax] for ax in axes)
    return LabeledOperator(factors, tens.reshape(op.dim, op.dim))


def is_hermitian(op: LabeledOperator, tol: Tolerance = DEFAULT_TOL) -> bool:
    return bool(np.max(np.abs(op.data - op.data.conj().T)) <= tol.eps_herm)


def is_psd(op: LabeledOperator, tol: Tolerance = DEFAULT_TOL) -> bool:
    if not is_hermitian(op, tol):
        return False
    herm = (op.data + op.data.conj().T) / 2
    eigs = np.linalg.eigvalsh(herm)
    return bool(eigs.min() >= -tol.eps_psd)


def multiply(a: LabeledOperator, b: LabeledOperator) -> LabeledOperator:
    """Matrix product after aligning ``b``'s factors to ``a``'s order."""
    b = permute_factors(b, a.names)
    return LabeledOperator(a.factors, a.data @ b.data)


def pad_with_identity(op: LabeledOperator, full_factors) -> LabeledOperator:
    """Embed ``op`` in the composite space ``full_factors`` (extra factors get I)."""
    full = tuple(full_factors)
    have = set(op.names)
    missing = tuple(f for f in full if f.name not in have)
    extra = set(have) - {f.name for f in full}
    if extra:
        raise UnknownLabelError(f"operator factors {sorted(extra)} not in target space")
    padded = tensor(op, identity(missing)) if missing else op
    return permute_factors(padded, [f.name for f in full])


def expect(a: LabeledOperator, b: LabeledOperator) -> complex:
    """Tr[a b] with factor alignment."""
    b = permute_factors(b, a.names)
    return complex(np.trace(a.data @ b.data))
