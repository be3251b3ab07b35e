"""Linear maps between labeled composite spaces, kept in matrix form.

A ``LinearMap`` with matrix ``W`` represents the conjugation channel
``X -> W X W^dagger`` (used for the unitaries/isometries of structural
models); general CP maps enter the library only through their Choi
operators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, DuplicateLabelError, UnknownLabelError
from .tensor import LabeledOperator, SpaceLabel


@dataclass
class LinearMap:
    """An operator ``matrix`` mapping the composite ``in_factors`` space into
    the composite ``out_factors`` space."""

    out_factors: tuple[SpaceLabel, ...]
    in_factors: tuple[SpaceLabel, ...]
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.out_factors = tuple(self.out_factors)
        self.in_factors = tuple(self.in_factors)
        names = [f.name for f in self.out_factors] + [f.name for f in self.in_factors]
        if len(set(names)) != len(names):
            raise DuplicateLabelError("in/out factor names must be disjoint and unique")
        if self.matrix is None:
            return  # permutation-only map too large to materialize
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.out_dim, self.in_dim):
            raise DimensionMismatchError(
                f"matrix shape {m.shape} does not match factor dims "
                f"({self.out_dim}, {self.in_dim})"
            )
        self.matrix = m

    @property
    def in_dim(self) -> int:
        return math.prod(f.dim for f in self.in_factors)

    @property
    def out_dim(self) -> int:
        return math.prod(f.dim for f in self.out_factors)

    def isometry_defect(self) -> float:
        """Max-entry norm of W^dagger W - I."""
        if self.matrix is None:
            raise DimensionMismatchError("map matrix was not materialized")
        d = self.in_dim
        return float(np.max(np.abs(self.matrix.conj().T @ self.matrix - np.eye(d))))

    def reorder(self, out_names=None, in_names=None) -> "LinearMap":
        """Permute tensor factors on either side."""
        if self.matrix is None:
            raise DimensionMismatchError("map matrix was not materialized")
        m = self.matrix
        out_f, in_f = self.out_factors, self.in_factors
        if out_names is not None:
            out_f, perm = _factor_perm(self.out_factors, out_names)
            dims = tuple(f.dim for f in self.out_factors)
            m = m.reshape(dims + (self.in_dim,)).transpose(tuple(perm) + (len(dims),))
            m = m.reshape(self.out_dim, self.in_dim)
        if in_names is not None:
            in_f, perm = _factor_perm(self.in_factors, in_names)
            dims = tuple(f.dim for f in self.in_factors)
            m = m.reshape((self.out_dim,) + dims).transpose((0,) + tuple(p + 1 for p in perm))
            m = m.reshape(self.out_dim, self.in_dim)
        return LinearMap(out_f, in_f, m)


def _factor_perm(factors, names):
    index = {f.name: i for i, f in enumerate(factors)}
    perm = []
    for name in names:
        if name not in index:
            raise UnknownLabelError(f"no factor named {name!r}")
        perm.append(index[name])
    if len(perm) != len(factors):
        raise DimensionMismatchError("factor reorder must mention every factor once")
    return tuple(factors[p] for p in perm), perm


def wire_permutation(out_factors, in_factors, routing) -> LinearMap:
    """Permutation map routing each input factor to an output factor.

    ``routing`` maps input factor names to output factor names; dims must
    match pairwise and the routing must be a bijection.
    """
    out_factors = tuple(out_factors)
    in_factors = tuple(in_factors)
    out_index = {f.name: i for i, f in enumerate(out_factors)}
    seen = set()
    targets = []
    for f in in_factors:
        if f.name not in routing:
            raise UnknownLabelError(f"input factor {f.name!r} has no route")
        tgt = routing[f.name]
        if tgt not in out_index:
            raise UnknownLabelError(f"route target {tgt!r} is not an output factor")
        if tgt in seen:
            raise DuplicateLabelError(f"two inputs routed to {tgt!r}")
        seen.add(tgt)
        if out_factors[out_index[tgt]].dim != f.dim:
            raise DimensionMismatchError(
                f"wire {f.name} -> {tgt} joins dims {f.dim} != {out_factors[out_index[tgt]].dim}"
            )
        targets.append(out_index[tgt])
    if len(seen) != len(out_factors):
        raise DimensionMismatchError("routing must cover every output factor")

    in_dims = [f.dim for f in in_factors]
    out_dims = [f.dim for f in out_factors]
    d = math.prod(in_dims)
    perm = np.empty(d, dtype=np.int64)
    out_strides = np.ones(len(out_dims), dtype=np.int64)
    for i in range(len(out_dims) - 2, -1, -1):
        out_strides[i] = out_strides[i + 1] * out_dims[i + 1]
    for idx in range(d):
        rest = idx
        out_idx = 0
        for pos in range(len(in_dims) - 1, -1, -1):
            rest, val = divmod(rest, in_dims[pos])
            out_idx += val * out_strides[targets[pos]]
        perm[idx] = out_idx
    matrix = np.zeros((d, d), dtype=complex)
    matrix[perm, np.arange(d)] = 1.0
    lm = LinearMap(out_factors, in_factors, matrix)
    lm.permutation = perm  # basis routing table, used by fast paths
    return lm


def process_choi(map_: LinearMap) -> LabeledOperator:
    """Choi operator of X -> W X W^dagger in the process convention
    (no transpose; identity wires give sums of |i><j| (x) |i><j|)."""
    W = map_.matrix
    d_in, d_out = map_.in_dim, map_.out_dim
    # sum_ij (W E_ij W^dag) (x) E_ij  ==  reshuffle of (W (x) W.conj())
    block = np.einsum("ai,bj->abij", W, W.conj())
    choi = block.reshape(d_out, d_out, d_in, d_in).transpose(0, 2, 1, 3)
    choi = choi.reshape(d_out * d_in, d_out * d_in)
    return LabeledOperator(map_.out_factors + map_.in_factors, choi)


def apply_conjugation(map_: LinearMap, rho: np.ndarray) -> np.ndarray:
    return map_.matrix @ np.asarray(rho, dtype=complex) @ map_.matrix.conj().T
