"""Counterfactual queries in quantum structural causal models."""

from .dag import Dag
from .instruments import (
    ExogenousInstrument,
    ExogenousOutcome,
    Instrument,
    InstrumentElement,
    QuantumNode,
    choi_of_map,
    discard_and_prepare_choi,
    make_do_instrument,
    make_exogenous_tilde,
    validate_instrument,
)
from .maps import LinearMap, process_choi, wire_permutation
from .process import (
    ChannelOperator,
    ProcessOperator,
    born_probability,
    check_markov,
    check_no_influence,
    check_no_influence_map,
    conditional_process,
    likelihood,
    validate_process,
)
from .qsm import (
    CompatibilityReport,
    Qsm,
    build_wired_qsm,
    check_structural_compatibility,
    derive_markov_factors,
    make_sink,
    marginal_process,
    validate_qsm,
)
from .tensor import (
    DEFAULT_TOL,
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
    tensor_all,
)

__version__ = "0.1.0"
