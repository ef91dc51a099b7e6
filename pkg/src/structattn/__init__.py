"""Differentiable structured attention: chain and tree CRF inference with
exact backpropagation in signed log space."""

from .attention import (
    build_qa_potentials,
    build_segmentation_potentials,
    categorical_context,
    pairwise_penalty,
    qa_context,
    segmentation_context,
    sigmoid_context,
    soft_parent_context,
)
from .chain_crf import (
    ChainMarginals,
    ChainPotentials,
    ChainTables,
    chain_backprop,
    forward_backward,
    top_k_sequences,
    viterbi,
)
from .exceptions import (
    DegenerateDistributionError,
    FormulaSyntaxError,
    InfeasibleTargetError,
    InstanceTooLargeError,
    StructAttnError,
)
from .semiring import SignedLogValue, signexp, slog_add, slog_from_real, slog_mul
from .tree_crf import (
    InsideOutsideTables,
    ParseMarginals,
    TreePotentials,
    eisner_viterbi,
    inside_outside,
    inside_outside_backprop,
    validate_projective_tree,
)

__version__ = "0.1.0"
