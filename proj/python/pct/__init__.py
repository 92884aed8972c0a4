"""Prototype-oriented conditional transport for domain adaptation."""

from ._pct import (
    NumericError,
    adapt_source_private,
    balanced_assignment,
    cost_matrix,
    em_batch_estimate,
    encode,
    exact_ot,
    l1_error,
    make_synthetic_pair,
    pi_proto_to_target,
    pi_target_to_proto,
    predict,
    selfcheck,
    sinkhorn,
    train,
    transport_loss,
)

__all__ = [
    "NumericError",
    "adapt_source_private",
    "balanced_assignment",
    "cost_matrix",
    "em_batch_estimate",
    "encode",
    "exact_ot",
    "l1_error",
    "make_synthetic_pair",
    "pi_proto_to_target",
    "pi_target_to_proto",
    "predict",
    "selfcheck",
    "sinkhorn",
    "train",
    "transport_loss",
]
