"""Python bindings for the hvf library."""

from ._hvf import (
    DomainError,
    Error,
    HypothesisError,
    ParseError,
    System,
    ball_volume,
    certify,
    commutator,
    connect,
    distance,
    exp,
    expansion_residual,
    parse_system,
    poincare,
    quasi_exp,
    rank,
    registered,
    system,
)

__all__ = [
    "DomainError",
    "Error",
    "HypothesisError",
    "ParseError",
    "System",
    "ball_volume",
    "certify",
    "commutator",
    "connect",
    "distance",
    "exp",
    "expansion_residual",
    "parse_system",
    "poincare",
    "quasi_exp",
    "rank",
    "registered",
    "system",
]
