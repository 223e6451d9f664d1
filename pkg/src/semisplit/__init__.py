"""semisplit: detect and verify product structure of semi-Riemannian manifolds.

Given a coordinate description of a manifold-with-metric and a vector field,
the package classifies the field (irrotational, conformal, pregeodesic,
parallel, ...), decides which product decomposition that classification
predicts (direct / warped / twisted / parametrized over a line, an interval,
or a circle), constructs the warping function by integrating the divergence
of the unit field along its flow, and verifies the reconstructed product
metric against the original by numerical pullback.
"""

__version__ = "0.1.0"

from .expr import Expr, parse, differentiate, simplify, evaluate, to_text
from .manifold import ManifoldSpec, Interval, Identification, Loop, SpecValidationError
from .geometry import VectorField, FramePair, orthogonal_frame
from .classify import Classification, classify_field, decomposition_type
from .flow import integrate_flow, leaf_return_events, monodromy, period_group
from .split import split_report, construct_warping, reconstruct_and_verify
from .fixtures import catalog

__all__ = [
    "Expr",
    "parse",
    "differentiate",
    "simplify",
    "evaluate",
    "to_text",
    "ManifoldSpec",
    "Interval",
    "Identification",
    "Loop",
    "SpecValidationError",
    "VectorField",
    "FramePair",
    "orthogonal_frame",
    "Classification",
    "classify_field",
    "decomposition_type",
    "integrate_flow",
    "leaf_return_events",
    "monodromy",
    "period_group",
    "split_report",
    "construct_warping",
    "reconstruct_and_verify",
    "catalog",
    "__version__",
]
