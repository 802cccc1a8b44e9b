"""Shapley-value attributions for sequence-scoring models.

Explains a black-box score over a d x l sequence matrix at three
granularities: per feature, per event, and per cell group, using background
perturbations and kernel-weighted least squares. Long histories stay
tractable through temporal coalition pruning, which folds an unimportant
prefix of old events into a single player.
"""

from .errors import (
    DataError,
    DimensionError,
    HandshakeError,
    MalformedResponseError,
    ParseError,
    SchemaError,
    SeqExplainError,
    SolverError,
    TransportError,
    VersionMismatchError,
)
from .kernel import (
    CoalitionSample,
    ExplanationResult,
    SamplerConfig,
    draw_coalitions,
    kernel_weight,
    shapley_explain,
    solve_attributions,
)
from .model import (
    CallableScorer,
    GruModel,
    GruWeights,
    ProtocolConfig,
    SequenceScorer,
    connect_protocol_model,
    gru_forward,
    load_scorer,
)
from .orchestrator import (
    CellConfig,
    CellPartition,
    GlobalReport,
    SequenceExplanation,
    build_cell_partition,
    explain_cells,
    explain_events,
    explain_features,
    explain_sequence,
    explanation_to_dict,
    global_aggregate,
    rsd,
)
from .perturb import (
    CoalitionMatrix,
    CoalitionVector,
    perturb_cells,
    perturb_events,
    perturb_features,
)
from .pruning import PruneConfig, PruneOutcome, prune_index, prune_scan, two_split_shapley
from .seqdata import (
    BackgroundMatrix,
    EventSchema,
    SequenceMatrix,
    build_background,
    load_dataset,
    save_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "BackgroundMatrix",
    "CallableScorer",
    "CellConfig",
    "CellPartition",
    "CoalitionMatrix",
    "CoalitionSample",
    "CoalitionVector",
    "DataError",
    "DimensionError",
    "EventSchema",
    "ExplanationResult",
    "GlobalReport",
    "GruModel",
    "GruWeights",
    "HandshakeError",
    "MalformedResponseError",
    "ParseError",
    "ProtocolConfig",
    "PruneConfig",
    "PruneOutcome",
    "SamplerConfig",
    "SchemaError",
    "SeqExplainError",
    "SequenceExplanation",
    "SequenceMatrix",
    "SequenceScorer",
    "SolverError",
    "TransportError",
    "VersionMismatchError",
    "build_background",
    "build_cell_partition",
    "connect_protocol_model",
    "draw_coalitions",
    "explain_cells",
    "explain_events",
    "explain_features",
    "explain_sequence",
    "explanation_to_dict",
    "global_aggregate",
    "gru_forward",
    "kernel_weight",
    "load_dataset",
    "load_scorer",
    "perturb_cells",
    "perturb_events",
    "perturb_features",
    "prune_index",
    "prune_scan",
    "rsd",
    "save_dataset",
    "shapley_explain",
    "solve_attributions",
    "two_split_shapley",
]
