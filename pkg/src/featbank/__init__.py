"""featbank: adaptive feature memory for matching-based segmentation inference.

Affinity reads with top-k selection, shared usage/age counters, LFU eviction
under a fixed capacity, competing write strategies, synthetic feature streams
with a surrogate decoder, a binary trace format, and a benchmark CLI.
"""

from .core import (
    ADAPTIVE_LFU,
    EVERY_K,
    FIRST_AND_LATEST,
    SOFTMAX_INDEX,
    STRATEGIES,
    FeatureGrid,
    FrameFeatures,
    MemorySlot,
    StrategyConfig,
    validate_config,
)
from .attention import (
    AffinityMatrix,
    TopKSelection,
    affinity_dropout,
    compute_affinity,
    full_read,
    reallocate_support_attention,
    select_topk,
    softmax_weights,
    weighted_read,
)
from .membank import LfuScore, MemoryBank, ReadResult
from .strategies import (
    FrameStats,
    SequenceState,
    make_state,
    run_sequence,
    step,
    write_back_values,
)
from .simstream import (
    ObjectSpec,
    SyntheticScenario,
    generate,
    iou,
    labels_from_distribution,
    prob_to_values,
    soft_aggregate,
    surrogate_decode,
    surrogate_predictor,
)
from .scenarios import BUNDLED, bundled_scenario, load_scenario_file, parse_scenario_config
from .trace import TraceData, read_trace, write_trace
from .bench import (
    RunReport,
    StreamInput,
    compare_strategies,
    run_benchmark,
    sweep_capacity,
)
from . import errors

__version__ = "0.1.0"

__all__ = [
    "ADAPTIVE_LFU",
    "EVERY_K",
    "FIRST_AND_LATEST",
    "SOFTMAX_INDEX",
    "STRATEGIES",
    "BUNDLED",
    "AffinityMatrix",
    "FeatureGrid",
    "FrameFeatures",
    "FrameStats",
    "LfuScore",
    "MemoryBank",
    "MemorySlot",
    "ObjectSpec",
    "ReadResult",
    "RunReport",
    "SequenceState",
    "StrategyConfig",
    "StreamInput",
    "SyntheticScenario",
    "TopKSelection",
    "TraceData",
    "affinity_dropout",
    "bundled_scenario",
    "compare_strategies",
    "compute_affinity",
    "errors",
    "full_read",
    "generate",
    "iou",
    "labels_from_distribution",
    "load_scenario_file",
    "make_state",
    "parse_scenario_config",
    "prob_to_values",
    "read_trace",
    "reallocate_support_attention",
    "run_benchmark",
    "run_sequence",
    "select_topk",
    "soft_aggregate",
    "softmax_weights",
    "step",
    "surrogate_decode",
    "surrogate_predictor",
    "sweep_capacity",
    "validate_config",
    "weighted_read",
    "write_back_values",
    "write_trace",
]
