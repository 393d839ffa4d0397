"""Selective initialization of CF embedding tables from pretrained matrices.

Pipeline: load interactions -> k-core filter -> leave-one-out split ->
select embedding dimensions -> aggregate user vectors -> train a
light graph-propagation model -> full-ranking evaluation.
"""

from .data import (
    BipartiteGraph,
    Interaction,
    InteractionDataset,
    Split,
    build_graph,
    coldstart_perturb,
    k_core_filter,
    leave_one_out_split,
    load_interactions,
)
from .embio import EmbeddingMatrix, align_item_matrix, read_matrix, write_matrix
from .errors import (
    AlignmentError,
    CFSeedError,
    ConfigError,
    DataError,
    DimensionError,
    EmptyDatasetError,
    FormatError,
    ParseError,
    StatisticsError,
)
from .evaluate import EvalReport, emit_report, full_rank_eval
from .experiments import (
    ColdstartResult,
    RunConfig,
    RunResult,
    load_config,
    run_coldstart,
    run_main,
    run_size_sweep,
    train_model,
)
from .init import (
    IndexSet,
    InitializedTables,
    aggregate_users,
    apply_selection,
    build_tables,
    select_random,
    select_uniform,
    select_variance,
)
from .model import (
    Adam,
    LossConfig,
    ModelState,
    bpr_loss,
    propagate,
    score,
    ssl_loss,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AlignmentError",
    "BipartiteGraph",
    "CFSeedError",
    "ColdstartResult",
    "ConfigError",
    "DataError",
    "DimensionError",
    "EmbeddingMatrix",
    "EmptyDatasetError",
    "EvalReport",
    "FormatError",
    "IndexSet",
    "InitializedTables",
    "Interaction",
    "InteractionDataset",
    "LossConfig",
    "ModelState",
    "ParseError",
    "RunConfig",
    "RunResult",
    "Split",
    "StatisticsError",
    "aggregate_users",
    "align_item_matrix",
    "apply_selection",
    "bpr_loss",
    "build_graph",
    "build_tables",
    "coldstart_perturb",
    "emit_report",
    "full_rank_eval",
    "k_core_filter",
    "leave_one_out_split",
    "load_config",
    "load_interactions",
    "propagate",
    "read_matrix",
    "run_coldstart",
    "run_main",
    "run_size_sweep",
    "score",
    "select_random",
    "select_uniform",
    "select_variance",
    "ssl_loss",
    "train_model",
    "write_matrix",
]
