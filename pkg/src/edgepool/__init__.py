"""Sparse graph coarsening by learned edge contraction.

The package provides the pooling operator (scoring, normalization,
greedy contraction, exact backward), its inverse unpooling, a small
tape-based autodiff stack with the layers needed for the reference
models, dataset utilities, and a CLI for experiments and validation.
"""

from .autodiff import Var, backward
from .data import (
    GraphDataset,
    NodeTask,
    gen_synthetic,
    kfold_splits,
    load_tu,
    node_split,
    save_tu,
)
from .fdcheck import GradCheckResult, run_gradcheck
from .layers import (
    batch_norm,
    concat_cols,
    cross_entropy,
    dense,
    edge_pool,
    feature_dropout,
    gather_rows,
    global_mean_pool,
    mean_conv,
    relu,
    softmax_cross_entropy,
    unpool,
)
from .graph import (
    BatchedGraph,
    Graph,
    batch,
    build_graph,
    graph_from_json,
    graph_to_json,
    in_neighbors,
    load_graph_file,
    save_graph_file,
    symmetrize,
    to_dot,
)
from .models import (
    GraphClassifier,
    NodeClassifier,
    evaluate_graph_model,
    evaluate_node_model,
    train_graph_model,
    train_node_model,
)
from .params import (
    ParamStore,
    TrainConfig,
    adam_step,
    glorot_uniform,
    load_checkpoint,
    lr_at_epoch,
    save_checkpoint,
)
from .pool import (
    EdgeScores,
    PoolInfo,
    PoolParams,
    WeightedCombine,
    apply_score_dropout,
    contract,
    edgepool_backward,
    edgepool_forward,
    hierarchy_to_json,
    normalize_scores,
    pool_hierarchy,
    random_pool_params,
    raw_scores,
    score_path_backward,
    select_contractions,
)
from .rng import draw_seed, seeded_rng
from .unpool import UnpoolPlan, unpool_backward, unpool_chain, unpool_once

__version__ = "0.1.0"

__all__ = [
    "Var",
    "backward",
    "GraphDataset",
    "NodeTask",
    "gen_synthetic",
    "kfold_splits",
    "load_tu",
    "node_split",
    "save_tu",
    "GradCheckResult",
    "run_gradcheck",
    "batch_norm",
    "concat_cols",
    "cross_entropy",
    "dense",
    "edge_pool",
    "feature_dropout",
    "gather_rows",
    "global_mean_pool",
    "mean_conv",
    "relu",
    "softmax_cross_entropy",
    "unpool",
    "BatchedGraph",
    "Graph",
    "batch",
    "build_graph",
    "graph_from_json",
    "graph_to_json",
    "in_neighbors",
    "load_graph_file",
    "save_graph_file",
    "symmetrize",
    "to_dot",
    "GraphClassifier",
    "NodeClassifier",
    "evaluate_graph_model",
    "evaluate_node_model",
    "train_graph_model",
    "train_node_model",
    "ParamStore",
    "TrainConfig",
    "adam_step",
    "glorot_uniform",
    "load_checkpoint",
    "lr_at_epoch",
    "save_checkpoint",
    "EdgeScores",
    "PoolInfo",
    "PoolParams",
    "WeightedCombine",
    "apply_score_dropout",
    "contract",
    "edgepool_backward",
    "edgepool_forward",
    "hierarchy_to_json",
    "normalize_scores",
    "pool_hierarchy",
    "random_pool_params",
    "raw_scores",
    "score_path_backward",
    "select_contractions",
    "seeded_rng",
    "draw_seed",
    "UnpoolPlan",
    "unpool_backward",
    "unpool_chain",
    "unpool_once",
    "__version__",
]
