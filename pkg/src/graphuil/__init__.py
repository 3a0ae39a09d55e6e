"""Semi-supervised cross-network user identity linkage with multi-stage
graph aggregation, built on a small numpy autodiff core."""

__version__ = "0.1.0"

from .benchgen import BenchSpec, generate, load_instance, save_instance
from .evaluation import repeat_eval, welch_t_test
from .features import FeatureInitSpec, init_features
from .graph import Graph, graph_stats, load_edge_list, prune_low_degree
from .msa import EncoderConfig, encode
from .training import TrainConfig, make_ablation, train

__all__ = ["BenchSpec", "EncoderConfig", "FeatureInitSpec", "Graph", "TrainConfig", "encode",
           "generate", "graph_stats", "init_features", "load_edge_list", "load_instance",
           "make_ablation", "prune_low_degree", "repeat_eval", "save_instance", "train",
           "welch_t_test"]
