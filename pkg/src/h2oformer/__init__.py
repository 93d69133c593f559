"""H2OFormer: emotion recognition from skeleton micro-gesture sequences using body-part hyperedges.

Pure numpy with a tape-based autodiff engine; see ``h2oformer.cli`` for the
command-line entry point.
"""

from .data import DataError, DatasetManifest, SkeletonSequence, SynthSpec, generate_synthetic, load_jsonl
from .het import ConfigError, HetBlock, HetBlockConfig
from .model import H2OFormer, ModelConfig, count_parameters, mask_count
from .topology import Topology, TopologyError, load_topology
from .training import (VARIANTS, TrainConfig, TrainingAborted, confusion_metrics, evaluate,
                       run_ablation_matrix, train)

__version__ = "0.1.0"

__all__ = [
    "DataError", "DatasetManifest", "SkeletonSequence", "SynthSpec", "generate_synthetic", "load_jsonl",
    "ConfigError", "HetBlock", "HetBlockConfig",
    "H2OFormer", "ModelConfig", "count_parameters", "mask_count",
    "Topology", "TopologyError", "load_topology",
    "VARIANTS", "TrainConfig", "TrainingAborted", "confusion_metrics", "evaluate", "run_ablation_matrix", "train",
]
