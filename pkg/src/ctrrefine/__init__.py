"""Feature-refinement modules for CTR prediction, with backbones, training and probes."""
from .backbones import BACKBONES, PARALLEL_ALIASES, auc, build_backbone, fm_forward, logloss
from .composer import CTRModel, ModelSpec, compose, model_name, param_breakdown, total_param_count
from .data import (ConfigurationError, DatasetBundle, FieldSchema, IngestionError, RawRecord,
                   build_vocabulary, discretize_numeric, load_cache, prepare, save_cache, split)
from .embedding import EmbeddingTable, count_embedding_params
from .refine import (ALL_MODULES, EVALUATED, FRConfig, FRDescriptor, FRModule, build_module,
                     get_module_class, soft_gate_combine)
from .train import PlateauSchedule, RunResult, TrainConfig, paired_ttest, repeat_runs

__version__ = "0.1.0"

__all__ = [
    "BACKBONES", "PARALLEL_ALIASES", "auc", "build_backbone", "fm_forward", "logloss", "CTRModel",
    "ModelSpec", "compose", "model_name", "param_breakdown", "total_param_count",
    "ConfigurationError", "DatasetBundle", "FieldSchema", "IngestionError", "RawRecord",
    "build_vocabulary", "discretize_numeric", "load_cache", "prepare", "save_cache", "split",
    "EmbeddingTable", "count_embedding_params", "ALL_MODULES", "EVALUATED", "FRConfig",
    "FRDescriptor", "FRModule", "build_module", "get_module_class", "soft_gate_combine",
    "PlateauSchedule", "RunResult", "TrainConfig", "paired_ttest", "repeat_runs",
]
