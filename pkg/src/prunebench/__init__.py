"""Structured pruning toolkit and streaming inference engine for small
convolutional-recurrent denoising networks."""

import os as _os

# Pin BLAS to one thread before numpy loads: latency numbers are meaningless
# with library-level threading, and single-threaded math keeps runs
# deterministic.  Respects values the user already exported.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
    _os.environ.setdefault(_var, "1")

__version__ = "0.1.0"

from .bench import BenchmarkReport, benchmark, compare_sparse_dense, mean_ci95, speedup_table
from .inference import StreamState, forward_frame, forward_profiled, forward_sequence
from .model import (
    ModelFormatError,
    ModelSpec,
    ModelWeights,
    NetworkParam,
    build_model,
    coupling_groups,
    load_model,
    model_memory_mb,
    save_model,
)
from .pruning import IndexSet, prune_structured, prune_unstructured, select_top_coordinates
from .reparam import derive_config, resolve_config, standard_configs
from .training import (
    SynthDataset,
    TrainConfig,
    evaluate,
    experiment_lr_sweep,
    experiment_prune_vs_direct,
    gradients,
    loss,
    train,
)

__all__ = [
    "BenchmarkReport", "benchmark", "compare_sparse_dense", "mean_ci95",
    "speedup_table", "StreamState", "forward_frame", "forward_profiled",
    "forward_sequence", "ModelFormatError", "ModelSpec", "ModelWeights",
    "NetworkParam", "build_model", "coupling_groups", "load_model",
    "model_memory_mb", "save_model", "IndexSet", "prune_structured",
    "prune_unstructured", "select_top_coordinates", "derive_config",
    "resolve_config", "standard_configs", "SynthDataset", "TrainConfig",
    "evaluate", "experiment_lr_sweep", "experiment_prune_vs_direct",
    "gradients", "loss", "train", "__version__",
]
