"""Pair-level supervised contrastive learning for sentence-pair classification.

A small, fully self-contained implementation: a trainable token encoder, a
cross-attention pair-representation module, a joint contrastive +
cross-entropy objective, Adam, and a training/evaluation harness on
synthetic or file-based premise/hypothesis data. Every analytic gradient is
verified against central finite differences.
"""

from .crossattn import PairRep, forward_pair, init_crossattn
from .data import Example, SynthConfig, generate, load_file, make_batches, save_file
from .encoder import TokenSeq, encode, init_encoder
from .estimator import PairClassifier
from .evalab import EvalReport, ablation_sweep, evaluate, separation_metrics
from .objectives import Batch, ce_loss, scl_loss, total_loss
from .optim import Adam
from .tensor import Param, backward_check
from .train import (
    PairModel,
    RunReport,
    TrainConfig,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "Batch",
    "EvalReport",
    "Example",
    "PairClassifier",
    "PairModel",
    "PairRep",
    "Param",
    "RunReport",
    "SynthConfig",
    "TokenSeq",
    "TrainConfig",
    "ablation_sweep",
    "backward_check",
    "ce_loss",
    "encode",
    "evaluate",
    "forward_pair",
    "generate",
    "init_crossattn",
    "init_encoder",
    "load_checkpoint",
    "load_file",
    "make_batches",
    "model_from_checkpoint",
    "save_checkpoint",
    "save_file",
    "scl_loss",
    "separation_metrics",
    "total_loss",
    "train",
]
