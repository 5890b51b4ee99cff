"""Dual-stream LSTM video captioner with a from-scratch training stack and
a caption metric suite (BLEU, ROUGE-L, CIDEr, exact-match METEOR)."""

from .decoding import generate_captions, greedy_generate
from .features import FeatureSequence, average_pool, load_features, write_features
from .metrics import EvalReport, evaluate
from .model import (
    ForwardTrace,
    ModelDims,
    ModelParams,
    backward,
    forward,
    gradient_check,
    init_params,
    load_checkpoint,
    loss,
    save_checkpoint,
)
from .text import Vocabulary, build_vocab, encode, tokenize
from .training import TrainingConfig, TrainingExample, train

__version__ = "0.1.0"

__all__ = [
    "EvalReport",
    "FeatureSequence",
    "ForwardTrace",
    "ModelDims",
    "ModelParams",
    "TrainingConfig",
    "TrainingExample",
    "Vocabulary",
    "average_pool",
    "backward",
    "build_vocab",
    "encode",
    "evaluate",
    "forward",
    "generate_captions",
    "gradient_check",
    "greedy_generate",
    "init_params",
    "load_checkpoint",
    "load_features",
    "loss",
    "save_checkpoint",
    "tokenize",
    "train",
    "write_features",
    "__version__",
]
