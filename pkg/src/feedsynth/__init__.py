"""feedsynth: multimodal feedback synthesis for news text and images.

A self-contained engine (dense-tensor autodiff, transformer text
encoder, region-feature visual attention, multimodal fusion, a
three-attention decoder) plus the data pipeline, training loop, and the
full evaluation stack (BLEU/ROUGE/METEOR/CIDEr, MRR, Recall@k).
"""

from .autograd import NonFiniteError, ShapeError, Tensor, backward
from .data import Comment, CorpusStats, Sample, corpus_stats, parse_legacy_csv, parse_records, split_dataset, write_records
from .estimator import FeedbackSynthesizer
from .evaluation import EvalReport, evaluate_suite
from .model import ModelConfig
from .optim import ParameterStore, adam_step
from .regions import AnchorLabel, BoundingBox, RegionFeatureSet, iou, load_region_features, objectiveness_label, rpn_loss
from .text import Vocabulary, build_vocab, normalize_text, tokenize
from .training import Checkpoint, TrainConfig, TrainLog, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "AnchorLabel",
    "BoundingBox",
    "Checkpoint",
    "Comment",
    "CorpusStats",
    "EvalReport",
    "FeedbackSynthesizer",
    "ModelConfig",
    "NonFiniteError",
    "ParameterStore",
    "RegionFeatureSet",
    "Sample",
    "ShapeError",
    "Tensor",
    "TrainConfig",
    "TrainLog",
    "Vocabulary",
    "adam_step",
    "backward",
    "build_vocab",
    "corpus_stats",
    "evaluate_suite",
    "iou",
    "load_checkpoint",
    "load_region_features",
    "normalize_text",
    "objectiveness_label",
    "parse_legacy_csv",
    "parse_records",
    "rpn_loss",
    "save_checkpoint",
    "split_dataset",
    "tokenize",
    "train",
    "write_records",
]
