"""Scikit-learn style front door for the feedback synthesizer.

``FeedbackSynthesizer`` follows the estimator protocol (constructor
stores hyperparameters verbatim, ``fit`` learns state into trailing-
underscore attributes, ``get_params``/``set_params`` come from
``BaseEstimator``) so it composes with ``clone`` and friends. X is a
list of :class:`~feedsynth.data.Sample`; region features are passed
separately (path or preloaded map) since they are per-image side
information.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import Sample
from .evaluation import evaluate_suite, generate_feedback
from .model import ABLATIONS, ModelConfig
from .regions import load_region_features
from .training import TrainConfig, train


def _check_samples(X, require_comments: bool) -> list[Sample]:
    samples = list(X)
    if not samples:
        raise ValueError("X must contain at least one sample")
    for s in samples:
        if not isinstance(s, Sample):
            raise TypeError(f"X entries must be Sample instances, got {type(s).__name__}")
        if require_comments and not s.comments:
            raise ValueError(f"sample {s.id!r} has no comments to train against")
    return samples


def _resolve_regions(region_features):
    if region_features is None:
        return None
    if isinstance(region_features, (str, bytes)) or hasattr(region_features, "read_text"):
        return load_region_features(region_features)
    return dict(region_features)


class FeedbackSynthesizer(BaseEstimator):
    """Trainable text+image feedback generator with a fit/predict surface."""

    def __init__(
        self,
        d_model: int = 128,
        n_heads: int = 8,
        n_layers_enc: int = 6,
        n_layers_dec: int = 6,
        d_ffn_hidden: int = 512,
        dropout: float = 0.5,
        ablation: str = "TVAR",
        max_text_len: int = 512,
        max_gen_len: int = 30,
        epochs: int = 30,
        batch_size: int = 32,
        lr: float = 5e-4,
        min_frequency: int = 1,
        seed: int = 0,
    ):
        self.d_model = d_model
        self.n_heads = n_heads
        self.n_layers_enc = n_layers_enc
        self.n_layers_dec = n_layers_dec
        self.d_ffn_hidden = d_ffn_hidden
        self.dropout = dropout
        self.ablation = ablation
        self.max_text_len = max_text_len
        self.max_gen_len = max_gen_len
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.min_frequency = min_frequency
        self.seed = seed

    def _model_config(self) -> ModelConfig:
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        return ModelConfig(
            d_model=self.d_model,
            n_heads=self.n_heads,
            n_layers_enc=self.n_layers_enc,
            n_layers_dec=self.n_layers_dec,
            d_ffn_hidden=self.d_ffn_hidden,
            dropout=self.dropout,
            max_text_len=self.max_text_len,
            max_gen_len=self.max_gen_len,
            ablation=self.ablation,
        )

    def fit(self, X, y=None, region_features=None) -> "FeedbackSynthesizer":
        """Train on (article, comment) pairs drawn from the samples in X."""
        samples = _check_samples(X, require_comments=True)
        regions = _resolve_regions(region_features)
        train_config = TrainConfig(
            batch_size=self.batch_size,
            lr=self.lr,
            epochs=self.epochs,
            seed=self.seed,
            min_frequency=self.min_frequency,
        )
        self.checkpoint_, self.train_log_ = train(samples, regions, self._model_config(), train_config)
        self.vocab_ = self.checkpoint_.vocab
        return self

    def _require_fitted(self) -> None:
        if not hasattr(self, "checkpoint_"):
            raise NotFittedError("this FeedbackSynthesizer is not fitted yet; call fit first")

    def predict(self, X, region_features=None) -> list[str]:
        """Greedy feedback text for each sample in X."""
        self._require_fitted()
        samples = _check_samples(X, require_comments=False)
        regions = _resolve_regions(region_features)
        feedbacks = generate_feedback(self.checkpoint_, samples, regions)
        return [feedbacks[s.id] for s in samples]

    def score(self, X, y=None, region_features=None) -> float:
        """Corpus BLEU-4 of generated feedback against each sample's comments."""
        self._require_fitted()
        samples = _check_samples(X, require_comments=True)
        regions = _resolve_regions(region_features)
        report = evaluate_suite(self.checkpoint_, samples, regions)
        return report.bleu4
