"""Teacher-forced training with seeded reproducibility and checkpointing.

Every (article, comment) pair is one training example. Comments are
framed BOS...EOS; the decoder sees the frame shifted right and the loss
is cross-entropy against the frame shifted left, pad positions excluded.
All randomness (parameter init, epoch shuffles, dropout masks) flows
from the single run seed, so a (seed, corpus, config) triple fully
determines the resulting checkpoint.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .autograd import NonFiniteError, Tensor, add, backward, cross_entropy, scale
from .data import Sample
from .model import ModelConfig, build_fusion, create_parameters, decode, encode_text
from .optim import ParameterStore, adam_step, clip_global_norm, params_from_doc, params_to_doc
from .regions import RegionFeatureSet
from .text import PAD_ID, UNK_ID, Vocabulary, build_vocab

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    batch_size: int = 32
    lr: float = 5e-4
    epochs: int = 30
    seed: int = 0
    ablation: str | None = None        # None inherits the model config's setting
    split_mode: str = "holdout80_20"
    min_frequency: int = 1
    val_fraction: float = 0.1
    grad_clip: float = 1.0
    target_loss: float | None = None   # optional early stop on training loss
    fold_index: int = 1                # test fold when split_mode == kfold5

    def validate(self) -> "TrainConfig":
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must lie in [0, 1), got {self.val_fraction}")
        if not 1 <= self.fold_index <= 5:
            raise ValueError(f"fold_index must lie in 1..5, got {self.fold_index}")
        return self

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**doc).validate()


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    seconds: float


@dataclass
class TrainLog:
    entries: list[EpochStats] = field(default_factory=list)

    def append(self, stats: EpochStats) -> None:
        self.entries.append(stats)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,train_loss,val_loss,seconds\n")
            for e in self.entries:
                fh.write(f"{e.epoch},{e.train_loss:.6f},{e.val_loss:.6f},{e.seconds:.3f}\n")


@dataclass
class Checkpoint:
    config: ModelConfig
    store: ParameterStore
    vocab: Vocabulary


# ---------------------------------------------------------------------------
# checkpoint serialization
# ---------------------------------------------------------------------------

def checkpoint_to_doc(ckpt: Checkpoint) -> dict:
    config = ckpt.config.to_dict()
    config["vocab"] = ckpt.vocab.tokens()
    config["min_frequency"] = ckpt.vocab.min_frequency
    return {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": config,
        "params": params_to_doc(ckpt.store),
    }


def checkpoint_from_doc(doc: dict) -> Checkpoint:
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ValueError("not a checkpoint document")
    version = doc["format_version"]
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(
            f"unsupported checkpoint format version {version} "
            f"(expected {CHECKPOINT_FORMAT_VERSION})"
        )
    config_doc = dict(doc["config"])
    tokens = config_doc.pop("vocab")
    min_frequency = config_doc.pop("min_frequency", 1)
    config = ModelConfig.from_dict(config_doc)
    vocab = Vocabulary(tokens, min_frequency=min_frequency)
    if len(vocab) != config.vocab_size:
        raise ValueError(
            f"checkpoint vocab has {len(vocab)} entries but config says {config.vocab_size}"
        )
    store = params_from_doc(doc["params"])
    expected = set(create_parameters(config, seed=0).names())
    if set(store.names()) != expected:
        raise ValueError("checkpoint parameter names do not match the embedded config")
    return Checkpoint(config=config, store=store, vocab=vocab)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    doc = checkpoint_to_doc(ckpt)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path) -> Checkpoint:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return checkpoint_from_doc(doc)


# ---------------------------------------------------------------------------
# batches and the loss
# ---------------------------------------------------------------------------

@dataclass
class Example:
    """A single teacher-forcing example: encoder ids, framed target ids, regions."""

    src_ids: np.ndarray
    tgt_framed: np.ndarray
    rfs: RegionFeatureSet | None


def prepare_examples(
    samples: list[Sample],
    vocab: Vocabulary,
    config: ModelConfig,
    regions: dict[str, RegionFeatureSet] | None,
) -> list[Example]:
    examples = []
    for sample in samples:
        if not sample.comments:
            raise ValueError(f"training sample {sample.id!r} has no comments")
        src = vocab.encode(sample.text, config.max_text_len)
        if not src:
            src = [UNK_ID]
        rfs = None
        if config.uses_visual:
            if regions is None or sample.image_ref not in regions:
                raise ValueError(
                    f"ablation {config.ablation} needs region features for image "
                    f"{sample.image_ref!r} (sample {sample.id!r})"
                )
            rfs = regions[sample.image_ref]
        src_arr = np.asarray(src, dtype=np.int64)
        for comment in sample.comments:
            framed = vocab.encode(comment.text, config.max_gen_len, frame=True)
            examples.append(Example(src_arr, np.asarray(framed, dtype=np.int64), rfs))
    return examples


def teacher_forced_loss(
    batch: list[Example],
    store: ParameterStore,
    config: ModelConfig,
    train: bool = False,
    rng=None,
) -> Tensor:
    """Mean over the batch of per-example pad-masked cross-entropy."""
    if not batch:
        raise ValueError("empty batch")
    losses = []
    for ex in batch:
        enc = encode_text(ex.src_ids, store, config, train=train, rng=rng)
        fus = build_fusion(enc, ex.rfs, store, config)
        logits = decode(ex.tgt_framed[:-1], enc, fus, store, config, train=train, rng=rng)
        losses.append(cross_entropy(logits, ex.tgt_framed[1:], pad_id=PAD_ID))
    total = losses[0]
    for piece in losses[1:]:
        total = add(total, piece)
    return scale(total, 1.0 / len(losses))


def _batches(order: np.ndarray, size: int):
    for start in range(0, len(order), size):
        yield order[start:start + size]


def _mean_loss(examples: list[Example], store, config, batch_size: int) -> float:
    total, count = 0.0, 0
    for idx in _batches(np.arange(len(examples)), batch_size):
        chunk = [examples[i] for i in idx]
        total += teacher_forced_loss(chunk, store, config, train=False).item() * len(chunk)
        count += len(chunk)
    return total / count


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------

def train(
    samples: list[Sample],
    regions: dict[str, RegionFeatureSet] | None,
    model_config: ModelConfig,
    train_config: TrainConfig,
    out_dir=None,
) -> tuple[Checkpoint, TrainLog]:
    """Train on the given samples; returns the best-validation checkpoint.

    Checkpoints are written each epoch when ``out_dir`` is given
    (``last.json`` overwritten, ``best.json`` updated on validation
    improvement, ``trainlog.csv`` at the end). Divergence (non-finite
    loss or parameters) aborts the loop and the best checkpoint so far
    is returned.
    """
    train_config.validate()
    if not samples:
        raise ValueError("training needs a non-empty sample list")
    config = ModelConfig(**{**model_config.to_dict(),
                            **({"ablation": train_config.ablation}
                               if train_config.ablation else {})})
    vocab = build_vocab(samples, min_frequency=train_config.min_frequency)
    config.vocab_size = len(vocab)
    if config.uses_visual:
        if not regions:
            raise ValueError(f"ablation {config.ablation} needs a region-feature map")
        config.d_visual = next(iter(regions.values())).feature_dim
    config.validate()

    rng = np.random.default_rng(train_config.seed)
    store = create_parameters(config, seed=train_config.seed)

    # carve a validation subset by article; tiny corpora validate on train
    n_val = int(len(samples) * train_config.val_fraction)
    order = rng.permutation(len(samples))
    val_samples = [samples[i] for i in order[:n_val]]
    fit_samples = [samples[i] for i in order[n_val:]]
    if not val_samples:
        val_samples = fit_samples

    fit_examples = prepare_examples(fit_samples, vocab, config, regions)
    val_examples = prepare_examples(val_samples, vocab, config, regions)

    log = TrainLog()
    best_store = store.copy()
    best_val = float("inf")
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    for epoch in range(1, train_config.epochs + 1):
        tick = time.perf_counter()
        perm = rng.permutation(len(fit_examples))
        running, seen = 0.0, 0
        try:
            for idx in _batches(perm, train_config.batch_size):
                batch = [fit_examples[i] for i in idx]
                store.zero_grads()
                loss = teacher_forced_loss(batch, store, config, train=True, rng=rng)
                backward(loss)
                grads = clip_global_norm(store.gradients(), train_config.grad_clip)
                adam_step(store, grads, lr=train_config.lr)
                running += loss.item() * len(batch)
                seen += len(batch)
            val_loss = _mean_loss(val_examples, store, config, train_config.batch_size)
        except NonFiniteError:
            break  # diverged: keep the best checkpoint seen so far
        train_loss = running / seen
        log.append(EpochStats(epoch, train_loss, val_loss, time.perf_counter() - tick))
        if val_loss < best_val:
            best_val = val_loss
            best_store = store.copy()
        if out_dir is not None:
            save_checkpoint(Checkpoint(config, store, vocab), out_dir / "last.json")
            save_checkpoint(Checkpoint(config, best_store, vocab), out_dir / "best.json")
        if train_config.target_loss is not None and train_loss < train_config.target_loss:
            break

    if out_dir is not None:
        log.to_csv(out_dir / "trainlog.csv")
    return Checkpoint(config=config, store=best_store, vocab=vocab), log
