"""The feedback-synthesis architecture.

A post-norm transformer encoder turns the article text into per-token
context vectors z*. The visual side attention-pools region features into
a single context vector g*, which is fused with every z* row through a
feed-forward layer into multimodal context vectors y*. The decoder runs
blocks of masked self-attention, text cross-attention over z*,
multimodal attention over y*, and a position-wise feed-forward network,
every sublayer wrapped in residual + layer norm, and projects to
vocabulary logits.

Four ablation variants share this code and differ only in which
sublayers and parameters exist:

* ``T``    text only; no fusion, no visual parameters.
* ``TV``   adds the fusion layer; the pooled global image vector feeds
  it directly (no visual attention) and the decoder's cross-attention
  reads y* instead of z*.
* ``TVA``  adds the decoder's dedicated multimodal-attention sublayer
  (cross-attention reverts to z*); visual attention pooling runs over
  the single pooled global vector.
* ``TVAR`` adds a learned box-geometry embedding and runs visual
  attention over the per-region features themselves.

Parameter-name sets nest strictly in that order.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .autograd import (
    Tensor,
    add,
    add_bias,
    concat_cols,
    dropout,
    embedding_lookup,
    layer_norm,
    matmul,
    relu,
    repeat_rows,
    scale,
    sinusoidal_positions,
    slice_cols,
    softmax_rows,
    transpose,
    xavier_uniform,
)
from .optim import ParameterStore
from .regions import RegionFeatureSet, global_vector
from .text import BOS_ID, EOS_ID, PAD_ID

ABLATIONS = ("T", "TV", "TVA", "TVAR")


@dataclass
class ModelConfig:
    d_model: int = 128
    n_heads: int = 8
    n_layers_enc: int = 6
    n_layers_dec: int = 6
    d_ffn_hidden: int = 512
    d_visual: int = 2048
    dropout: float = 0.5
    vocab_size: int = 4
    max_text_len: int = 512
    max_gen_len: int = 30
    ablation: str = "TVAR"

    def validate(self) -> "ModelConfig":
        for f in fields(self):
            if f.name in ("dropout", "ablation"):
                continue
            value = getattr(self, f.name)
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"{f.name} must be a positive integer, got {value!r}")
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**doc).validate()

    @property
    def uses_visual(self) -> bool:
        return self.ablation != "T"

    @property
    def has_multimodal_sublayer(self) -> bool:
        return self.ablation in ("TVA", "TVAR")

    @property
    def uses_region_attention(self) -> bool:
        return self.ablation == "TVAR"


@dataclass
class EncoderOutput:
    z_star: Tensor          # [m x d_model] textual context vectors
    mask: np.ndarray        # [m] bool, True at real (non-pad) tokens


@dataclass
class FusionOutput:
    y_star: Tensor          # [m x d_model] multimodal context vectors


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

def _add_affine(store, rng, prefix: str, fan_in: int, fan_out: int) -> None:
    store.add(f"{prefix}.w", xavier_uniform(rng, fan_in, fan_out))
    store.add(f"{prefix}.b", np.zeros(fan_out))


def _add_attention(store, rng, prefix: str, d: int) -> None:
    for name in ("wq", "wk", "wv", "wo"):
        store.add(f"{prefix}.{name}", xavier_uniform(rng, d, d))
    for name in ("bq", "bk", "bv", "bo"):
        store.add(f"{prefix}.{name}", np.zeros(d))


def _add_norm(store, prefix: str, d: int) -> None:
    store.add(f"{prefix}.g", np.ones(d))
    store.add(f"{prefix}.b", np.zeros(d))


def create_parameters(config: ModelConfig, seed: int = 0, dtype=np.float32) -> ParameterStore:
    """Fresh, seeded parameter store for the given configuration."""
    config.validate()
    rng = np.random.default_rng(seed)
    store = ParameterStore(dtype)
    d = config.d_model
    store.add("embed.tok", rng.normal(0.0, d ** -0.5, size=(config.vocab_size, d)))
    for i in range(config.n_layers_enc):
        _add_attention(store, rng, f"enc.{i}.attn", d)
        _add_norm(store, f"enc.{i}.ln_attn", d)
        _add_affine(store, rng, f"enc.{i}.ffn.fc1", d, config.d_ffn_hidden)
        _add_affine(store, rng, f"enc.{i}.ffn.fc2", config.d_ffn_hidden, d)
        _add_norm(store, f"enc.{i}.ln_ffn", d)
    for i in range(config.n_layers_dec):
        _add_attention(store, rng, f"dec.{i}.self", d)
        _add_norm(store, f"dec.{i}.ln_self", d)
        _add_attention(store, rng, f"dec.{i}.cross", d)
        _add_norm(store, f"dec.{i}.ln_cross", d)
        if config.has_multimodal_sublayer:
            _add_attention(store, rng, f"dec.{i}.mm", d)
            _add_norm(store, f"dec.{i}.ln_mm", d)
        _add_affine(store, rng, f"dec.{i}.ffn.fc1", d, config.d_ffn_hidden)
        _add_affine(store, rng, f"dec.{i}.ffn.fc2", config.d_ffn_hidden, d)
        _add_norm(store, f"dec.{i}.ln_ffn", d)
    if config.uses_visual:
        _add_affine(store, rng, "fusion", d + config.d_visual, d)
    if config.uses_region_attention:
        _add_affine(store, rng, "visual.box", 4, config.d_visual)
    _add_affine(store, rng, "out", d, config.vocab_size)
    return store


# ---------------------------------------------------------------------------
# attention primitives
# ---------------------------------------------------------------------------

def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, mask=None, return_weights: bool = False):
    """softmax(Q Kᵀ / sqrt(d_k)) V with optional key mask (True = attendable)."""
    if q.array.ndim != 2 or k.array.ndim != 2 or v.array.ndim != 2:
        raise ValueError("attention operands must be 2-D")
    if q.shape[1] != k.shape[1]:
        raise ValueError(f"query dim {q.shape[1]} != key dim {k.shape[1]}")
    if k.shape[0] != v.shape[0]:
        raise ValueError(f"{k.shape[0]} keys but {v.shape[0]} value rows")
    scores = scale(matmul(q, transpose(k)), 1.0 / math.sqrt(q.shape[1]))
    weights = softmax_rows(scores, mask)
    out = matmul(weights, v)
    if return_weights:
        return out, weights.array.copy()
    return out


def multi_head_attention(
    x_q: Tensor,
    x_k: Tensor,
    x_v: Tensor,
    store: ParameterStore,
    prefix: str,
    n_heads: int,
    mask=None,
    return_weights: bool = False,
):
    """Project h times, attend per head, concatenate, project with W^O."""
    d = x_q.shape[1]
    if d % n_heads != 0:
        raise ValueError(f"model dim {d} is not divisible by {n_heads} heads")
    dh = d // n_heads
    q = add_bias(matmul(x_q, store[f"{prefix}.wq"]), store[f"{prefix}.bq"])
    k = add_bias(matmul(x_k, store[f"{prefix}.wk"]), store[f"{prefix}.bk"])
    v = add_bias(matmul(x_v, store[f"{prefix}.wv"]), store[f"{prefix}.bv"])
    heads = []
    head_weights = []
    for h in range(n_heads):
        lo, hi = h * dh, (h + 1) * dh
        piece = scaled_dot_attention(
            slice_cols(q, lo, hi),
            slice_cols(k, lo, hi),
            slice_cols(v, lo, hi),
            mask,
            return_weights=return_weights,
        )
        if return_weights:
            piece, w = piece
            head_weights.append(w)
        heads.append(piece)
    merged = heads[0] if len(heads) == 1 else concat_cols(heads)
    out = add_bias(matmul(merged, store[f"{prefix}.wo"]), store[f"{prefix}.bo"])
    if return_weights:
        return out, np.stack(head_weights)
    return out


def position_wise_ffn(x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    """max(0, x W1 + b1) W2 + b2, applied independently at every position."""
    return add_bias(matmul(relu(add_bias(matmul(x, w1), b1)), w2), b2)


def _sublayer(x: Tensor, out: Tensor, store, ln_prefix: str, cfg: ModelConfig, train, rng) -> Tensor:
    """Residual connection around a sublayer output, then layer norm."""
    out = dropout(out, cfg.dropout, rng, train)
    return layer_norm(add(x, out), store[f"{ln_prefix}.g"], store[f"{ln_prefix}.b"])


def _embed(ids: np.ndarray, store: ParameterStore, cfg: ModelConfig, train, rng) -> Tensor:
    x = scale(embedding_lookup(store["embed.tok"], ids), math.sqrt(cfg.d_model))
    pe = sinusoidal_positions(len(ids), cfg.d_model, dtype=store.dtype)
    x = add(x, Tensor(pe, dtype=store.dtype))
    return dropout(x, cfg.dropout, rng, train)


# ---------------------------------------------------------------------------
# encoder / visual / fusion / decoder
# ---------------------------------------------------------------------------

def encode_text(token_ids, store: ParameterStore, config: ModelConfig,
                train: bool = False, rng=None) -> EncoderOutput:
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 1 or ids.shape[0] == 0:
        raise ValueError("encoder input must be a non-empty id sequence")
    if ids.shape[0] > config.max_text_len:
        raise ValueError(f"input length {ids.shape[0]} exceeds max_text_len={config.max_text_len}")
    mask = ids != PAD_ID
    if not mask.any():
        raise ValueError("encoder input is all padding")
    x = _embed(ids, store, config, train, rng)
    for i in range(config.n_layers_enc):
        attn = multi_head_attention(x, x, x, store, f"enc.{i}.attn", config.n_heads, mask=mask)
        x = _sublayer(x, attn, store, f"enc.{i}.ln_attn", config, train, rng)
        ffn = position_wise_ffn(
            x,
            store[f"enc.{i}.ffn.fc1.w"], store[f"enc.{i}.ffn.fc1.b"],
            store[f"enc.{i}.ffn.fc2.w"], store[f"enc.{i}.ffn.fc2.b"],
        )
        x = _sublayer(x, ffn, store, f"enc.{i}.ln_ffn", config, train, rng)
    return EncoderOutput(z_star=x, mask=mask)


def _as_matrix_tensor(values, dtype) -> Tensor:
    if isinstance(values, Tensor):
        return values
    arr = np.asarray(values, dtype=dtype)
    if arr.ndim == 1:
        arr = arr[None, :]
    return Tensor(arr, dtype=dtype)


def visual_attend(features, g, return_weights: bool = False):
    """Attention-pool feature vectors against the global vector.

    Compatibility c_i is the dot product of feature row b_i with g; the
    softmax of c weighs the rows into the visual context vector
    g* = sum_i a_i b_i. Accepts a RegionFeatureSet, a raw matrix, or a
    Tensor (the latter keeps gradients flowing into learned feature
    transforms).
    """
    if isinstance(features, RegionFeatureSet):
        features = features.features
    b = _as_matrix_tensor(features, getattr(features, "dtype", np.float32))
    gt = _as_matrix_tensor(g, b.dtype)
    scores = transpose(matmul(b, transpose(gt)))        # [1 x n]
    attn = softmax_rows(scores)
    gstar = matmul(attn, b)                             # [1 x d_v]
    if return_weights:
        return gstar, attn.array.copy()
    return gstar


def visual_context(rfs: RegionFeatureSet | None, store: ParameterStore,
                   config: ModelConfig) -> Tensor | None:
    """Per-ablation visual context vector g* (None for text-only)."""
    if not config.uses_visual:
        return None
    if rfs is None:
        raise ValueError(f"ablation {config.ablation} needs region features")
    if rfs.feature_dim != config.d_visual:
        raise ValueError(
            f"region feature dim {rfs.feature_dim} != configured d_visual {config.d_visual}"
        )
    g = global_vector(rfs)
    if config.ablation == "TV":
        return Tensor(g[None, :], dtype=store.dtype)
    if config.ablation == "TVA":
        bag = Tensor(g[None, :], dtype=store.dtype)
        return visual_attend(bag, g.astype(store.dtype))
    # TVAR: enrich region features with a learned embedding of box geometry
    coords = np.array([b.as_tuple() for b in rfs.boxes], dtype=np.float64)
    coord_scale = max(1.0, float(np.abs(coords).max()))
    boxes = Tensor(coords / coord_scale, dtype=store.dtype)
    box_emb = add_bias(matmul(boxes, store["visual.box.w"]), store["visual.box.b"])
    enriched = add(Tensor(rfs.features, dtype=store.dtype), box_emb)
    return visual_attend(enriched, g.astype(store.dtype))


def fuse_multimodal(z_star: Tensor, g_star: Tensor, w: Tensor, b: Tensor) -> FusionOutput:
    """Concatenate g* onto every textual context vector and project back to d_model."""
    m, d = z_star.shape
    if g_star.array.ndim != 2 or g_star.shape[0] != 1:
        raise ValueError(f"g_star must be [1 x d_visual], got {g_star.shape}")
    expected = (d + g_star.shape[1], d)
    if w.shape != expected:
        raise ValueError(f"fusion weight shape {w.shape} != expected {expected}")
    stacked = concat_cols([z_star, repeat_rows(g_star, m)])
    return FusionOutput(y_star=add_bias(matmul(stacked, w), b))


def build_fusion(enc: EncoderOutput, rfs: RegionFeatureSet | None, store: ParameterStore,
                 config: ModelConfig) -> FusionOutput | None:
    gstar = visual_context(rfs, store, config)
    if gstar is None:
        return None
    return fuse_multimodal(enc.z_star, gstar, store["fusion.w"], store["fusion.b"])


def causal_mask(n: int) -> np.ndarray:
    return np.tril(np.ones((n, n), dtype=bool))


def decode(target_ids, enc: EncoderOutput, fus: FusionOutput | None,
           store: ParameterStore, config: ModelConfig,
           train: bool = False, rng=None) -> Tensor:
    """Teacher-forcing decoder pass; returns [t x vocab_size] logits.

    ``target_ids`` is the BOS-framed input sequence. Self-attention is
    causally masked; cross-attention reads z* (y* in the TV variant) and
    the multimodal sublayer, when present, reads y*.
    """
    ids = np.asarray(target_ids, dtype=np.int64)
    if ids.ndim != 1 or ids.shape[0] == 0:
        raise ValueError("decoder input must be a non-empty id sequence")
    if config.uses_visual and fus is None:
        raise ValueError(f"ablation {config.ablation} requires fusion output")
    if not config.uses_visual and fus is not None:
        raise ValueError("text-only ablation received fusion output")
    t = ids.shape[0]
    self_mask = causal_mask(t)
    x = _embed(ids, store, config, train, rng)
    cross_kv = fus.y_star if config.ablation == "TV" else enc.z_star
    for i in range(config.n_layers_dec):
        attn = multi_head_attention(x, x, x, store, f"dec.{i}.self", config.n_heads, mask=self_mask)
        x = _sublayer(x, attn, store, f"dec.{i}.ln_self", config, train, rng)
        cross = multi_head_attention(
            x, cross_kv, cross_kv, store, f"dec.{i}.cross", config.n_heads, mask=enc.mask
        )
        x = _sublayer(x, cross, store, f"dec.{i}.ln_cross", config, train, rng)
        if config.has_multimodal_sublayer:
            mm = multi_head_attention(
                x, fus.y_star, fus.y_star, store, f"dec.{i}.mm", config.n_heads, mask=enc.mask
            )
            x = _sublayer(x, mm, store, f"dec.{i}.ln_mm", config, train, rng)
        ffn = position_wise_ffn(
            x,
            store[f"dec.{i}.ffn.fc1.w"], store[f"dec.{i}.ffn.fc1.b"],
            store[f"dec.{i}.ffn.fc2.w"], store[f"dec.{i}.ffn.fc2.b"],
        )
        x = _sublayer(x, ffn, store, f"dec.{i}.ln_ffn", config, train, rng)
    return add_bias(matmul(x, store["out.w"]), store["out.b"])


def generate_greedy(src_ids, rfs: RegionFeatureSet | None, store: ParameterStore,
                    config: ModelConfig) -> list[int]:
    """Argmax decoding from BOS until EOS or max_gen_len tokens; deterministic."""
    enc = encode_text(src_ids, store, config, train=False)
    fus = build_fusion(enc, rfs, store, config)
    generated: list[int] = []
    prefix = [BOS_ID]
    for _ in range(config.max_gen_len):
        logits = decode(prefix, enc, fus, store, config, train=False)
        nxt = int(np.argmax(logits.array[-1]))
        if nxt == EOS_ID:
            break
        generated.append(nxt)
        prefix.append(nxt)
    return generated
