"""End-to-end evaluation: generate feedback, score it, emit reports.

The report carries BLEU-4, ROUGE-L, METEOR, CIDEr (sentence-overlap
metrics against each article's comments) plus MRR and Recall@k computed
from like-ranks under a pluggable embedding provider. SPICE is not
implemented (it requires an external semantic scene-graph parser) and
is deliberately absent from the report schema.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .metrics import cider, corpus_bleu4, meteor, rouge_l
from .model import encode_text, generate_greedy
from .ranking import EmbeddingProvider, mrr, rank_feedback, recall_at_k
from .text import UNK_ID, UNK_TOKEN, normalize_text, tokenize
from .training import Checkpoint

DEFAULT_KS = (1, 3, 5, 7)


@dataclass
class EvalReport:
    bleu4: float
    rouge_l: float
    meteor: float
    cider: float
    mrr: float
    recall_at: dict[int, float]

    def to_dict(self) -> dict[str, float]:
        """Metric values in report-column order (overlap metrics, then ranking)."""
        out = {
            "bleu4": self.bleu4,
            "cider": self.cider,
            "rouge_l": self.rouge_l,
            "meteor": self.meteor,
            "mrr": self.mrr,
        }
        for k in sorted(self.recall_at):
            out[f"recall@{k}"] = self.recall_at[k]
        return out


# ---------------------------------------------------------------------------
# embedding providers
# ---------------------------------------------------------------------------

def encoder_embedding_provider(ckpt: Checkpoint) -> EmbeddingProvider:
    """Mean-pooled encoder context vectors of the trained model."""

    def embed(text: str) -> np.ndarray:
        ids = ckpt.vocab.encode(text, ckpt.config.max_text_len)
        if not ids:
            ids = [UNK_ID]
        enc = encode_text(np.asarray(ids, dtype=np.int64), ckpt.store, ckpt.config, train=False)
        rows = enc.z_star.array[enc.mask]
        return rows.mean(axis=0).astype(np.float64)

    return EmbeddingProvider(embed=embed, provenance="model-encoder")


def text_sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def file_embedding_provider(path) -> EmbeddingProvider:
    """Embeddings from a newline-delimited JSON file keyed by text sha256.

    Each line: {"text_sha256": ..., "vector": [...]}. Lookup misses
    raise KeyError (provider failures propagate to the caller).
    """
    table: dict[str, np.ndarray] = {}
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if set(obj) != {"text_sha256", "vector"}:
                raise ValueError(f"line {line_no}: expected keys text_sha256 and vector")
            vec = np.asarray(obj["vector"], dtype=np.float64)
            if vec.ndim != 1:
                raise ValueError(f"line {line_no}: vector must be 1-D")
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise ValueError(f"line {line_no}: vector dim {vec.shape[0]} != {dim}")
            table[obj["text_sha256"]] = vec

    def embed(text: str) -> np.ndarray:
        key = text_sha256(text)
        if key not in table:
            raise KeyError(f"no embedding on file for text with sha256 {key}")
        return table[key]

    return EmbeddingProvider(embed=embed, provenance="external-file")


def write_embedding_file(texts_to_vectors: dict[str, np.ndarray], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for text, vec in texts_to_vectors.items():
            obj = {"text_sha256": text_sha256(text), "vector": [float(v) for v in vec]}
            fh.write(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")


# ---------------------------------------------------------------------------
# generation + suite
# ---------------------------------------------------------------------------

def generate_feedback(ckpt: Checkpoint, samples, regions=None) -> dict[str, str]:
    """Greedy feedback per sample id."""
    out: dict[str, str] = {}
    for sample in samples:
        ids = ckpt.vocab.encode(sample.text, ckpt.config.max_text_len)
        if not ids:
            ids = [UNK_ID]
        rfs = None
        if ckpt.config.uses_visual:
            if regions is None or sample.image_ref not in regions:
                raise ValueError(
                    f"ablation {ckpt.config.ablation} needs region features for "
                    f"{sample.image_ref!r} (sample {sample.id!r})"
                )
            rfs = regions[sample.image_ref]
        tokens = ckpt.vocab.decode(generate_greedy(np.asarray(ids), rfs, ckpt.store, ckpt.config))
        out[sample.id] = " ".join(tokens)
    return out


def _metric_tokens(text: str) -> list[str]:
    toks = tokenize(normalize_text(text))
    return toks if toks else [UNK_TOKEN]


def score_feedback(samples, feedbacks: dict[str, str], provider: EmbeddingProvider,
                   ks=DEFAULT_KS) -> EvalReport:
    """Score pre-generated feedback texts against each sample's comments."""
    samples = list(samples)
    if not samples:
        raise ValueError("empty evaluation split")
    missing = [s.id for s in samples if s.id not in feedbacks]
    if missing:
        raise ValueError(f"feedback missing for sample(s): {missing}")
    pairs = []
    cands = []
    refs_list = []
    rouge_vals = []
    meteor_vals = []
    ranks = []
    for sample in samples:
        if not sample.comments:
            raise ValueError(f"sample {sample.id!r} has no reference comments")
        cand = _metric_tokens(feedbacks[sample.id])
        refs = [_metric_tokens(c.text) for c in sample.comments]
        pairs.append((cand, refs))
        cands.append(cand)
        refs_list.append(refs)
        rouge_vals.append(rouge_l(cand, refs))
        meteor_vals.append(meteor(cand, refs))
        rank, _ = rank_feedback(feedbacks[sample.id] or UNK_TOKEN, sample.comments, provider)
        ranks.append(rank)
    cider_value = cider(cands, refs_list) if len(cands) >= 2 else 0.0
    return EvalReport(
        bleu4=corpus_bleu4(pairs),
        rouge_l=sum(rouge_vals) / len(rouge_vals),
        meteor=sum(meteor_vals) / len(meteor_vals),
        cider=cider_value,
        mrr=mrr(ranks),
        recall_at={k: recall_at_k(ranks, k) for k in ks},
    )


def evaluate_suite(ckpt: Checkpoint, samples, regions=None,
                   provider: EmbeddingProvider | None = None,
                   ks=DEFAULT_KS) -> EvalReport:
    """Generate greedily for every sample, then score against its comments."""
    if provider is None:
        provider = encoder_embedding_provider(ckpt)
    feedbacks = generate_feedback(ckpt, samples, regions)
    return score_feedback(samples, feedbacks, provider, ks=ks)


# ---------------------------------------------------------------------------
# report output
# ---------------------------------------------------------------------------

def report_to_csv(report: EvalReport, path, provider_tag: str) -> None:
    values = report.to_dict()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(list(values) + ["provider"]) + "\n")
        fh.write(",".join([f"{values[k]:.6f}" for k in values] + [provider_tag]) + "\n")


def format_report(report: EvalReport, provider_tag: str) -> str:
    values = report.to_dict()
    width = max(len(k) for k in values)
    lines = [f"{k.ljust(width)}  {v:.4f}" for k, v in values.items()]
    lines.append(f"{'provider'.ljust(width)}  {provider_tag}")
    return "\n".join(lines)


WORKSHEET_COLUMNS = (
    "id", "text_excerpt", "image_ref", "top_comment", "generated_feedback",
    "s_ct", "s_ci", "s_ft", "s_fi", "s_cf",
)


def export_worksheet(samples, feedbacks: dict[str, str], path, excerpt_len: int = 200) -> None:
    """CSV worksheet for manual similarity scoring; score columns left blank."""
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(WORKSHEET_COLUMNS)
        for sample in samples:
            top = max(enumerate(sample.comments), key=lambda ic: (ic[1].likes, -ic[0]))[1] \
                if sample.comments else None
            writer.writerow([
                sample.id,
                sample.text[:excerpt_len],
                sample.image_ref,
                top.text if top else "",
                feedbacks.get(sample.id, ""),
                "", "", "", "", "",
            ])
