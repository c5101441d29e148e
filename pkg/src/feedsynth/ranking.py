"""Similarity machinery and like-rank evaluation metrics.

Embeddings come from a pluggable provider (any deterministic
text -> vector function); the ranking metrics only see the resulting
like-ranks, so they are independent of which provider produced them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class EmbeddingProvider:
    """Deterministic text -> vector function with a provenance tag."""

    embed: Callable[[str], np.ndarray]
    provenance: str

    def __call__(self, text: str) -> np.ndarray:
        vec = np.asarray(self.embed(text), dtype=np.float64)
        if vec.ndim != 1:
            raise ValueError(f"provider {self.provenance!r} returned shape {vec.shape}")
        return vec


def cosine_similarity(a, b, raw: bool = False) -> float:
    """Normalized dot product of two vectors; ``raw=True`` skips normalization."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"vectors must share a 1-D shape, got {a.shape} and {b.shape}")
    dot = float(a @ b)
    if raw:
        return dot
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return dot / (na * nb)


def distillation_loss(teacher_comment, student_comment, student_feedback) -> float:
    """Mean squared teacher-student embedding gap.

    Takes parallel sequences of (comment via teacher, comment via
    student, feedback via student) vectors and averages, over pairs, the
    summed squared differences of both student outputs against the
    teacher's comment embedding.
    """
    tc = [np.asarray(v, dtype=np.float64) for v in teacher_comment]
    sc = [np.asarray(v, dtype=np.float64) for v in student_comment]
    sf = [np.asarray(v, dtype=np.float64) for v in student_feedback]
    n = len(tc)
    if n == 0 or len(sc) != n or len(sf) != n:
        raise ValueError("need equal, non-zero numbers of embedding triples")
    dim = tc[0].shape
    total = 0.0
    for a, b, c in zip(tc, sc, sf):
        if a.shape != dim or b.shape != dim or c.shape != dim:
            raise ValueError("embedding dimensions differ across the triples")
        total += float(((b - a) ** 2).sum() + ((c - a) ** 2).sum())
    return total / n


def rank_feedback(feedback: str, comments, provider: EmbeddingProvider,
                  raw: bool = False) -> tuple[int, float]:
    """Like-rank of the comment most similar to the feedback.

    Comments are ordered by likes descending (ties keep input order);
    similarity is cosine over provider embeddings. Returns the 1-based
    rank of the argmax-similarity comment and its similarity score.
    """
    comments = list(comments)
    if not comments:
        raise ValueError("rank_feedback needs at least one comment")
    by_likes = sorted(range(len(comments)), key=lambda i: (-comments[i].likes, i))
    fvec = provider(feedback)
    sims = [cosine_similarity(fvec, provider(comments[i].text), raw=raw) for i in by_likes]
    best = int(np.argmax(sims))
    return best + 1, float(sims[best])


def mrr(ranks) -> float:
    """Mean reciprocal rank of 1-based ranks."""
    ranks = list(ranks)
    if not ranks:
        raise ValueError("mrr of an empty rank list")
    if any(r < 1 for r in ranks):
        raise ValueError("ranks are 1-based")
    return sum(1.0 / r for r in ranks) / len(ranks)


def recall_at_k(ranks, k: int) -> float:
    """Percentage of ranks within the top k."""
    ranks = list(ranks)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not ranks:
        return 0.0
    return 100.0 * sum(1 for r in ranks if r <= k) / len(ranks)
