"""Corpus ingestion: canonical records, the legacy CSV format, splits, stats.

The canonical on-disk format is newline-delimited JSON, one article per
line::

    {"id": ..., "title": ..., "text": ..., "image_ref": ...,
     "comments": [{"text": ..., "likes": ...}, ...]}

The legacy CSV format (columns Title, Text, Image, Comment, Likes with
delimiter-joined comment/like lists) is supported read-only; its join is
lossy when comment text contains the delimiter, so rows whose comment and
like counts disagree are skipped and reported rather than guessed at.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .text import normalize_text

LEGACY_COLUMNS = ("Title", "Text", "Image", "Comment", "Likes")

SPLIT_MODES = ("holdout80_20", "kfold5", "low", "mid", "high", "all")

# comment-count ranges for the low/mid/high subsets; mid and high overlap
# deliberately (31..50 belongs to both)
LOW_MAX_COMMENTS = 5
MID_RANGE = (13, 50)
HIGH_MIN_COMMENTS = 30


class RecordError(ValueError):
    """A record file violated the schema; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Comment:
    text: str
    likes: int

    def __post_init__(self):
        if self.likes < 0:
            raise ValueError(f"likes must be non-negative, got {self.likes}")


@dataclass
class Sample:
    """One news article: text, an image reference, and its user comments."""

    id: str
    title: str
    text: str
    image_ref: str
    comments: list[Comment] = field(default_factory=list)


@dataclass
class CorpusStats:
    n_articles: int
    n_samples: int
    avg_comments_per_article: float
    avg_likes_per_comment: float
    avg_text_len_words: float
    avg_comment_len_words: float


_RECORD_KEYS = {"id", "title", "text", "image_ref", "comments"}
_COMMENT_KEYS = {"text", "likes"}


def _parse_record(obj, line: int) -> Sample:
    if not isinstance(obj, dict):
        raise RecordError("record must be a JSON object", line)
    keys = set(obj)
    if keys != _RECORD_KEYS:
        missing = _RECORD_KEYS - keys
        extra = keys - _RECORD_KEYS
        parts = []
        if missing:
            parts.append(f"missing keys {sorted(missing)}")
        if extra:
            parts.append(f"unknown keys {sorted(extra)}")
        raise RecordError("; ".join(parts), line)
    for key in ("id", "title", "text", "image_ref"):
        if not isinstance(obj[key], str):
            raise RecordError(f"field {key!r} must be a string", line)
    if not isinstance(obj["comments"], list):
        raise RecordError("field 'comments' must be an array", line)
    comments = []
    for i, c in enumerate(obj["comments"]):
        if not isinstance(c, dict) or set(c) != _COMMENT_KEYS:
            raise RecordError(f"comment #{i} must be an object with keys ['likes', 'text']", line)
        if not isinstance(c["text"], str):
            raise RecordError(f"comment #{i}: 'text' must be a string", line)
        if not isinstance(c["likes"], int) or isinstance(c["likes"], bool) or c["likes"] < 0:
            raise RecordError(f"comment #{i}: 'likes' must be a non-negative integer", line)
        comments.append(Comment(text=c["text"], likes=c["likes"]))
    return Sample(id=obj["id"], title=obj["title"], text=obj["text"],
                  image_ref=obj["image_ref"], comments=comments)


def parse_records(path) -> list[Sample]:
    """Read a canonical newline-delimited JSON corpus."""
    samples: list[Sample] = []
    seen_ids: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"invalid JSON ({exc.msg})", line_no) from exc
            sample = _parse_record(obj, line_no)
            if sample.id in seen_ids:
                raise RecordError(f"duplicate sample id {sample.id!r}", line_no)
            seen_ids.add(sample.id)
            samples.append(sample)
    return samples


def record_line(sample: Sample) -> str:
    obj = {
        "id": sample.id,
        "title": sample.title,
        "text": sample.text,
        "image_ref": sample.image_ref,
        "comments": [{"likes": c.likes, "text": c.text} for c in sample.comments],
    }
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def write_records(samples, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(record_line(sample) + "\n")


def parse_legacy_csv(path, delimiter: str = ":") -> tuple[list[Sample], list[str]]:
    """Read the legacy CSV corpus; returns (samples, per-row error messages).

    Rows whose comment and like lists disagree in length, or whose likes
    fail to parse as non-negative integers, are skipped and reported.
    """
    samples: list[Sample] = []
    errors: list[str] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        missing = [c for c in LEGACY_COLUMNS if c not in fields]
        if missing:
            raise RecordError(f"legacy CSV is missing columns {missing}")
        for row_no, row in enumerate(reader):
            comment_blob = (row["Comment"] or "").strip()
            likes_blob = (row["Likes"] or "").strip()
            comment_texts = comment_blob.split(delimiter) if comment_blob else []
            like_texts = likes_blob.split(delimiter) if likes_blob else []
            if len(comment_texts) != len(like_texts):
                errors.append(
                    f"row {row_no}: {len(comment_texts)} comments but {len(like_texts)} like counts"
                )
                continue
            if not comment_texts:
                errors.append(f"row {row_no}: no comments")
                continue
            try:
                likes = [int(x) for x in like_texts]
            except ValueError:
                errors.append(f"row {row_no}: malformed like count")
                continue
            if any(n < 0 for n in likes):
                errors.append(f"row {row_no}: negative like count")
                continue
            samples.append(
                Sample(
                    id=f"row{row_no}",
                    title=row["Title"] or "",
                    text=row["Text"] or "",
                    image_ref=row["Image"] or "",
                    comments=[Comment(text=t, likes=n) for t, n in zip(comment_texts, likes)],
                )
            )
    return samples, errors


def normalize_sample(sample: Sample) -> Sample:
    """Normalized copy: title, text, and comment texts pass through normalize_text."""
    return Sample(
        id=sample.id,
        title=normalize_text(sample.title),
        text=normalize_text(sample.text),
        image_ref=sample.image_ref,
        comments=[Comment(text=normalize_text(c.text), likes=c.likes) for c in sample.comments],
    )


def split_dataset(samples, mode: str, seed: int = 0) -> dict[str, list[Sample]]:
    """Partition or filter articles.

    holdout80_20 and kfold5 shuffle article order with the seed and keep
    articles whole (no article straddles two parts). low/mid/high filter
    by comment count: up to 5, 13-50, and more than 30 respectively
    (the mid and high ranges overlap by definition).
    """
    samples = list(samples)
    if mode == "holdout80_20":
        order = np.random.default_rng(seed).permutation(len(samples))
        n_train = int(len(samples) * 0.8)
        return {
            "train": [samples[i] for i in order[:n_train]],
            "test": [samples[i] for i in order[n_train:]],
        }
    if mode == "kfold5":
        order = np.random.default_rng(seed).permutation(len(samples))
        folds = np.array_split(order, 5)
        return {f"fold{i + 1}": [samples[j] for j in fold] for i, fold in enumerate(folds)}
    if mode == "low":
        return {"low": [s for s in samples if len(s.comments) <= LOW_MAX_COMMENTS]}
    if mode == "mid":
        lo, hi = MID_RANGE
        return {"mid": [s for s in samples if lo <= len(s.comments) <= hi]}
    if mode == "high":
        return {"high": [s for s in samples if len(s.comments) > HIGH_MIN_COMMENTS]}
    if mode == "all":
        return {"all": samples}
    raise ValueError(f"unknown split mode {mode!r}; expected one of {SPLIT_MODES}")


def corpus_stats(samples) -> CorpusStats:
    samples = list(samples)
    n_articles = len(samples)
    n_samples = sum(len(s.comments) for s in samples)
    if n_articles == 0:
        return CorpusStats(0, 0, 0.0, 0.0, 0.0, 0.0)
    total_likes = sum(c.likes for s in samples for c in s.comments)
    text_words = [len(s.text.split()) for s in samples]
    comment_words = [len(c.text.split()) for s in samples for c in s.comments]
    return CorpusStats(
        n_articles=n_articles,
        n_samples=n_samples,
        avg_comments_per_article=n_samples / n_articles,
        avg_likes_per_comment=(total_likes / n_samples) if n_samples else 0.0,
        avg_text_len_words=sum(text_words) / n_articles,
        avg_comment_len_words=(sum(comment_words) / n_samples) if n_samples else 0.0,
    )
