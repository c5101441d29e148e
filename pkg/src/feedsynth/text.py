"""Text normalization, tokenization, and the id vocabulary.

Normalization mirrors the corpus pre-processing convention: HTML tags are
stripped, contractions are expanded from a fixed ~120-entry table shipped
with the package, whitespace is collapsed, and everything is lowercased.
Unlisted contractions pass through untouched.
"""

from __future__ import annotations

import html
import json
import re
from collections import Counter
from functools import lru_cache
from importlib import resources

PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN = "<pad>", "<bos>", "<eos>", "<unk>"
RESERVED_TOKENS = (PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN)

_TAG_RE = re.compile(r"<[^>]*>")
_WS_RE = re.compile(r"\s+")
_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


@lru_cache(maxsize=1)
def contraction_table() -> dict[str, str]:
    path = resources.files("feedsynth").joinpath("resources/contractions.json")
    return json.loads(path.read_text(encoding="utf-8"))


@lru_cache(maxsize=1)
def _contraction_pattern() -> re.Pattern:
    keys = sorted(contraction_table(), key=len, reverse=True)
    joined = "|".join(re.escape(k) for k in keys)
    return re.compile(rf"(?<![\w'])({joined})(?!['\w])")


def normalize_text(raw: str) -> str:
    """Strip HTML, expand contractions, collapse whitespace, lowercase."""
    if not raw:
        return ""
    text = html.unescape(raw)
    text = _TAG_RE.sub(" ", text)
    text = text.replace("’", "'").replace("‘", "'")
    text = text.lower()
    table = contraction_table()
    text = _contraction_pattern().sub(lambda m: table[m.group(1)], text)
    return _WS_RE.sub(" ", text).strip()


def tokenize(text: str) -> list[str]:
    """Split on whitespace and punctuation; punctuation marks stay as tokens."""
    return _TOKEN_RE.findall(text)


class Vocabulary:
    """Bijective token/id map with four reserved ids (pad, bos, eos, unk).

    Ids are assigned deterministically: descending corpus count, ties
    broken lexicographically.
    """

    def __init__(self, tokens: list[str], min_frequency: int = 1):
        self.min_frequency = min_frequency
        for tok in tokens:
            if tok in RESERVED_TOKENS:
                raise ValueError(f"token {tok!r} collides with a reserved token")
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary tokens must be unique")
        self._id_to_token = list(RESERVED_TOKENS) + list(tokens)
        self._token_to_id = {tok: i for i, tok in enumerate(self._id_to_token)}

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def token_id(self, token: str) -> int:
        return self._token_to_id.get(token, UNK_ID)

    def id_token(self, idx: int) -> str:
        return self._id_to_token[idx]

    def tokens(self) -> list[str]:
        """Non-reserved tokens in id order (for serialization)."""
        return self._id_to_token[len(RESERVED_TOKENS):]

    def encode(self, text: str, max_len: int = 512, frame: bool = False) -> list[int]:
        """Normalize, tokenize, map to ids, truncate; frame adds BOS/EOS."""
        toks = tokenize(normalize_text(text))[:max_len]
        ids = [self.token_id(t) for t in toks]
        if frame:
            return [BOS_ID] + ids + [EOS_ID]
        return ids

    def decode(self, ids) -> list[str]:
        """Surface tokens, dropping pad/bos/eos; unknown ids render as <unk>."""
        out = []
        for i in ids:
            i = int(i)
            if i in (PAD_ID, BOS_ID, EOS_ID):
                continue
            out.append(self._id_to_token[i])
        return out


def build_vocab(samples, min_frequency: int = 1) -> Vocabulary:
    """Count tokens over article bodies and comments; keep those at or above min_frequency."""
    if not samples:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts: Counter[str] = Counter()
    for sample in samples:
        counts.update(tokenize(normalize_text(sample.text)))
        for comment in sample.comments:
            counts.update(tokenize(normalize_text(comment.text)))
    kept = [tok for tok, c in counts.items() if c >= min_frequency]
    kept.sort(key=lambda tok: (-counts[tok], tok))
    return Vocabulary(kept, min_frequency=min_frequency)
