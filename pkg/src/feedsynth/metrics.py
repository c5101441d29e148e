"""Sentence-overlap metrics over token lists: BLEU-4, ROUGE-L, METEOR, CIDEr.

All functions take pre-tokenized candidate/reference token lists.
Conventions pinned here (and mirrored by the brute-force oracles in the
test suite):

* BLEU-4: modified n-gram precision clipped by the per-reference
  maximum, n = 1..4. For n >= 2 a zero match count is smoothed to
  1/(total+1); a candidate too short to have any n-grams scores p_n = 1;
  zero unigram overlap scores 0 outright. Brevity penalty uses the
  reference length closest to the candidate (ties to the shorter).
  Corpus scoring sums counts before applying the same rules.
* ROUGE-L: LCS-based F1 (beta = 1), max over references.
* METEOR: the "base" variant, exact matching then suffix-stem matching
  (no synonym resources), greedy leftmost alignment, Fmean = 10PR/(R+9P),
  fragmentation penalty 0.5 (chunks/matches)^3, max over references.
* CIDEr: the plain formulation, TF-IDF n-gram cosine, n = 1..4,
  averaged and scaled by 10; idf(k) = ln(N) - ln(max(1, df(k))) with
  document frequency counted over reference sets.
"""

from __future__ import annotations

import math
from collections import Counter


def _ngram_counts(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _check_pair(candidate, references):
    if not candidate:
        raise ValueError("candidate token list is empty")
    if not references:
        raise ValueError("reference list is empty")


def _closest_ref_len(cand_len: int, references) -> int:
    return min((abs(len(r) - cand_len), len(r)) for r in references)[1]


def _bleu_from_counts(matches, totals, cand_len: int, ref_len: int) -> float:
    log_sum = 0.0
    for n in range(1, 5):
        total = totals[n]
        match = matches[n]
        if total == 0:
            precision = 1.0
        elif match == 0:
            if n == 1:
                return 0.0
            precision = 1.0 / (total + 1)
        else:
            precision = match / total
        log_sum += math.log(precision)
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / max(cand_len, 1))
    return bp * math.exp(log_sum / 4.0)


def _pair_counts(candidate, references):
    matches = {}
    totals = {}
    for n in range(1, 5):
        cand_counts = _ngram_counts(candidate, n)
        totals[n] = sum(cand_counts.values())
        clipped = 0
        for gram, count in cand_counts.items():
            best = max(_ngram_counts(r, n)[gram] for r in references)
            clipped += min(count, best)
        matches[n] = clipped
    return matches, totals


def bleu4(candidate, references) -> float:
    """Sentence-level BLEU with 4-gram geometric mean and brevity penalty."""
    _check_pair(candidate, references)
    matches, totals = _pair_counts(candidate, references)
    return _bleu_from_counts(matches, totals, len(candidate), _closest_ref_len(len(candidate), references))


def corpus_bleu4(pairs) -> float:
    """Corpus BLEU over (candidate, references) pairs: counts summed first."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty corpus")
    matches = {n: 0 for n in range(1, 5)}
    totals = {n: 0 for n in range(1, 5)}
    cand_len = 0
    ref_len = 0
    for candidate, references in pairs:
        _check_pair(candidate, references)
        m, t = _pair_counts(candidate, references)
        for n in range(1, 5):
            matches[n] += m[n]
            totals[n] += t[n]
        cand_len += len(candidate)
        ref_len += _closest_ref_len(len(candidate), references)
    return _bleu_from_counts(matches, totals, cand_len, ref_len)


def _lcs_len(a, b) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, references) -> float:
    """Longest-common-subsequence F1, max over references."""
    _check_pair(candidate, references)
    best = 0.0
    for ref in references:
        lcs = _lcs_len(candidate, ref)
        if lcs == 0 or not ref:
            continue
        precision = lcs / len(candidate)
        recall = lcs / len(ref)
        best = max(best, 2.0 * precision * recall / (precision + recall))
    return best


_STEM_SUFFIXES = ("ing", "ed", "ly", "es", "er", "s")


def stem(word: str) -> str:
    """Light suffix stripper used by the METEOR stem stage."""
    for suffix in _STEM_SUFFIXES:
        if word.endswith(suffix) and len(word) - len(suffix) >= 3:
            return word[: -len(suffix)]
    return word


def _align(candidate, references_tokens):
    """Greedy two-stage unigram alignment: exact matches, then stems.

    Returns (cand_index, ref_index) pairs, each token used at most once.
    """
    matches: list[tuple[int, int]] = []
    used_ref = [False] * len(references_tokens)
    used_cand = [False] * len(candidate)
    for stage_key in (lambda w: w, stem):
        for i, tok in enumerate(candidate):
            if used_cand[i]:
                continue
            key = stage_key(tok)
            for j, ref_tok in enumerate(references_tokens):
                if not used_ref[j] and stage_key(ref_tok) == key:
                    matches.append((i, j))
                    used_ref[j] = True
                    used_cand[i] = True
                    break
    matches.sort()
    return matches


def _chunk_count(matches) -> int:
    chunks = 0
    prev = None
    for ci, ri in matches:
        if prev is None or ci != prev[0] + 1 or ri != prev[1] + 1:
            chunks += 1
        prev = (ci, ri)
    return chunks


def meteor(candidate, references) -> float:
    """METEOR-base: exact+stem harmonic mean with fragmentation penalty."""
    _check_pair(candidate, references)
    best = 0.0
    for ref in references:
        matches = _align(candidate, ref)
        m = len(matches)
        if m == 0 or not ref:
            continue
        precision = m / len(candidate)
        recall = m / len(ref)
        fmean = 10.0 * precision * recall / (recall + 9.0 * precision)
        penalty = 0.5 * (_chunk_count(matches) / m) ** 3
        best = max(best, fmean * (1.0 - penalty))
    return best


def cider(candidates, references_list) -> float:
    """Plain corpus CIDEr; companion :func:`cider_scores` gives per-sample values."""
    return sum(cider_scores(candidates, references_list)) / len(candidates)


def cider_scores(candidates, references_list) -> list[float]:
    candidates = list(candidates)
    references_list = list(references_list)
    if len(candidates) != len(references_list):
        raise ValueError(
            f"{len(candidates)} candidates but {len(references_list)} reference sets"
        )
    n_docs = len(candidates)
    if n_docs < 2:
        raise ValueError("CIDEr needs a corpus of at least 2 documents for meaningful idf")
    for cand, refs in zip(candidates, references_list):
        _check_pair(cand, refs)

    log_n = math.log(n_docs)
    idf_by_n: list[dict] = []
    for n in range(1, 5):
        df: Counter = Counter()
        for refs in references_list:
            grams = set()
            for ref in refs:
                grams.update(_ngram_counts(ref, n))
            df.update(grams)
        idf_by_n.append({g: log_n - math.log(max(1.0, c)) for g, c in df.items()})

    def weighted(tokens, n):
        idf = idf_by_n[n - 1]
        return {g: c * idf.get(g, log_n) for g, c in _ngram_counts(tokens, n).items()}

    def cosine(u, v):
        nu = math.sqrt(sum(x * x for x in u.values()))
        nv = math.sqrt(sum(x * x for x in v.values()))
        if nu == 0.0 or nv == 0.0:
            return 0.0
        dot = sum(x * v[g] for g, x in u.items() if g in v)
        return dot / (nu * nv)

    scores = []
    for cand, refs in zip(candidates, references_list):
        per_n = []
        for n in range(1, 5):
            cand_vec = weighted(cand, n)
            sims = [cosine(cand_vec, weighted(ref, n)) for ref in refs]
            per_n.append(sum(sims) / len(refs))
        scores.append(10.0 * sum(per_n) / 4.0)
    return scores
