"""Consensus-based caption metric over TF-IDF n-gram vectors.

N-grams of orders 1..4 are weighted by corpus-level inverse document
frequency (documents = each item's reference set), candidate counts are
clipped to the reference's, and the cosine similarity is damped by a
Gaussian penalty on the token-length difference (sigma = 6). Scores are
averaged over orders and references and scaled by 10, giving a per-item
range of [0, 10].
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict

from .tokenizer import tokenize

MAX_NGRAM = 4
SIGMA = 6.0
SCALE = 10.0


def _ngram_counts(tokens: list[str]) -> dict[tuple[str, ...], int]:
    counts: Counter = Counter()
    for n in range(1, MAX_NGRAM + 1):
        for start in range(len(tokens) - n + 1):
            counts[tuple(tokens[start : start + n])] += 1
    return counts


def _document_frequencies(items) -> dict[tuple[str, ...], int]:
    """df over items: an n-gram counts once per item whose reference set
    contains it anywhere."""
    df: defaultdict = defaultdict(int)
    for item in items:
        seen = set()
        for ref in item.references:
            seen.update(_ngram_counts(tokenize(ref)))
        for ngram in seen:
            df[ngram] += 1
    return df


def _tfidf_vector(
    counts: dict[tuple[str, ...], int],
    df: dict[tuple[str, ...], int],
    log_items: float,
) -> tuple[list[dict], list[float]]:
    """Per-order sparse vectors of count * idf, plus their norms."""
    vectors = [dict() for _ in range(MAX_NGRAM)]
    for ngram, count in counts.items():
        idf = log_items - math.log(max(1.0, df.get(ngram, 0)))
        vectors[len(ngram) - 1][ngram] = count * idf
    norms = [math.sqrt(sum(w * w for w in vec.values())) for vec in vectors]
    return vectors, norms


def _similarity(
    cand_vecs, cand_norms, cand_len, ref_vecs, ref_norms, ref_len
) -> list[float]:
    """Clipped cosine per n-gram order, with the Gaussian length penalty."""
    delta = float(cand_len - ref_len)
    penalty = math.exp(-(delta**2) / (2.0 * SIGMA**2))
    sims = []
    for order in range(MAX_NGRAM):
        num = 0.0
        ref_vec = ref_vecs[order]
        for ngram, weight in cand_vecs[order].items():
            num += min(weight, ref_vec.get(ngram, 0.0)) * ref_vec.get(ngram, 0.0)
        if cand_norms[order] != 0.0 and ref_norms[order] != 0.0:
            num /= cand_norms[order] * ref_norms[order]
        else:
            num = 0.0
        sims.append(num * penalty)
    return sims


def cider_d(corpus) -> dict:
    """Per-item and mean scores for a corpus of candidate/reference items."""
    items = list(corpus.items)
    df = _document_frequencies(items)
    log_items = math.log(float(len(items))) if items else 0.0

    per_item: dict[str, float] = {}
    for item in items:
        cand_tokens = tokenize(item.candidate)
        cand_counts = _ngram_counts(cand_tokens)
        cand_vecs, cand_norms = _tfidf_vector(cand_counts, df, log_items)

        order_totals = [0.0] * MAX_NGRAM
        for ref in item.references:
            ref_tokens = tokenize(ref)
            ref_vecs, ref_norms = _tfidf_vector(_ngram_counts(ref_tokens), df, log_items)
            sims = _similarity(
                cand_vecs, cand_norms, len(cand_tokens),
                ref_vecs, ref_norms, len(ref_tokens),
            )
            for order in range(MAX_NGRAM):
                order_totals[order] += sims[order]

        mean_over_orders = sum(order_totals) / MAX_NGRAM
        per_item[item.item_id] = mean_over_orders / len(item.references) * SCALE

    mean = sum(per_item.values()) / len(per_item) if per_item else 0.0
    return {"per_item": per_item, "corpus": mean}
