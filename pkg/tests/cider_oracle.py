"""Independent reference implementation of the consensus caption metric.

Deliberately structured unlike the package module: dense vectors over an
explicit n-gram vocabulary, fsum accumulation, and no shared code beyond
the tokenizer (which has its own direct tests). Used to cross-check
per-item scores to 1e-9.
"""

import math

MAX_N = 4
SIGMA = 6.0


def ngrams_of(tokens, n):
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def oracle_cider(items):
    """items: list of dicts {"id", "cand": tokens, "refs": [tokens, ...]}.

    Returns {item_id: score}.
    """
    total_items = len(items)

    # document frequency: one count per item whose reference set holds the gram
    df = {}
    for item in items:
        grams_here = set()
        for ref in item["refs"]:
            for n in range(1, MAX_N + 1):
                grams_here.update(ngrams_of(ref, n))
        for gram in grams_here:
            df[gram] = df.get(gram, 0) + 1

    def idf(gram):
        return math.log(total_items) - math.log(max(1.0, df.get(gram, 0)))

    def dense_vector(tokens, vocab, n):
        grams = ngrams_of(tokens, n)
        return [grams.count(v) * idf(v) for v in vocab]

    scores = {}
    for item in items:
        per_ref_means = []
        for ref in item["refs"]:
            order_sims = []
            for n in range(1, MAX_N + 1):
                vocab = sorted(set(ngrams_of(item["cand"], n)) | set(ngrams_of(ref, n)))
                c = dense_vector(item["cand"], vocab, n)
                r = dense_vector(ref, vocab, n)
                num = math.fsum(min(ci, ri) * ri for ci, ri in zip(c, r))
                norm_c = math.sqrt(math.fsum(x * x for x in c))
                norm_r = math.sqrt(math.fsum(x * x for x in r))
                cos = num / (norm_c * norm_r) if norm_c > 0 and norm_r > 0 else 0.0
                delta = len(item["cand"]) - len(ref)
                order_sims.append(cos * math.exp(-(delta**2) / (2 * SIGMA**2)))
            per_ref_means.append(math.fsum(order_sims) / MAX_N)
        scores[item["id"]] = math.fsum(per_ref_means) / len(item["refs"]) * 10.0
    return scores
