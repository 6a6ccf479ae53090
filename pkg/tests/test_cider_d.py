"""Consensus metric versus an independently written oracle.

The oracle (cider_oracle.py) predates these assertions; the desk-corpus
constants below are frozen from its output and must never be regenerated
from the module under test.
"""

import math
import random
from pathlib import Path

from increport.metrics import Corpus, CorpusItem, cider_d, load_corpus_jsonl, tokenize

from cider_oracle import oracle_cider

DATA_DIR = Path(__file__).parent / "data"

# Frozen oracle output for the committed desk corpus.
DESK_EXPECTED = {
    "d1": 6.999334932458437,
    "d2": 3.1428444939345757,
    "d3": 3.2130917142337667,
}


def corpus_of(rows):
    return Corpus(
        items=tuple(
            CorpusItem(item_id=i, candidate=c, references=tuple(refs))
            for i, c, refs in rows
        )
    )


def oracle_scores(corpus: Corpus) -> dict:
    items = [
        {
            "id": item.item_id,
            "cand": tokenize(item.candidate),
            "refs": [tokenize(r) for r in item.references],
        }
        for item in corpus.items
    ]
    return oracle_cider(items)


class TestSpecifiedExamples:
    def test_verbatim_item_scores_ten(self):
        corpus = corpus_of(
            [
                ("v1", "a red car stops quickly", ["a red car stops quickly"]),
                ("v2", "pigeons scatter", ["pigeons scatter fast"]),
            ]
        )
        result = cider_d(corpus)
        assert abs(result["per_item"]["v1"] - 10.0) < 1e-9
        oracle = oracle_scores(corpus)
        for item_id, score in result["per_item"].items():
            assert abs(score - oracle[item_id]) < 1e-9

    def test_disjoint_candidate_scores_zero(self):
        corpus = corpus_of(
            [
                ("z1", "purple elephants hum", ["a truck waits at the light"]),
                ("z2", "a truck waits", ["a truck waits at the light"]),
            ]
        )
        assert cider_d(corpus)["per_item"]["z1"] == 0.0

    def test_desk_corpus_matches_frozen_oracle(self):
        corpus = load_corpus_jsonl(DATA_DIR / "desk_corpus.jsonl")
        result = cider_d(corpus)
        assert set(result["per_item"]) == set(DESK_EXPECTED)
        for item_id, expected in DESK_EXPECTED.items():
            assert abs(result["per_item"][item_id] - expected) < 1e-9
        live = oracle_scores(corpus)
        for item_id, expected in live.items():
            assert abs(result["per_item"][item_id] - expected) < 1e-12


class TestEdgeCases:
    def test_single_item_corpus_scores_zero(self):
        # With one item every document frequency equals the corpus size,
        # so all idf weights vanish and both vectors have zero norm.
        corpus = corpus_of(
            [("only", "a red car stops quickly", ["a red car stops quickly"])]
        )
        result = cider_d(corpus)
        assert result["per_item"]["only"] == 0.0
        assert result["corpus"] == 0.0

    def test_short_verbatim_item_misses_empty_orders(self):
        # A two-token sentence has no 3- or 4-grams; those orders score 0
        # by the zero-norm rule, capping a verbatim match at 5.0.
        corpus = corpus_of(
            [
                ("s1", "pigeons scatter", ["pigeons scatter"]),
                ("s2", "a dog barks", ["a dog barks"]),
            ]
        )
        assert abs(cider_d(corpus)["per_item"]["s1"] - 5.0) < 1e-12

    def test_repetition_hand_value_pins_length_penalty_and_clipping(self):
        # cand "a"*6 vs ref "a"*4: per order the clipped cosine is
        # min(6,4)*4/(6*4)=2/3, then 3/5, 1/2, 1/3; delta=2 gives the
        # Gaussian factor exp(-4/72). Mean over orders is 21/40.
        corpus = corpus_of(
            [
                ("rep", "a a a a a a", ["a a a a"]),
                ("other", "b b", ["b b"]),
            ]
        )
        result = cider_d(corpus)
        expected = 10.0 * math.exp(-1.0 / 18.0) * (21.0 / 40.0)
        assert abs(result["per_item"]["rep"] - expected) < 1e-12

    def test_empty_candidate_scores_zero(self):
        corpus = corpus_of(
            [
                ("e1", "", ["a red car stops"]),
                ("e2", "a red car", ["a red car stops"]),
            ]
        )
        assert cider_d(corpus)["per_item"]["e1"] == 0.0


def random_corpus(rng: random.Random, n_items: int) -> Corpus:
    vocab = [
        "a", "the", "car", "truck", "dog", "crosses", "road", "stops",
        "suddenly", "red", "white", "lane",
    ]

    def sentence() -> str:
        return " ".join(rng.choice(vocab) for _ in range(rng.randint(1, 10)))

    rows = []
    for index in range(n_items):
        refs = [sentence() for _ in range(rng.randint(1, 3))]
        rows.append((f"item{index}", sentence(), refs))
    return corpus_of(rows)


class TestAgainstOracle:
    def test_seeded_random_corpora(self):
        rng = random.Random(20250814)
        for _ in range(10):
            corpus = random_corpus(rng, rng.randint(2, 8))
            result = cider_d(corpus)
            oracle = oracle_scores(corpus)
            for item_id, score in result["per_item"].items():
                assert abs(score - oracle[item_id]) < 1e-9, (item_id, corpus)
                assert 0.0 <= score <= 10.0
            mean = sum(result["per_item"].values()) / len(result["per_item"])
            assert abs(result["corpus"] - mean) < 1e-12

    def test_permutation_invariance(self):
        rng = random.Random(99)
        corpus = random_corpus(rng, 6)
        shuffled_items = list(corpus.items)
        rng.shuffle(shuffled_items)
        shuffled = Corpus(items=tuple(shuffled_items))

        base = cider_d(corpus)
        moved = cider_d(shuffled)
        assert base["per_item"] == moved["per_item"]
        assert base["corpus"] == moved["corpus"]

    def test_deterministic_across_calls(self):
        corpus = load_corpus_jsonl(DATA_DIR / "desk_corpus.jsonl")
        assert cider_d(corpus) == cider_d(corpus)
