"""Caption metrics: tokenization, stemming, CIDEr-D, METEOR, final scores."""

from .cider_d import cider_d
from .meteor import align, meteor, meteor_item, score_pair
from .porter import stem
from .scores import (
    Corpus,
    CorpusItem,
    HEADLINE_METRICS,
    LeaderboardRow,
    MetricReport,
    build_leaderboard,
    evaluate_corpus,
    final_score,
    load_corpus_jsonl,
    load_spice_sidecar,
)
from .tokenizer import tokenize

__all__ = [
    "Corpus",
    "CorpusItem",
    "HEADLINE_METRICS",
    "LeaderboardRow",
    "MetricReport",
    "align",
    "build_leaderboard",
    "cider_d",
    "evaluate_corpus",
    "final_score",
    "load_corpus_jsonl",
    "load_spice_sidecar",
    "meteor",
    "meteor_item",
    "score_pair",
    "stem",
    "tokenize",
]
