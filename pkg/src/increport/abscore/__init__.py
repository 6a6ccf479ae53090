"""Blind pairwise preference scoring for incident reports.

Two method runs are paired per shared video; evaluators see the two
rendered reports in a seeded random order with all origin information
stripped, and vote A, B, or Tie. Votes are translated into run space at
write time, appended to a durable log, and aggregated by strict majority
per pair with a two-sided sign test over decided pairs.
"""

from .core import (
    DuplicateVoteError,
    MethodRun,
    ScoringService,
    UnknownEvaluatorError,
    UnknownPairError,
    UnknownSessionError,
    orientation_flipped,
    render_report_text,
    sign_test_p,
    translate_choice,
)
from .store import VoteStore

__all__ = [
    "DuplicateVoteError",
    "MethodRun",
    "ScoringService",
    "UnknownEvaluatorError",
    "UnknownPairError",
    "UnknownSessionError",
    "VoteStore",
    "orientation_flipped",
    "render_report_text",
    "sign_test_p",
    "translate_choice",
]
