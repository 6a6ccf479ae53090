"""Corpus model, metric assembly, final scores, and leaderboards.

The headline trio is SPICE, METEOR, and CIDEr-D. SPICE is never computed
here (it needs scene-graph parsing); per-item values arrive through a JSON
sidecar, and a missing metric leaves the final score undefined rather than
silently re-basing the mean.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Optional, Sequence

from ..errors import InvalidInputError, UndefinedScoreError
from .cider_d import cider_d
from .meteor import meteor

HEADLINE_METRICS = ("spice", "meteor", "cider_d")


@dataclass(frozen=True)
class CorpusItem:
    item_id: str
    candidate: str
    references: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.references:
            raise InvalidInputError(f"item {self.item_id!r} has no references")


@dataclass(frozen=True)
class Corpus:
    items: tuple[CorpusItem, ...]

    def __post_init__(self) -> None:
        ids = [item.item_id for item in self.items]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise InvalidInputError(f"duplicate item ids: {dupes}")

    def __len__(self) -> int:
        return len(self.items)


def load_corpus_jsonl(path: Path | str) -> Corpus:
    """Read a corpus file: one JSON object per line with item_id,
    candidate, references[]."""
    items = []
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidInputError(
                    f"{path}:{lineno}: not valid JSON: {exc.msg}"
                ) from exc
            try:
                items.append(
                    CorpusItem(
                        item_id=str(doc["item_id"]),
                        candidate=str(doc["candidate"]),
                        references=tuple(str(r) for r in doc["references"]),
                    )
                )
            except (KeyError, TypeError) as exc:
                raise InvalidInputError(
                    f"{path}:{lineno}: missing or malformed field: {exc}"
                ) from exc
    return Corpus(items=tuple(items))


def load_spice_sidecar(path: Path | str) -> tuple[dict[str, float], dict[str, float]]:
    """Read externally computed scores.

    Two accepted shapes: a flat map {item_id: spice} or an extended object
    {"spice": {item_id: value}, "corpus_scores": {metric: value}}. Returns
    (per_item_spice, corpus_overrides); the overrides replace computed
    corpus-level metric values when present.
    """
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise InvalidInputError("sidecar must be a JSON object")
    if "spice" in doc and isinstance(doc["spice"], dict):
        per_item = {str(k): float(v) for k, v in doc["spice"].items()}
        overrides_raw = doc.get("corpus_scores", {})
        if not isinstance(overrides_raw, dict):
            raise InvalidInputError("corpus_scores must be a JSON object")
        overrides = {}
        for key, value in overrides_raw.items():
            if key not in HEADLINE_METRICS:
                raise InvalidInputError(
                    f"unknown corpus_scores metric {key!r}; "
                    f"expected one of {list(HEADLINE_METRICS)}"
                )
            overrides[key] = float(value)
        return per_item, overrides
    return {str(k): float(v) for k, v in doc.items()}, {}


def final_score(
    spice: Optional[float], meteor_score: Optional[float], cider: Optional[float]
) -> float:
    """Arithmetic mean of the three headline metrics, reported at 4 decimal
    places, round half up."""
    missing = [
        name
        for name, value in zip(HEADLINE_METRICS, (spice, meteor_score, cider))
        if value is None
    ]
    if missing:
        raise UndefinedScoreError(
            f"final score undefined: missing metric(s) {missing}"
        )
    mean = (
        Decimal(str(spice)) + Decimal(str(meteor_score)) + Decimal(str(cider))
    ) / Decimal(3)
    return float(mean.quantize(Decimal("0.0001"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class MetricReport:
    """Per-item and corpus-level scores for the metrics actually computed.

    ``final`` is None whenever any headline metric is absent; it is never
    re-based over a subset.
    """

    per_item: dict[str, dict[str, float]]
    corpus_scores: dict[str, float]
    metrics_computed: tuple[str, ...]
    final: Optional[float]
    missing_metrics: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "metrics_computed": list(self.metrics_computed),
            "corpus_scores": dict(self.corpus_scores),
            "per_item": {m: dict(v) for m, v in self.per_item.items()},
            "final_score": self.final,
            "missing_metrics": list(self.missing_metrics),
        }


def evaluate_corpus(
    corpus: Corpus,
    spice_per_item: Optional[dict[str, float]] = None,
    corpus_overrides: Optional[dict[str, float]] = None,
) -> MetricReport:
    """Run METEOR and CIDEr-D, merge external SPICE, and assemble the
    final score when the trio is complete."""
    meteor_result = meteor(corpus)
    cider_result = cider_d(corpus)
    per_item = {
        "meteor": meteor_result["per_item"],
        "cider_d": cider_result["per_item"],
    }
    corpus_scores = {
        "meteor": meteor_result["corpus"],
        "cider_d": cider_result["corpus"],
    }
    computed = ["meteor", "cider_d"]
    missing = []

    if spice_per_item is not None:
        absent = [item.item_id for item in corpus.items if item.item_id not in spice_per_item]
        if absent:
            raise InvalidInputError(
                f"sidecar lacks spice for items: {absent[:5]}"
                + ("..." if len(absent) > 5 else "")
            )
        spice_items = {
            item.item_id: float(spice_per_item[item.item_id]) for item in corpus.items
        }
        per_item["spice"] = spice_items
        corpus_scores["spice"] = (
            sum(spice_items.values()) / len(spice_items) if spice_items else 0.0
        )
        computed.append("spice")
    else:
        missing.append("spice")

    for key, value in (corpus_overrides or {}).items():
        corpus_scores[key] = value

    final: Optional[float] = None
    if not missing:
        final = final_score(
            corpus_scores["spice"], corpus_scores["meteor"], corpus_scores["cider_d"]
        )
    return MetricReport(
        per_item=per_item,
        corpus_scores=corpus_scores,
        metrics_computed=tuple(sorted(computed)),
        final=final,
        missing_metrics=tuple(missing),
    )


@dataclass(frozen=True)
class LeaderboardRow:
    rank: int
    name: str
    final: float
    spice: float
    meteor: float
    cider_d: float


def build_leaderboard(
    entries: Sequence[tuple[str, float, float, float]]
) -> list[LeaderboardRow]:
    """Rank named (spice, meteor, cider_d) entries by final score.

    Competition ranking: equal rounded finals share a rank and the next
    distinct score skips the tied count. Within a tie, names sort
    alphabetically for deterministic output.
    """
    names = [name for name, *_ in entries]
    if len(set(names)) != len(names):
        raise InvalidInputError("leaderboard entry names must be unique")
    scored = sorted(
        (
            (final_score(spice, met, cid), name, spice, met, cid)
            for name, spice, met, cid in entries
        ),
        key=lambda row: (-row[0], row[1]),
    )
    rows: list[LeaderboardRow] = []
    for position, (final, name, spice, met, cid) in enumerate(scored, start=1):
        if rows and rows[-1].final == final:
            rank = rows[-1].rank
        else:
            rank = position
        rows.append(
            LeaderboardRow(
                rank=rank, name=name, final=final, spice=spice, meteor=met, cider_d=cid
            )
        )
    return rows
