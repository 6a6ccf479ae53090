"""Session, blinding, vote translation, and aggregation logic."""

from __future__ import annotations

import hashlib
import json
import math
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Optional

from ..errors import InvalidInputError, SessionError
from ..reports import EntityCategory, IncidentReport, report_from_dict, report_to_dict
from .store import VoteStore

SIGNIFICANCE_LEVEL = 0.05

CHOICES = ("A", "B", "Tie")


class UnknownSessionError(SessionError):
    pass


class UnknownEvaluatorError(SessionError):
    pass


class UnknownPairError(SessionError):
    pass


class DuplicateVoteError(SessionError):
    pass


@dataclass(frozen=True)
class MethodRun:
    """One method's reports, keyed by video. The label identifies the
    method to the experimenter and must never reach evaluators."""

    run_id: str
    label: str
    reports: Mapping[str, IncidentReport]

    def __post_init__(self) -> None:
        if not self.run_id:
            raise InvalidInputError("run_id must be non-empty")
        strays = sorted(
            vid for vid, report in self.reports.items() if report.video_id != vid
        )
        if strays:
            raise InvalidInputError(
                f"run {self.run_id!r}: report video_id mismatch for keys {strays}"
            )


@dataclass(frozen=True)
class Pair:
    pair_id: str
    video_id: str


@dataclass(frozen=True)
class Session:
    session_id: str
    runs: tuple[MethodRun, MethodRun]
    roster: tuple[str, ...]
    seed: int
    pairs: tuple[Pair, ...]
    excluded_videos: tuple[str, ...]


def orientation_flipped(seed: int, pair_id: str, evaluator_id: str) -> bool:
    """Seeded coin flip: True puts the second run on the left."""
    key = f"{seed}|{pair_id}|{evaluator_id}".encode("utf-8")
    return bool(hashlib.sha256(key).digest()[0] & 1)


def translate_choice(on_screen: str, flipped: bool) -> str:
    """On-screen A/B to run-space A/B; a flipped orientation swaps them."""
    if on_screen not in CHOICES:
        raise InvalidInputError(f"choice must be one of {CHOICES}, got {on_screen!r}")
    if on_screen == "Tie" or not flipped:
        return on_screen
    return "B" if on_screen == "A" else "A"


def render_report_text(report: IncidentReport) -> str:
    """Evaluator-facing rendering: the report content with no trace of
    which configuration produced it."""
    involved = "yes" if report.ego_involved else "no"
    entities = "; ".join(
        f"{cat.value.replace('_', ' ')}: {report.entity_counts.get(cat, 0)}"
        for cat in EntityCategory
    )
    tti = report.time_to_incident_frames
    lead = "n/a" if tti is None else f"{tti} frames"
    return "\n".join(
        [
            f"Event type: {report.event_type.value.replace('_', ' ')}",
            f"Crash severity: {report.crash_severity}",
            f"Ego vehicle involved: {involved}",
            f"Entities: {entities}",
            f"Time to incident: {lead}",
            f"Before: {report.caption_before}",
            f"After: {report.caption_after}",
        ]
    )


def sign_test_p(wins_a: int, wins_b: int) -> float:
    """Two-sided exact sign test over decided pairs; ties are excluded
    before the call. No decided pairs means no evidence (p = 1)."""
    if wins_a < 0 or wins_b < 0:
        raise InvalidInputError("win counts must be >= 0")
    n = wins_a + wins_b
    if n == 0:
        return 1.0
    k = min(wins_a, wins_b)
    tail = sum(math.comb(n, i) for i in range(k + 1)) / float(2**n)
    return min(1.0, 2.0 * tail)


def _session_to_doc(session: Session) -> dict:
    return {
        "session_id": session.session_id,
        "seed": session.seed,
        "roster": list(session.roster),
        "pairs": [{"pair_id": p.pair_id, "video_id": p.video_id} for p in session.pairs],
        "excluded_videos": list(session.excluded_videos),
        "runs": [
            {
                "run_id": run.run_id,
                "label": run.label,
                "reports": {
                    vid: report_to_dict(report) for vid, report in run.reports.items()
                },
            }
            for run in session.runs
        ],
    }


def _session_from_doc(doc: dict) -> Session:
    runs = tuple(
        MethodRun(
            run_id=entry["run_id"],
            label=entry["label"],
            reports={
                vid: report_from_dict(report)
                for vid, report in entry["reports"].items()
            },
        )
        for entry in doc["runs"]
    )
    return Session(
        session_id=doc["session_id"],
        runs=runs,
        roster=tuple(doc["roster"]),
        seed=int(doc["seed"]),
        pairs=tuple(Pair(p["pair_id"], p["video_id"]) for p in doc["pairs"]),
        excluded_videos=tuple(doc["excluded_videos"]),
    )


class ScoringService:
    """Holds sessions and votes; everything is re-read from ``state_dir``
    on construction, so a restarted service resumes where it stopped."""

    def __init__(self, state_dir: Path) -> None:
        self._dir = Path(state_dir)
        self._dir.mkdir(parents=True, exist_ok=True)
        self._write_lock = threading.Lock()
        self._sessions: dict[str, Session] = {}
        self._stores: dict[str, VoteStore] = {}
        # votes[session_id][(pair_id, evaluator_id)] = record
        self._votes: dict[str, dict[tuple[str, str], dict]] = {}
        for path in sorted(self._dir.glob("session-*.json")):
            doc = json.loads(path.read_text(encoding="utf-8"))
            session = _session_from_doc(doc)
            self._register(session)

    def _register(self, session: Session) -> None:
        sid = session.session_id
        self._sessions[sid] = session
        self._stores[sid] = VoteStore(self._dir / f"votes-{sid}.jsonl")
        self._votes[sid] = {
            (rec["pair_id"], rec["evaluator_id"]): rec
            for rec in self._stores[sid].load()
        }

    def _session(self, session_id: str) -> Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise UnknownSessionError(f"no session {session_id!r}") from None

    def create_session(
        self,
        runs: tuple[MethodRun, MethodRun],
        roster: tuple[str, ...],
        seed: int,
    ) -> Session:
        if len(runs) != 2:
            raise InvalidInputError(f"a session compares exactly 2 runs, got {len(runs)}")
        if runs[0].run_id == runs[1].run_id:
            raise InvalidInputError(f"run ids must differ, both are {runs[0].run_id!r}")
        if not roster:
            raise InvalidInputError("evaluator roster must be non-empty")
        if len(set(roster)) != len(roster):
            raise InvalidInputError("evaluator roster contains duplicates")

        videos_a = set(runs[0].reports)
        videos_b = set(runs[1].reports)
        shared = sorted(videos_a & videos_b)
        excluded = sorted(videos_a ^ videos_b)
        if not shared:
            raise SessionError(
                f"runs {runs[0].run_id!r} and {runs[1].run_id!r} share no videos"
            )

        session = Session(
            session_id="",
            runs=tuple(runs),
            roster=tuple(roster),
            seed=seed,
            pairs=tuple(
                Pair(pair_id=f"pair-{index:04d}", video_id=vid)
                for index, vid in enumerate(shared)
            ),
            excluded_videos=tuple(excluded),
        )
        # content-derived id: recreating a session from the same inputs
        # resumes it (and its vote log) instead of forking a new one
        fingerprint = hashlib.sha256(
            json.dumps(_session_to_doc(session), sort_keys=True).encode("utf-8")
        ).hexdigest()
        session = Session(
            session_id=f"s-{fingerprint[:12]}",
            runs=session.runs,
            roster=session.roster,
            seed=session.seed,
            pairs=session.pairs,
            excluded_videos=session.excluded_videos,
        )
        existing = self._sessions.get(session.session_id)
        if existing is not None:
            return existing
        path = self._dir / f"session-{session.session_id}.json"
        path.write_text(
            json.dumps(_session_to_doc(session), sort_keys=True) + "\n",
            encoding="utf-8",
        )
        self._register(session)
        return session

    def _check_evaluator(self, session: Session, evaluator_id: str) -> None:
        if evaluator_id not in session.roster:
            raise UnknownEvaluatorError(
                f"evaluator {evaluator_id!r} is not on the roster"
            )

    def _left_right(
        self, session: Session, pair: Pair, evaluator_id: str
    ) -> tuple[IncidentReport, IncidentReport, bool]:
        flipped = orientation_flipped(session.seed, pair.pair_id, evaluator_id)
        first = session.runs[0].reports[pair.video_id]
        second = session.runs[1].reports[pair.video_id]
        return (second, first, True) if flipped else (first, second, False)

    def _progress(self, session: Session, evaluator_id: str) -> dict:
        voted = self._votes[session.session_id]
        done = sum(
            1 for pair in session.pairs if (pair.pair_id, evaluator_id) in voted
        )
        return {"done": done, "total": len(session.pairs)}

    def next_pair(self, session_id: str, evaluator_id: str) -> dict:
        session = self._session(session_id)
        self._check_evaluator(session, evaluator_id)
        voted = self._votes[session_id]
        progress = self._progress(session, evaluator_id)
        for pair in session.pairs:
            if (pair.pair_id, evaluator_id) in voted:
                continue
            left, right, _ = self._left_right(session, pair, evaluator_id)
            return {
                "done": False,
                "pair_id": pair.pair_id,
                "video_id": pair.video_id,
                "left_text": render_report_text(left),
                "right_text": render_report_text(right),
                "progress": progress,
            }
        tally = {"A": 0, "B": 0, "Tie": 0}
        for pair in session.pairs:
            record = voted.get((pair.pair_id, evaluator_id))
            if record is None:
                continue
            on_screen = translate_choice(record["choice"], bool(record["flipped"]))
            tally[on_screen] += 1
        return {"done": True, "progress": progress, "tally": tally}

    def submit_vote(
        self, session_id: str, evaluator_id: str, pair_id: str, choice: str
    ) -> dict:
        session = self._session(session_id)
        self._check_evaluator(session, evaluator_id)
        if choice not in CHOICES:
            raise InvalidInputError(
                f"choice must be one of {CHOICES}, got {choice!r}"
            )
        if all(pair.pair_id != pair_id for pair in session.pairs):
            raise UnknownPairError(f"no pair {pair_id!r} in session {session_id!r}")

        flipped = orientation_flipped(session.seed, pair_id, evaluator_id)
        record = {
            "pair_id": pair_id,
            "evaluator_id": evaluator_id,
            "choice": translate_choice(choice, flipped),
            "flipped": flipped,
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        with self._write_lock:
            votes = self._votes[session_id]
            if (pair_id, evaluator_id) in votes:
                raise DuplicateVoteError(
                    f"evaluator {evaluator_id!r} already voted on {pair_id!r}"
                )
            self._stores[session_id].append(record)
            votes[(pair_id, evaluator_id)] = record
        return {"accepted": True, "progress": self._progress(session, evaluator_id)}

    def results(self, session_id: str) -> dict:
        session = self._session(session_id)
        votes = self._votes[session_id]
        run_a, run_b = session.runs
        wins = {run_a.run_id: 0, run_b.run_id: 0}
        pairs = []
        for pair in session.pairs:
            counts = {"A": 0, "B": 0, "Tie": 0}
            for (pair_id, _evaluator), record in votes.items():
                if pair_id == pair.pair_id:
                    counts[record["choice"]] += 1
            total = sum(counts.values())
            winner: Optional[str] = None
            if counts["A"] * 2 > total:
                winner = run_a.run_id
            elif counts["B"] * 2 > total:
                winner = run_b.run_id
            if winner is not None:
                wins[winner] += 1
            pairs.append(
                {
                    "pair_id": pair.pair_id,
                    "video_id": pair.video_id,
                    "winner": winner,
                    "votes": {
                        run_a.run_id: counts["A"],
                        run_b.run_id: counts["B"],
                        "Tie": counts["Tie"],
                    },
                }
            )

        ordered = sorted(wins.items(), key=lambda item: (-item[1], item[0]))
        ranking = []
        for position, (run_id, win_count) in enumerate(ordered):
            if position > 0 and win_count == ordered[position - 1][1]:
                rank = ranking[position - 1]["rank"]
            else:
                rank = position + 1
            label = next(r.label for r in session.runs if r.run_id == run_id)
            ranking.append(
                {"run_id": run_id, "label": label, "wins": win_count, "rank": rank}
            )

        p_value = sign_test_p(wins[run_a.run_id], wins[run_b.run_id])
        return {
            "session_id": session.session_id,
            "pairs": pairs,
            "excluded_videos": list(session.excluded_videos),
            "decided_pairs": sum(1 for p in pairs if p["winner"] is not None),
            "ranking": ranking,
            "sign_test": {
                "p_value": p_value,
                "alpha": SIGNIFICANCE_LEVEL,
                "no_significant_difference": p_value >= SIGNIFICANCE_LEVEL,
            },
        }
