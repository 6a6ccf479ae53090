"""HTTP front end for the pairwise scoring service.

Evaluator-facing routes (next pair, vote) never emit run ids, labels, or
provenance. Session creation and results carry run identities and are
gated behind the admin token.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Header, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from ..errors import IncreportError, InvalidInputError, ReportParseError, SessionError
from ..reports import report_from_dict
from .core import (
    DuplicateVoteError,
    MethodRun,
    ScoringService,
    UnknownEvaluatorError,
    UnknownPairError,
    UnknownSessionError,
)


class RunPayload(BaseModel):
    run_id: str
    label: str
    reports: dict[str, dict]


class CreateSessionPayload(BaseModel):
    runs: list[RunPayload]
    evaluators: list[str]
    seed: int


class VotePayload(BaseModel):
    evaluator: str
    pair_id: str
    choice: str


_STATUS_BY_ERROR = (
    (UnknownSessionError, 404),
    (UnknownPairError, 404),
    (UnknownEvaluatorError, 401),
    (DuplicateVoteError, 409),
    (InvalidInputError, 400),
    (ReportParseError, 400),
    (SessionError, 400),
)


def _as_http(exc: IncreportError) -> HTTPException:
    for error_type, status in _STATUS_BY_ERROR:
        if isinstance(exc, error_type):
            return HTTPException(status_code=status, detail=str(exc))
    return HTTPException(status_code=500, detail=str(exc))


def create_app(
    state_dir: Path, admin_token: str, ui_dir: Optional[Path] = None
) -> FastAPI:
    if not admin_token:
        raise InvalidInputError("admin_token must be non-empty")
    service = ScoringService(state_dir)
    app = FastAPI(title="blind pairwise report scoring")
    app.state.service = service

    def require_admin(authorization: str) -> None:
        if authorization != f"Bearer {admin_token}":
            raise HTTPException(status_code=401, detail="admin token required")

    @app.post("/sessions", status_code=201)
    def create_session(
        payload: CreateSessionPayload, authorization: str = Header(default="")
    ) -> dict:
        require_admin(authorization)
        try:
            runs = tuple(
                MethodRun(
                    run_id=run.run_id,
                    label=run.label,
                    reports={
                        vid: report_from_dict(doc) for vid, doc in run.reports.items()
                    },
                )
                for run in payload.runs
            )
            if len(runs) != 2:
                raise InvalidInputError(
                    f"a session compares exactly 2 runs, got {len(runs)}"
                )
            session = service.create_session(
                runs, tuple(payload.evaluators), payload.seed
            )
        except IncreportError as exc:
            raise _as_http(exc) from exc
        return {
            "session_id": session.session_id,
            "pairs": [
                {"pair_id": p.pair_id, "video_id": p.video_id} for p in session.pairs
            ],
            "excluded_videos": list(session.excluded_videos),
            "evaluators": list(session.roster),
        }

    @app.get("/sessions/{session_id}/next")
    def next_pair(session_id: str, evaluator: str) -> dict:
        try:
            return service.next_pair(session_id, evaluator)
        except IncreportError as exc:
            raise _as_http(exc) from exc

    @app.post("/sessions/{session_id}/votes", status_code=201)
    def submit_vote(session_id: str, payload: VotePayload) -> dict:
        try:
            return service.submit_vote(
                session_id, payload.evaluator, payload.pair_id, payload.choice
            )
        except IncreportError as exc:
            raise _as_http(exc) from exc

    @app.get("/sessions/{session_id}/results")
    def results(session_id: str, authorization: str = Header(default="")) -> dict:
        require_admin(authorization)
        try:
            return service.results(session_id)
        except IncreportError as exc:
            raise _as_http(exc) from exc

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
