"""Command-line entry points binding the pipeline, ensembler, metrics,
and the scoring service into reproducible runs.

Exit codes: 0 success, 1 hard failures on individual inputs (listed on
stderr, surviving outputs intact), 2 configuration or usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import socket
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from .abscore.api import create_app
from .abscore.core import MethodRun
from .config import ExperimentConfig, load_experiment, parse_experiment
from .ensemble import EnsembleInput, ensemble
from .errors import ConfigError, IncreportError, ReportParseError
from .gateway import Gateway, HttpBackend, ScriptedBackend
from .metrics.scores import Corpus, CorpusItem, evaluate_corpus, load_spice_sidecar
from .pipeline import run_pipeline
from .reports import EntityCategory, IncidentReport, parse_report, serialize_report
from .video import probe_video

VIDEO_SUFFIXES = {".avi", ".mp4", ".mkv", ".mov"}

SUBMISSION_CSV_COLUMNS = (
    "video_id",
    "event_type",
    "crash_severity",
    "ego_involved",
    "vehicles",
    "pedestrians",
    "cyclists_or_scooters",
    "animals",
    "time_to_incident_frames",
    "caption_before",
    "caption_after",
)


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _fail(message: str, code: int) -> int:
    print(message, file=sys.stderr)
    return code


def _make_backend(scripted_dir: Optional[str]):
    if scripted_dir:
        path = Path(scripted_dir)
        if not path.is_dir():
            raise ConfigError(f"scripted fixture directory {path} does not exist")
        return ScriptedBackend(fixtures_dir=path)
    return HttpBackend()


# ---------------------------------------------------------------- pipeline


def _discover_videos(videos_dir: Path) -> list[Path]:
    if not videos_dir.is_dir():
        raise ConfigError(f"video directory {videos_dir} does not exist")
    found = sorted(
        p for p in videos_dir.iterdir()
        if p.is_file() and p.suffix.lower() in VIDEO_SUFFIXES
    )
    if not found:
        raise ConfigError(f"no video files under {videos_dir}")
    return found


def cmd_pipeline(args: argparse.Namespace) -> int:
    try:
        experiment = load_experiment(args.config)
        pipeline_config = experiment.pipeline_config()
        videos = _discover_videos(Path(args.videos))
        backend = _make_backend(args.scripted)
    except ConfigError as exc:
        return _fail(f"config error: {exc}", 2)

    parallel = args.parallel if args.parallel else experiment.parallel
    gaze_dir = Path(args.gaze_dir) if args.gaze_dir else None
    gateway = Gateway(backend, max_parallel=parallel)

    out_dir = Path(args.out)
    candidates_dir = out_dir / "candidates"
    candidates_dir.mkdir(parents=True, exist_ok=True)

    def run_one(path: Path):
        started = time.perf_counter()
        video = probe_video(path, video_id=path.stem)
        result = run_pipeline(video, gateway, pipeline_config, gaze_dir)
        return video, result, time.perf_counter() - started

    entries = []
    hard_failures = []
    with ThreadPoolExecutor(max_workers=parallel) as pool:
        futures = [(path, pool.submit(run_one, path)) for path in videos]
        for path, future in futures:
            try:
                video, result, elapsed = future.result()
            except IncreportError as exc:
                hard_failures.append({"video_id": path.stem, "error": str(exc)})
                continue
            candidates_path = candidates_dir / f"{video.video_id}.jsonl"
            candidates_path.write_text(
                "".join(serialize_report(c) + "\n" for c in result.candidates),
                encoding="utf-8",
            )
            entries.append(
                {
                    "video_id": video.video_id,
                    "path": str(path.resolve()),
                    "frame_count": video.frame_count,
                    "candidates_path": str(
                        candidates_path.relative_to(out_dir)
                    ),
                    "candidate_count": len(result.candidates),
                    "provenances": [c.provenance for c in result.candidates],
                    "incident_frame": result.detection.incident_frame,
                    "detection_source": result.detection.source.value,
                    "grid_failures": [
                        {"k": f.config.k, "t": f.config.t, "error": f.error}
                        for f in result.failures
                    ],
                    "duration_s": round(elapsed, 3),
                }
            )

    manifest = {
        "command": "pipeline",
        "created_utc": _utc_now(),
        "config": {"path": str(Path(args.config).resolve()), "raw": experiment.raw},
        "videos_dir": str(Path(args.videos).resolve()),
        "scripted_dir": str(Path(args.scripted).resolve()) if args.scripted else None,
        "gaze_dir": str(gaze_dir.resolve()) if gaze_dir else None,
        "parallel": parallel,
        "videos": sorted(entries, key=lambda e: e["video_id"]),
        "hard_failures": sorted(hard_failures, key=lambda e: e["video_id"]),
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    for entry in manifest["videos"]:
        print(
            f"{entry['video_id']}: {entry['candidate_count']} candidates, "
            f"{len(entry['grid_failures'])} grid failures"
        )
    if hard_failures:
        listing = ", ".join(f["video_id"] for f in manifest["hard_failures"])
        return _fail(f"pipeline failed for: {listing}", 1)
    return 0


# ---------------------------------------------------------------- ensemble


def _load_candidates(path: Path) -> list[IncidentReport]:
    candidates = []
    with path.open(encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                candidates.append(parse_report(line))
    return candidates


def cmd_ensemble(args: argparse.Namespace) -> int:
    manifest_path = Path(args.manifest)
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        return _fail(f"cannot read manifest {manifest_path}: {exc}", 2)

    videos = manifest.get("videos", [])
    if not videos:
        return _fail(f"manifest {manifest_path} lists no videos", 2)

    try:
        experiment = parse_experiment(
            manifest["config"]["raw"],
            origin=manifest["config"].get("path", str(manifest_path)),
        )
        scripted = args.scripted or manifest.get("scripted_dir")
        backend = _make_backend(scripted)
        prompts = experiment.pipeline_config().prompts
    except (KeyError, ConfigError) as exc:
        return _fail(f"config error: {exc}", 2)

    gateway = Gateway(backend, max_parallel=experiment.parallel)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    finals = []
    failures = []
    for entry in sorted(videos, key=lambda e: e["video_id"]):
        video_id = entry["video_id"]
        candidates_path = manifest_path.parent / entry["candidates_path"]
        try:
            candidates = _load_candidates(candidates_path)
            if not candidates:
                raise ConfigError(f"{candidates_path} holds no candidates")
            job = EnsembleInput(
                video_id=video_id,
                candidates=tuple(candidates),
                endpoint=experiment.ensemble_endpoint,
            )
            finals.append(ensemble(job, gateway, prompts))
        except (OSError, IncreportError) as exc:
            failures.append({"video_id": video_id, "error": str(exc)})

    finals.sort(key=lambda r: r.video_id)
    (out_dir / "submission.jsonl").write_text(
        "".join(serialize_report(r) + "\n" for r in finals), encoding="utf-8"
    )
    with (out_dir / "submission.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUBMISSION_CSV_COLUMNS)
        for report in finals:
            tti = report.time_to_incident_frames
            writer.writerow(
                [
                    report.video_id,
                    report.event_type.value,
                    report.crash_severity,
                    str(report.ego_involved).lower(),
                    report.entity_counts.get(EntityCategory.VEHICLE, 0),
                    report.entity_counts.get(EntityCategory.PEDESTRIAN, 0),
                    report.entity_counts.get(EntityCategory.CYCLIST_OR_SCOOTER, 0),
                    report.entity_counts.get(EntityCategory.ANIMAL, 0),
                    "" if tti is None else tti,
                    report.caption_before,
                    report.caption_after,
                ]
            )

    print(f"wrote {len(finals)} final reports to {out_dir}")
    if failures:
        listing = ", ".join(f["video_id"] for f in failures)
        return _fail(f"ensembling failed for: {listing}", 1)
    return 0


# ---------------------------------------------------------------- evaluate


def _load_submission(path: Path) -> dict[str, IncidentReport]:
    reports: dict[str, IncidentReport] = {}
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                report = parse_report(line)
            except ReportParseError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
            if report.video_id in reports:
                raise ConfigError(
                    f"{path}:{lineno}: duplicate video_id {report.video_id!r}"
                )
            reports[report.video_id] = report
    if not reports:
        raise ConfigError(f"submission {path} is empty")
    return reports


def _load_reference_pairs(path: Path) -> dict[str, list[dict]]:
    pairs: dict[str, list[dict]] = {}
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{lineno}: bad JSON: {exc}") from exc
            try:
                video_id = doc["video_id"]
                references = doc["references"]
            except (TypeError, KeyError) as exc:
                raise ConfigError(
                    f"{path}:{lineno}: needs video_id and references"
                ) from exc
            if not isinstance(references, list) or not references:
                raise ConfigError(f"{path}:{lineno}: references must be non-empty")
            for ref in references:
                if not isinstance(ref, dict) or "before" not in ref or "after" not in ref:
                    raise ConfigError(
                        f"{path}:{lineno}: each reference needs before and after"
                    )
            if video_id in pairs:
                raise ConfigError(f"{path}:{lineno}: duplicate video_id {video_id!r}")
            pairs[video_id] = references
    if not pairs:
        raise ConfigError(f"reference file {path} is empty")
    return pairs


def _format_score(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def cmd_evaluate(args: argparse.Namespace) -> int:
    try:
        submission = _load_submission(Path(args.submission))
        references = _load_reference_pairs(Path(args.references))
        sidecar = (
            load_spice_sidecar(Path(args.spice)) if args.spice else ({}, {})
        )
    except (OSError, IncreportError) as exc:
        return _fail(f"config error: {exc}", 2)

    missing_refs = sorted(set(submission) - set(references))
    missing_subs = sorted(set(references) - set(submission))
    if missing_refs or missing_subs:
        if missing_refs:
            print(f"no references for: {', '.join(missing_refs)}", file=sys.stderr)
        if missing_subs:
            print(f"no submission for: {', '.join(missing_subs)}", file=sys.stderr)
        return 1

    def corpus_of(pick_candidate, pick_reference) -> Corpus:
        return Corpus(
            items=tuple(
                CorpusItem(
                    item_id=video_id,
                    candidate=pick_candidate(submission[video_id]),
                    references=tuple(
                        pick_reference(ref) for ref in references[video_id]
                    ),
                )
                for video_id in sorted(submission)
            )
        )

    before = corpus_of(lambda r: r.caption_before, lambda ref: ref["before"])
    after = corpus_of(lambda r: r.caption_after, lambda ref: ref["after"])
    combined = corpus_of(
        lambda r: f"{r.caption_before} {r.caption_after}",
        lambda ref: f"{ref['before']} {ref['after']}",
    )

    spice_per_item, corpus_overrides = sidecar
    results = {
        "before": evaluate_corpus(before),
        "after": evaluate_corpus(after),
        "combined": evaluate_corpus(
            combined,
            spice_per_item=spice_per_item or None,
            corpus_overrides=corpus_overrides or None,
        ),
    }

    print(f"{'corpus':<10} {'cider_d':>8} {'meteor':>8} {'spice':>8} {'final':>8}")
    for name, report in results.items():
        scores = report.corpus_scores
        print(
            f"{name:<10}"
            f" {_format_score(scores.get('cider_d')):>8}"
            f" {_format_score(scores.get('meteor')):>8}"
            f" {_format_score(scores.get('spice')):>8}"
            f" {_format_score(report.final):>8}"
        )
    print(f"final_score: {_format_score(results['combined'].final)}")

    if args.out:
        payload = {name: report.to_dict() for name, report in results.items()}
        Path(args.out).write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return 0


# ---------------------------------------------------------------- serve


def _load_run(path: Path) -> MethodRun:
    reports: dict[str, IncidentReport] = {}
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                report = parse_report(line)
            except ReportParseError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
            reports[report.video_id] = report
    if not reports:
        raise ConfigError(f"run file {path} holds no reports")
    return MethodRun(run_id=path.stem, label=path.stem, reports=reports)


def _load_roster(path: Path) -> tuple[str, ...]:
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read roster {path}: {exc}") from exc
    roster = tuple(line.strip() for line in lines if line.strip())
    if not roster:
        raise ConfigError(f"roster {path} lists no evaluators")
    return roster


def build_scoring_app(args: argparse.Namespace):
    """Create the scoring app and its session; shared by cmd_serve and
    tests, which drive the returned app without a socket."""
    runs = tuple(_load_run(Path(p)) for p in args.runs)
    roster = _load_roster(Path(args.roster))
    ui_dir = Path(args.ui_dir) if args.ui_dir else None
    if ui_dir is not None and not ui_dir.is_dir():
        raise ConfigError(f"ui directory {ui_dir} does not exist")
    app = create_app(Path(args.store), args.admin_token, ui_dir=ui_dir)
    session = app.state.service.create_session(runs, roster, args.seed)
    return app, session


def cmd_serve(args: argparse.Namespace) -> int:
    if not args.admin_token:
        return _fail(
            "config error: an admin token is required (--admin-token)", 2
        )
    try:
        app, session = build_scoring_app(args)
    except IncreportError as exc:
        return _fail(f"config error: {exc}", 2)

    if session.excluded_videos:
        print(
            f"warning: excluded videos missing from one run: "
            f"{', '.join(session.excluded_videos)}",
            file=sys.stderr,
            flush=True,
        )
    # flush before uvicorn takes over so piped logs show the session id
    print(f"session {session.session_id}: {len(session.pairs)} pairs", flush=True)

    try:
        probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((args.host, args.port))
        probe.close()
    except OSError as exc:
        return _fail(f"cannot bind {args.host}:{args.port}: {exc}", 2)

    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="increport",
        description="Generate, ensemble, score, and compare incident reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pipeline = sub.add_parser(
        "pipeline", help="run the three-stage pipeline over a video directory"
    )
    pipeline.add_argument("--videos", required=True, help="directory of input videos")
    pipeline.add_argument("--config", required=True, help="experiment config file")
    pipeline.add_argument("--out", required=True, help="output directory")
    pipeline.add_argument("--scripted", help="scripted backend fixture directory")
    pipeline.add_argument("--gaze-dir", help="directory of gaze heatmaps")
    pipeline.add_argument(
        "--parallel", type=int, help="video-level parallelism (overrides config)"
    )
    pipeline.set_defaults(func=cmd_pipeline)

    ens = sub.add_parser(
        "ensemble", help="consolidate pipeline candidates into a submission"
    )
    ens.add_argument("--manifest", required=True, help="pipeline manifest path")
    ens.add_argument("--out", required=True, help="output directory")
    ens.add_argument("--scripted", help="scripted backend fixture directory")
    ens.set_defaults(func=cmd_ensemble)

    evaluate = sub.add_parser(
        "evaluate", help="score a submission against reference captions"
    )
    evaluate.add_argument("--submission", required=True, help="submission JSONL")
    evaluate.add_argument("--references", required=True, help="reference JSONL")
    evaluate.add_argument("--spice", help="external metric sidecar JSON")
    evaluate.add_argument("--out", help="write the metric report JSON here")
    evaluate.set_defaults(func=cmd_evaluate)

    serve = sub.add_parser("serve", help="serve the blind scoring API and UI")
    serve.add_argument("--store", required=True, help="state directory")
    serve.add_argument(
        "--runs", required=True, nargs=2, metavar="RUN_JSONL",
        help="two submission files to compare",
    )
    serve.add_argument("--roster", required=True, help="evaluator roster file")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--seed", type=int, default=0)
    serve.add_argument("--admin-token", default="", help="results/creation token")
    serve.add_argument("--ui-dir", help="static UI bundle directory")
    serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
