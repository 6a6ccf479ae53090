"""Three-stage incident report generation for one dashcam video.

Stage 1 captions sampled reference frames (optionally with a gaze heatmap
stacked under each frame), stage 2 picks the incident frame from the
captions, and stage 3 writes candidate reports from frame windows around
that incident under a grid of sampling settings. Orchestration isolates
per-frame and per-grid-point failures so one bad response cannot sink the
whole video.
"""

from __future__ import annotations

import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .errors import (
    ExtractionError,
    InvalidInputError,
    PipelineError,
    ProviderError,
    StageError,
    TransportError,
)
from .gateway import (
    ChatRequest,
    EndpointConfig,
    Gateway,
    ImagePart,
    RequestTag,
    TextPart,
    extract_structured,
)
from .prompts import StagePrompts
from .reports import (
    DetectionResult,
    DetectionSource,
    EntityCategory,
    EventType,
    FrameObservation,
    HazardCategory,
    HazardNote,
    IncidentReport,
    SamplingConfig,
    validate_report,
)
from .video import (
    ComposedFrame,
    VideoMeta,
    compose_gaze_frame,
    frame_set,
    load_gaze_heatmap,
    sample_reference_frames,
)

logger = logging.getLogger(__name__)

SENTINEL_CAPTION = "[caption unavailable]"

DEFAULT_GRID: tuple[SamplingConfig, ...] = tuple(
    SamplingConfig(k=k, t=t) for k in (2, 6, 11, 12) for t in (6, 8, 10)
)

# Failures a single model call may surface without sinking the stage.
_CALL_FAILURES = (ExtractionError, ProviderError, TransportError)


@dataclass(frozen=True)
class PipelineRunConfig:
    """Endpoints, prompts, and sampling settings for one pipeline run."""

    stage1_endpoint: EndpointConfig
    stage2_endpoint: EndpointConfig
    stage3_endpoint: EndpointConfig
    prompts: StagePrompts = field(default_factory=StagePrompts.default)
    stage1_k: int = 10
    grid: tuple[SamplingConfig, ...] = DEFAULT_GRID
    stage3_gaze: bool = False
    temperature: float = 0.0
    max_output_tokens: int = 2048

    def __post_init__(self) -> None:
        if self.stage1_k < 1:
            raise InvalidInputError(f"stage1_k must be >= 1, got {self.stage1_k}")
        if not self.grid:
            raise InvalidInputError("the stage-3 sampling grid must be non-empty")


@dataclass(frozen=True)
class GridFailure:
    """One stage-3 grid point that produced no report."""

    config: SamplingConfig
    error: str


@dataclass(frozen=True)
class PipelineResult:
    video_id: str
    observations: tuple[FrameObservation, ...]
    detection: DetectionResult
    candidates: tuple[IncidentReport, ...]
    failures: tuple[GridFailure, ...]


def _png_bytes(image: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    Image.fromarray(image).save(buffer, format="PNG")
    return buffer.getvalue()


def _compose_frame(
    video: VideoMeta,
    frame_index: int,
    image: np.ndarray,
    gaze_dir: Optional[Path],
) -> ComposedFrame:
    heatmap = (
        load_gaze_heatmap(gaze_dir, video.video_id, frame_index)
        if gaze_dir is not None
        else None
    )
    if heatmap is not None:
        return compose_gaze_frame(image, heatmap, frame_index)
    return ComposedFrame(frame_index=frame_index, image=image, has_gaze=False)


def stage1_caption_frames(
    video: VideoMeta,
    gateway: Gateway,
    config: PipelineRunConfig,
    gaze_dir: Optional[Path] = None,
) -> tuple[FrameObservation, ...]:
    """Caption every reference frame; failures degrade to a sentinel
    observation instead of aborting the video."""
    indices = sample_reference_frames(video.frame_count, config.stage1_k)
    images = video.extract(indices)
    system_prompt = config.prompts.stage1_system.render()

    def caption_one(position: int) -> FrameObservation:
        frame_index = indices[position]
        composed = _compose_frame(video, frame_index, images[position], gaze_dir)
        request = ChatRequest(
            system_prompt=system_prompt,
            user_parts=(
                TextPart(
                    config.prompts.stage1_user.render(
                        video_id=video.video_id, frame_index=frame_index
                    )
                ),
                ImagePart(_png_bytes(composed.image)),
            ),
            temperature=config.temperature,
            max_output_tokens=config.max_output_tokens,
            tag=RequestTag(stage="stage1", video_id=video.video_id, frame=frame_index),
        )
        try:
            response = gateway.complete(config.stage1_endpoint, request)
            doc = extract_structured(response.text, "stage1")
        except _CALL_FAILURES as exc:
            logger.warning(
                "stage1 %s frame %d: %s; using sentinel caption",
                video.video_id, frame_index, exc,
            )
            return FrameObservation(frame_index=frame_index, caption=SENTINEL_CAPTION)
        hazards = tuple(
            HazardNote(
                category=HazardCategory(h["category"]),
                description=str(h.get("description", "")),
            )
            for h in doc["hazards"]
        )
        return FrameObservation(
            frame_index=frame_index, caption=doc["caption"], hazards=hazards
        )

    with ThreadPoolExecutor(max_workers=min(8, len(indices))) as pool:
        observations = tuple(pool.map(caption_one, range(len(indices))))

    if all(obs.caption == SENTINEL_CAPTION for obs in observations):
        raise StageError(
            f"stage1: all {len(observations)} frame captions failed "
            f"for video {video.video_id!r}"
        )
    return observations


def render_observations(observations: tuple[FrameObservation, ...]) -> str:
    """The stage-2 input document: a numbered list, one line per frame,
    `frame=<idx> | caption=<text> | hazards=<category:description;...>`."""
    lines = []
    for number, obs in enumerate(observations, start=1):
        hazards = ";".join(f"{h.category.value}:{h.description}" for h in obs.hazards)
        lines.append(
            f"{number}. frame={obs.frame_index} | caption={obs.caption} "
            f"| hazards={hazards}"
        )
    return "\n".join(lines)


def _fallback_detection(
    observations: tuple[FrameObservation, ...], reason: str
) -> DetectionResult:
    counts = [len(obs.hazards) for obs in observations]
    if any(counts):
        best = max(range(len(counts)), key=lambda p: (counts[p], -p))
        frame = observations[best].frame_index
        rationale = (
            f"fallback after model failure ({reason}): frame {frame} has the "
            f"most annotated hazards ({counts[best]})"
        )
    else:
        frame = observations[len(observations) // 2].frame_index
        rationale = (
            f"fallback after model failure ({reason}): no hazards annotated, "
            f"using the middle observation frame {frame}"
        )
    return DetectionResult(
        incident_frame=frame, rationale=rationale, source=DetectionSource.FALLBACK
    )


def stage2_detect_incident(
    observations: tuple[FrameObservation, ...],
    frame_count: int,
    video_id: str,
    gateway: Gateway,
    config: PipelineRunConfig,
) -> DetectionResult:
    """Pick the incident frame from the stage-1 captions.

    The result always lies in [0, frame_count): model answers are clamped,
    and parse failures fall back to the hazard-count heuristic.
    """
    if not observations:
        raise InvalidInputError("stage2 needs at least one observation")
    request = ChatRequest(
        system_prompt=config.prompts.stage2_system.render(),
        user_parts=(
            TextPart(
                config.prompts.stage2_user.render(
                    video_id=video_id,
                    frame_count=frame_count,
                    observations=render_observations(observations),
                )
            ),
        ),
        temperature=config.temperature,
        max_output_tokens=config.max_output_tokens,
        tag=RequestTag(stage="stage2", video_id=video_id),
    )
    try:
        response = gateway.complete(config.stage2_endpoint, request)
        doc = extract_structured(response.text, "stage2")
    except TransportError as exc:
        raise StageError(f"stage2: endpoint unreachable for {video_id!r}: {exc}") from exc
    except (ExtractionError, ProviderError) as exc:
        logger.warning("stage2 %s: %s; falling back to hazard counts", video_id, exc)
        return _fallback_detection(observations, type(exc).__name__)

    frame = min(max(int(doc["incident_frame"]), 0), frame_count - 1)
    return DetectionResult(
        incident_frame=frame,
        rationale=str(doc.get("rationale", "")),
        source=DetectionSource.MODEL,
    )


def _report_from_model_doc(
    doc: dict, video_id: str, provenance: str, incident_frame: int
) -> IncidentReport:
    """Build a report from a schema-valid model document, defaulting
    time_to_incident_frames to the detected incident frame and correcting
    the no-incident/severity conflict instead of rejecting."""
    event_type = EventType(doc["event_type"])
    tti = doc.get("time_to_incident_frames")
    if event_type is EventType.NO_INCIDENT:
        tti = None
    elif tti is None:
        tti = incident_frame
    report = IncidentReport(
        video_id=video_id,
        event_type=event_type,
        crash_severity=int(doc["crash_severity"]),
        ego_involved=bool(doc["ego_involved"]),
        entity_counts={
            cat: int(doc["entity_counts"][cat.value]) for cat in EntityCategory
        },
        time_to_incident_frames=tti,
        caption_before=str(doc["caption_before"]),
        caption_after=str(doc["caption_after"]),
        provenance=provenance,
    )
    violations = validate_report(report)
    if violations:
        logger.warning(
            "report %s %s: %d violation(s): %s",
            video_id, provenance, len(violations), "; ".join(violations),
        )
        if report.event_type is EventType.NO_INCIDENT and report.crash_severity != 0:
            report = IncidentReport(
                video_id=report.video_id,
                event_type=report.event_type,
                crash_severity=0,
                ego_involved=report.ego_involved,
                entity_counts=report.entity_counts,
                time_to_incident_frames=None,
                caption_before=report.caption_before,
                caption_after=report.caption_after,
                provenance=report.provenance,
            )
    return report


def stage3_generate_report(
    video: VideoMeta,
    incident_frame: int,
    sampling: SamplingConfig,
    gateway: Gateway,
    config: PipelineRunConfig,
    gaze_dir: Optional[Path] = None,
) -> IncidentReport:
    """Write one candidate report from the frame window around the incident.

    A malformed response earns one stricter re-prompt; a second failure is a
    stage error for this grid point only.
    """
    if not 0 <= incident_frame < video.frame_count:
        raise InvalidInputError(
            f"incident frame {incident_frame} outside video of "
            f"{video.frame_count} frames"
        )
    indices = frame_set(incident_frame, sampling.k, sampling.t, video.frame_count)
    images = video.extract(indices)
    image_parts = []
    for position, frame_index in enumerate(indices):
        image = images[position]
        if config.stage3_gaze and gaze_dir is not None:
            image = _compose_frame(video, frame_index, image, gaze_dir).image
        image_parts.append(ImagePart(_png_bytes(image)))

    provenance = (
        f"({config.stage3_endpoint.model_name},k={sampling.k},t={sampling.t})"
    )
    render_args = dict(
        video_id=video.video_id,
        incident_frame=incident_frame,
        frame_indices=",".join(str(i) for i in indices),
    )
    templates = (config.prompts.stage3_user, config.prompts.stage3_user_strict)
    last_error: Optional[Exception] = None
    for template in templates:
        request = ChatRequest(
            system_prompt=config.prompts.stage3_system.render(),
            user_parts=(TextPart(template.render(**render_args)), *image_parts),
            temperature=config.temperature,
            max_output_tokens=config.max_output_tokens,
            tag=RequestTag(
                stage="stage3", video_id=video.video_id, frame=incident_frame
            ),
        )
        try:
            response = gateway.complete(config.stage3_endpoint, request)
            doc = extract_structured(response.text, "stage3")
        except ExtractionError as exc:
            last_error = exc
            logger.warning(
                "stage3 %s %s: unparseable output%s: %s",
                video.video_id,
                provenance,
                "" if template is templates[0] else " after strict re-prompt",
                exc,
            )
            continue
        except (TransportError, ProviderError) as exc:
            raise StageError(
                f"stage3 {provenance}: model call failed for "
                f"{video.video_id!r}: {exc}"
            ) from exc
        return _report_from_model_doc(
            doc, video.video_id, provenance, incident_frame
        )
    raise StageError(
        f"stage3 {provenance}: no parseable report for {video.video_id!r} "
        f"after a strict re-prompt: {last_error}"
    )


def run_pipeline(
    video: VideoMeta,
    gateway: Gateway,
    config: PipelineRunConfig,
    gaze_dir: Optional[Path] = None,
) -> PipelineResult:
    """Stage 1 once, stage 2 once, stage 3 once per grid point.

    Grid points fail independently; stage-1/stage-2 hard failures abort the
    video. Produces candidates in grid order, so a scripted backend yields
    bit-identical serialized results across runs.
    """
    try:
        observations = stage1_caption_frames(video, gateway, config, gaze_dir)
        detection = stage2_detect_incident(
            observations, video.frame_count, video.video_id, gateway, config
        )
    except StageError as exc:
        raise PipelineError(f"pipeline failed for {video.video_id!r}: {exc}") from exc

    candidates: list[IncidentReport] = []
    failures: list[GridFailure] = []
    for sampling in config.grid:
        try:
            candidates.append(
                stage3_generate_report(
                    video, detection.incident_frame, sampling, gateway, config, gaze_dir
                )
            )
        except StageError as exc:
            failures.append(GridFailure(config=sampling, error=str(exc)))

    if not candidates:
        raise PipelineError(
            f"pipeline produced no candidate for {video.video_id!r}: "
            f"all {len(config.grid)} grid points failed"
        )
    return PipelineResult(
        video_id=video.video_id,
        observations=observations,
        detection=detection,
        candidates=tuple(candidates),
        failures=tuple(failures),
    )
