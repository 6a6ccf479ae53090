"""Domain types for incident reports and their JSON document form.

Reports are immutable value objects. Validation never raises: it returns a
list of human-readable violations so callers can decide whether to reject,
auto-correct, or log. Text fields are stored verbatim; any normalization
happens downstream in the metrics tokenizer.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Mapping, Optional

from .errors import ReportParseError

logger = logging.getLogger(__name__)

# Severity is an ordinal 0..SEVERITY_LEVELS-1, 0 meaning "no danger".
SEVERITY_LEVELS = 5


class EventType(str, Enum):
    HAZARD = "hazard"
    ACCIDENT = "accident"
    NO_INCIDENT = "no_incident"


class EntityCategory(str, Enum):
    """Counted participant categories. Values are the JSON field names."""

    VEHICLE = "vehicles"
    PEDESTRIAN = "pedestrians"
    CYCLIST_OR_SCOOTER = "cyclists_or_scooters"
    ANIMAL = "animals"


class HazardCategory(str, Enum):
    """Categories for per-frame hazard metadata (stage-1 output)."""

    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    CYCLIST_OR_SCOOTER = "cyclist_or_scooter"
    ANIMAL = "animal"
    DEBRIS_OR_OTHER = "debris_or_other"


class DetectionSource(str, Enum):
    MODEL = "model"
    FALLBACK = "fallback"


@dataclass(frozen=True)
class HazardNote:
    category: HazardCategory
    description: str


@dataclass(frozen=True)
class FrameObservation:
    """One reference frame's caption plus hazard metadata."""

    frame_index: int
    caption: str
    hazards: tuple[HazardNote, ...] = ()


@dataclass(frozen=True)
class SamplingConfig:
    """Frame interval ``k`` and start/end offset ``t`` (in multiples of k)."""

    k: int
    t: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.t < 0:
            raise ValueError(f"t must be >= 0, got {self.t}")


@dataclass(frozen=True)
class DetectionResult:
    """Stage-2 output: the incident frame and how it was obtained."""

    incident_frame: int
    rationale: str
    source: DetectionSource


@dataclass(frozen=True)
class IncidentReport:
    """Structured incident report for one video.

    ``provenance`` tags the generating configuration; it is carried through
    serialization but must never reach blind evaluators.
    """

    video_id: str
    event_type: EventType
    crash_severity: int
    ego_involved: bool
    entity_counts: Mapping[EntityCategory, int]
    caption_before: str
    caption_after: str
    time_to_incident_frames: Optional[int] = None
    provenance: str = ""

    def with_provenance(self, provenance: str) -> "IncidentReport":
        return replace(self, provenance=provenance)


def validate_report(report: IncidentReport) -> list[str]:
    """Check all report invariants; return one message per violation.

    Total: never raises for arbitrary field values, the caller gets data
    instead of an exception.
    """
    violations: list[str] = []

    if not isinstance(report.crash_severity, int) or not (
        0 <= report.crash_severity < SEVERITY_LEVELS
    ):
        violations.append(
            f"crash_severity: must be an integer in 0..{SEVERITY_LEVELS - 1}, "
            f"got {report.crash_severity!r}"
        )

    counts = report.entity_counts
    expected = set(EntityCategory)
    present = set(counts.keys()) if isinstance(counts, Mapping) else set()
    if present != expected:
        missing = sorted(c.value for c in expected - present)
        extra = sorted(str(c) for c in present - expected)
        detail = []
        if missing:
            detail.append(f"missing {missing}")
        if extra:
            detail.append(f"unexpected {extra}")
        violations.append(f"entity_counts: must have exactly the four categories ({'; '.join(detail)})")
    if isinstance(counts, Mapping):
        for cat, value in counts.items():
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                violations.append(f"entity_counts[{getattr(cat, 'value', cat)}]: must be a non-negative integer, got {value!r}")

    tti = report.time_to_incident_frames
    if tti is not None and (not isinstance(tti, int) or isinstance(tti, bool) or tti < 0):
        violations.append(f"time_to_incident_frames: must be a non-negative integer or absent, got {tti!r}")

    if report.event_type == EventType.NO_INCIDENT:
        if tti is not None:
            violations.append("time_to_incident_frames: must be absent when event_type is no_incident")
        if report.crash_severity != 0:
            violations.append("crash_severity: must be 0 when event_type is no_incident")
    else:
        if not report.caption_before.strip():
            violations.append("caption_before: must be non-empty for hazard/accident reports")
        if not report.caption_after.strip():
            violations.append("caption_after: must be non-empty for hazard/accident reports")

    return violations


# JSON field names, in canonical serialization order.
_FIELDS = (
    "video_id",
    "event_type",
    "crash_severity",
    "ego_involved",
    "entity_counts",
    "time_to_incident_frames",
    "caption_before",
    "caption_after",
    "provenance",
)


def report_to_dict(report: IncidentReport) -> dict[str, Any]:
    """The documented JSON document shape for a report."""
    return {
        "video_id": report.video_id,
        "event_type": report.event_type.value,
        "crash_severity": report.crash_severity,
        "ego_involved": report.ego_involved,
        "entity_counts": {cat.value: report.entity_counts.get(cat, 0) for cat in EntityCategory},
        "time_to_incident_frames": report.time_to_incident_frames,
        "caption_before": report.caption_before,
        "caption_after": report.caption_after,
        "provenance": report.provenance,
    }


def serialize_report(report: IncidentReport) -> str:
    """Canonical single-line JSON document for ``report``.

    Key order and separators are fixed so identical reports serialize to
    identical bytes.
    """
    return json.dumps(report_to_dict(report), sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def report_from_dict(doc: Mapping[str, Any]) -> IncidentReport:
    """Build a report from a parsed JSON document.

    Unknown fields are ignored with a warning so fixture files may carry
    annotation extras. Malformed fields raise :class:`ReportParseError`
    naming the first offending field.
    """
    if not isinstance(doc, Mapping):
        raise ReportParseError(f"document: expected a JSON object, got {type(doc).__name__}")

    unknown = sorted(set(doc.keys()) - set(_FIELDS))
    if unknown:
        logger.warning("ignoring unknown report fields: %s", ", ".join(unknown))

    def need(name: str) -> Any:
        if name not in doc:
            raise ReportParseError(f"{name}: required field is missing")
        return doc[name]

    video_id = need("video_id")
    if not isinstance(video_id, str) or not video_id:
        raise ReportParseError(f"video_id: must be a non-empty string, got {video_id!r}")

    raw_event = need("event_type")
    try:
        event_type = EventType(raw_event)
    except ValueError:
        allowed = ", ".join(e.value for e in EventType)
        raise ReportParseError(f"event_type: {raw_event!r} is not one of {allowed}") from None

    severity = need("crash_severity")
    if not isinstance(severity, int) or isinstance(severity, bool) or not (0 <= severity < SEVERITY_LEVELS):
        raise ReportParseError(f"crash_severity: must be an integer in 0..{SEVERITY_LEVELS - 1}, got {severity!r}")

    ego = need("ego_involved")
    if not isinstance(ego, bool):
        raise ReportParseError(f"ego_involved: must be a boolean, got {ego!r}")

    raw_counts = need("entity_counts")
    if not isinstance(raw_counts, Mapping):
        raise ReportParseError(f"entity_counts: must be an object, got {raw_counts!r}")
    counts: dict[EntityCategory, int] = {}
    for cat in EntityCategory:
        if cat.value not in raw_counts:
            raise ReportParseError(f"entity_counts: missing key {cat.value!r}")
        value = raw_counts[cat.value]
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            raise ReportParseError(f"entity_counts.{cat.value}: must be a non-negative integer, got {value!r}")
        counts[cat] = value
    unknown_counts = sorted(set(raw_counts) - {cat.value for cat in EntityCategory})
    if unknown_counts:
        logger.warning("ignoring unknown entity_counts keys: %s", ", ".join(unknown_counts))

    tti = doc.get("time_to_incident_frames")
    if tti is not None and (not isinstance(tti, int) or isinstance(tti, bool) or tti < 0):
        raise ReportParseError(f"time_to_incident_frames: must be a non-negative integer or null, got {tti!r}")

    before = need("caption_before")
    after = need("caption_after")
    if not isinstance(before, str):
        raise ReportParseError(f"caption_before: must be a string, got {before!r}")
    if not isinstance(after, str):
        raise ReportParseError(f"caption_after: must be a string, got {after!r}")

    provenance = need("provenance")
    if not isinstance(provenance, str):
        raise ReportParseError(f"provenance: must be a string, got {provenance!r}")

    return IncidentReport(
        video_id=video_id,
        event_type=event_type,
        crash_severity=severity,
        ego_involved=ego,
        entity_counts=counts,
        time_to_incident_frames=tti,
        caption_before=before,
        caption_after=after,
        provenance=provenance,
    )


def parse_report(document: str) -> IncidentReport:
    """Parse one canonical JSON document (as produced by serialize_report).

    Round-trips: ``parse_report(serialize_report(r)) == r`` for all valid r.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ReportParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return report_from_dict(doc)
