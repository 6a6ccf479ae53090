"""Consolidates candidate reports for one video into a final report.

A text-only model rewrites the candidates into one coherent report. The
model is trusted for prose but not for classifications: when a strict
majority of candidates agrees on a categorical field, that value wins over
the model's answer, and entity counts can never exceed the per-category
maximum any candidate claims. Both rules together make the operation a
no-op on unanimous candidate sets, whatever the model says.
"""

from __future__ import annotations

import logging
import statistics
from collections import Counter
from dataclasses import dataclass, replace
from typing import Optional

from .errors import ExtractionError, InvalidInputError, ProviderError, StageError, TransportError
from .gateway import (
    ChatRequest,
    EndpointConfig,
    Gateway,
    RequestTag,
    TextPart,
    extract_structured,
)
from .prompts import StagePrompts
from .reports import (
    EntityCategory,
    EventType,
    IncidentReport,
    serialize_report,
    validate_report,
)

logger = logging.getLogger(__name__)

DEFAULT_ENSEMBLE_MODEL = "Qwen3-Next-80B-A3B-Instruct"


def default_ensemble_endpoint(base_url: str, api_key_env: str = "") -> EndpointConfig:
    return EndpointConfig(
        base_url=base_url, model_name=DEFAULT_ENSEMBLE_MODEL, api_key_env=api_key_env
    )


@dataclass(frozen=True)
class EnsembleInput:
    video_id: str
    candidates: tuple[IncidentReport, ...]
    endpoint: EndpointConfig

    def __post_init__(self) -> None:
        if not self.candidates:
            raise InvalidInputError("ensembling needs at least one candidate")
        strays = sorted(
            {c.video_id for c in self.candidates if c.video_id != self.video_id}
        )
        if strays:
            raise InvalidInputError(
                f"candidates for video {self.video_id!r} include video ids {strays}"
            )


def _strict_majority(values) -> Optional[object]:
    counts = Counter(values)
    value, count = counts.most_common(1)[0]
    if count * 2 > sum(counts.values()):
        return value
    return None


def _unanimous(values) -> tuple[bool, object]:
    first, *rest = list(values)
    return (all(v == first for v in rest), first)


def _apply_candidate_consensus(
    report: IncidentReport, candidates: tuple[IncidentReport, ...], video_id: str
) -> IncidentReport:
    """Majority/unanimity overrides plus the entity-count clamp."""

    def override(field_name: str, value) -> None:
        nonlocal report
        current = getattr(report, field_name)
        if current != value:
            logger.warning(
                "ensemble %s: overriding %s=%r with candidate consensus %r",
                video_id, field_name, current, value,
            )
            report = replace(report, **{field_name: value})

    majority_event = _strict_majority(c.event_type for c in candidates)
    if majority_event is not None:
        override("event_type", majority_event)
    majority_ego = _strict_majority(c.ego_involved for c in candidates)
    if majority_ego is not None:
        override("ego_involved", majority_ego)

    severity_agreed, severity = _unanimous(c.crash_severity for c in candidates)
    if severity_agreed:
        override("crash_severity", severity)
    tti_agreed, tti = _unanimous(c.time_to_incident_frames for c in candidates)
    if tti_agreed:
        override("time_to_incident_frames", tti)

    counts = dict(report.entity_counts)
    changed = False
    for category in EntityCategory:
        candidate_values = [c.entity_counts.get(category, 0) for c in candidates]
        ceiling = max(candidate_values)
        agreed, shared = _unanimous(candidate_values)
        value = counts.get(category, 0)
        target = shared if agreed else min(value, ceiling)
        if value != target:
            logger.warning(
                "ensemble %s: entity_counts[%s]=%d adjusted to %d "
                "(candidate maximum %d)",
                video_id, category.value, value, target, ceiling,
            )
            counts[category] = target
            changed = True
    if changed:
        report = replace(report, entity_counts=counts)

    if report.event_type is EventType.NO_INCIDENT:
        fixes = {}
        if report.crash_severity != 0:
            fixes["crash_severity"] = 0
        if report.time_to_incident_frames is not None:
            fixes["time_to_incident_frames"] = None
        if fixes:
            logger.warning(
                "ensemble %s: no-incident consistency fixes: %s",
                video_id, sorted(fixes),
            )
            report = replace(report, **fixes)
    return report


def _fallback_candidate(candidates: tuple[IncidentReport, ...]) -> IncidentReport:
    """The candidate best matching the set's majority event type and median
    severity; provenance order breaks ties."""
    ordered = sorted(candidates, key=lambda c: c.provenance)
    event_counts = Counter(c.event_type for c in ordered)
    top = max(event_counts.values())
    majority_event = next(
        c.event_type for c in ordered if event_counts[c.event_type] == top
    )
    median_severity = statistics.median_low(sorted(c.crash_severity for c in ordered))

    def badness(candidate: IncidentReport) -> tuple[int, int]:
        return (
            candidate.event_type != majority_event,
            candidate.crash_severity != median_severity,
        )

    return min(ordered, key=badness)


def ensemble(
    job: EnsembleInput,
    gateway: Gateway,
    prompts: Optional[StagePrompts] = None,
    temperature: float = 0.0,
    max_output_tokens: int = 2048,
) -> IncidentReport:
    """Rewrite the candidates into one final report.

    A single candidate is returned unchanged without a model call. A
    malformed model response earns one stricter re-prompt; a second
    failure falls back to the best-matching candidate.
    """
    if len(job.candidates) == 1:
        return job.candidates[0]

    prompts = prompts or StagePrompts.default()
    ordered = sorted(job.candidates, key=lambda c: c.provenance)
    render_args = dict(
        video_id=job.video_id,
        candidate_count=len(ordered),
        candidates="\n".join(serialize_report(c) for c in ordered),
    )

    doc: Optional[dict] = None
    for template in (prompts.ensemble_user, prompts.ensemble_user_strict):
        request = ChatRequest(
            system_prompt=prompts.ensemble_system.render(),
            user_parts=(TextPart(template.render(**render_args)),),
            temperature=temperature,
            max_output_tokens=max_output_tokens,
            tag=RequestTag(stage="ensemble", video_id=job.video_id),
        )
        try:
            response = gateway.complete(job.endpoint, request)
            doc = extract_structured(response.text, "ensemble")
            break
        except (ExtractionError, ProviderError) as exc:
            logger.warning(
                "ensemble %s: unusable model output%s: %s",
                job.video_id,
                "" if template is prompts.ensemble_user else " after strict re-prompt",
                exc,
            )
        except TransportError as exc:
            raise StageError(
                f"ensemble: endpoint unreachable for {job.video_id!r}: {exc}"
            ) from exc

    if doc is None:
        fallback = _fallback_candidate(job.candidates)
        logger.warning(
            "ensemble %s: falling back to candidate %s",
            job.video_id, fallback.provenance,
        )
        return fallback

    tti = doc.get("time_to_incident_frames")
    report = IncidentReport(
        video_id=job.video_id,
        event_type=EventType(doc["event_type"]),
        crash_severity=int(doc["crash_severity"]),
        ego_involved=bool(doc["ego_involved"]),
        entity_counts={
            cat: int(doc["entity_counts"][cat.value]) for cat in EntityCategory
        },
        time_to_incident_frames=None if tti is None else int(tti),
        caption_before=str(doc["caption_before"]),
        caption_after=str(doc["caption_after"]),
        provenance=f"ensemble({len(job.candidates)} candidates)",
    )
    report = _apply_candidate_consensus(report, job.candidates, job.video_id)

    violations = validate_report(report)
    if violations:
        logger.warning(
            "ensemble %s: final report violations: %s",
            job.video_id, "; ".join(violations),
        )
    return report
