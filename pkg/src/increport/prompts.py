"""Prompt templates for the pipeline stages and the ensembler.

Templates are plain-text files with ``{{variable}}`` placeholders. Each
slot declares its variables; construction fails when the declared set and
the placeholders found in the text differ, so a renamed placeholder cannot
silently produce a prompt with a literal ``{{...}}`` left inside.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Optional

from .errors import ConfigError, InvalidInputError

_PLACEHOLDER = re.compile(r"\{\{([a-z0-9_]+)\}\}")

# Slot name -> variables its template must use. Filenames are <slot>.txt.
TEMPLATE_VARIABLES: dict[str, tuple[str, ...]] = {
    "stage1_system": (),
    "stage1_user": ("video_id", "frame_index"),
    "stage2_system": (),
    "stage2_user": ("video_id", "frame_count", "observations"),
    "stage3_system": (),
    "stage3_user": ("video_id", "incident_frame", "frame_indices"),
    "stage3_user_strict": ("video_id", "incident_frame", "frame_indices"),
    "ensemble_system": (),
    "ensemble_user": ("video_id", "candidate_count", "candidates"),
    "ensemble_user_strict": ("video_id", "candidate_count", "candidates"),
}


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    text: str
    variables: tuple[str, ...]

    def __post_init__(self) -> None:
        found = set(_PLACEHOLDER.findall(self.text))
        declared = set(self.variables)
        if found != declared:
            raise ConfigError(
                f"template {self.name!r}: declared variables {sorted(declared)} "
                f"but text placeholders are {sorted(found)}"
            )

    def render(self, **values) -> str:
        supplied = set(values)
        declared = set(self.variables)
        if supplied != declared:
            raise InvalidInputError(
                f"template {self.name!r} takes {sorted(declared)}, "
                f"got {sorted(supplied)}"
            )
        return _PLACEHOLDER.sub(lambda m: str(values[m.group(1)]), self.text)


@dataclass(frozen=True)
class StagePrompts:
    """One template per prompt slot used by the pipeline and ensembler."""

    stage1_system: PromptTemplate
    stage1_user: PromptTemplate
    stage2_system: PromptTemplate
    stage2_user: PromptTemplate
    stage3_system: PromptTemplate
    stage3_user: PromptTemplate
    stage3_user_strict: PromptTemplate
    ensemble_system: PromptTemplate
    ensemble_user: PromptTemplate
    ensemble_user_strict: PromptTemplate

    @classmethod
    def default(cls) -> "StagePrompts":
        return cls.from_directory(None)

    @classmethod
    def from_directory(cls, directory: Optional[Path | str]) -> "StagePrompts":
        """Load templates from ``directory``; without one, use the packaged
        defaults. A configured directory must hold the complete set, so a
        run never silently mixes custom and default prompts."""
        root = Path(directory) if directory is not None else None
        if root is not None and not root.is_dir():
            raise ConfigError(f"prompt directory {root} does not exist")
        slots = {}
        for slot in TEMPLATE_VARIABLES:
            slots[slot] = PromptTemplate(
                name=slot,
                text=_slot_text(slot, root),
                variables=TEMPLATE_VARIABLES[slot],
            )
        return cls(**slots)


def _slot_text(slot: str, root: Optional[Path]) -> str:
    if root is not None:
        override = root / f"{slot}.txt"
        if not override.is_file():
            raise ConfigError(f"prompt file {override} is missing")
        return override.read_text(encoding="utf-8")
    packaged = resources.files("increport") / "prompts" / f"{slot}.txt"
    try:
        return packaged.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError(f"no packaged template for slot {slot!r}") from exc


# The dataclass fields and the declared slots must stay in lockstep.
assert {f.name for f in fields(StagePrompts)} == set(TEMPLATE_VARIABLES)
