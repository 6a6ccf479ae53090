"""Experiment configuration: one INI document defines a whole run.

Sections: ``[run]`` (parallelism, seed, decoding), ``[stage1]``/``[stage2]``/
``[stage3]``/``[ensemble]`` (one endpoint each, plus sampling settings on
stages 1 and 3), optional ``[prompts]`` (template directory). The raw text
is kept so a manifest can embed the exact configuration it ran under.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .ensemble import DEFAULT_ENSEMBLE_MODEL
from .errors import ConfigError
from .gateway import EndpointConfig
from .pipeline import PipelineRunConfig
from .prompts import StagePrompts
from .reports import SamplingConfig

DEFAULT_KS = (2, 6, 11, 12)
DEFAULT_TS = (6, 8, 10)


@dataclass(frozen=True)
class ExperimentConfig:
    stage1_endpoint: EndpointConfig
    stage2_endpoint: EndpointConfig
    stage3_endpoint: EndpointConfig
    ensemble_endpoint: EndpointConfig
    stage1_k: int
    grid: tuple[SamplingConfig, ...]
    stage3_gaze: bool
    prompts_dir: Optional[Path]
    parallel: int
    seed: int
    temperature: float
    max_output_tokens: int
    raw: str
    origin: str

    def pipeline_config(self) -> PipelineRunConfig:
        return PipelineRunConfig(
            stage1_endpoint=self.stage1_endpoint,
            stage2_endpoint=self.stage2_endpoint,
            stage3_endpoint=self.stage3_endpoint,
            prompts=StagePrompts.from_directory(self.prompts_dir),
            stage1_k=self.stage1_k,
            grid=self.grid,
            stage3_gaze=self.stage3_gaze,
            temperature=self.temperature,
            max_output_tokens=self.max_output_tokens,
        )


def load_experiment(path: Path | str) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_experiment(raw, origin=str(path), base_dir=path.parent)


def parse_experiment(
    raw: str, origin: str, base_dir: Optional[Path] = None
) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(raw, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {exc}") from exc

    def endpoint(section: str, default_model: Optional[str] = None) -> EndpointConfig:
        if not parser.has_section(section):
            raise ConfigError(f"{origin}: missing section [{section}]")
        base_url = parser.get(section, "base_url", fallback="").strip()
        if not base_url:
            raise ConfigError(f"{origin}: [{section}] needs base_url")
        model_name = parser.get(section, "model_name", fallback="").strip()
        if not model_name:
            if default_model is None:
                raise ConfigError(f"{origin}: [{section}] needs model_name")
            model_name = default_model
        return EndpointConfig(
            base_url=base_url,
            model_name=model_name,
            api_key_env=parser.get(section, "api_key_env", fallback="").strip(),
        )

    def get_int(section: str, key: str, default: int, minimum: int) -> int:
        text = parser.get(section, key, fallback=str(default))
        try:
            value = int(text)
        except ValueError as exc:
            raise ConfigError(
                f"{origin}: [{section}] {key} must be an integer, got {text!r}"
            ) from exc
        if value < minimum:
            raise ConfigError(
                f"{origin}: [{section}] {key} must be >= {minimum}, got {value}"
            )
        return value

    def get_int_list(section: str, key: str, default: tuple[int, ...]) -> tuple[int, ...]:
        text = parser.get(section, key, fallback=None)
        if text is None:
            return default
        parts = [p.strip() for p in text.split(",") if p.strip()]
        if not parts:
            raise ConfigError(f"{origin}: [{section}] {key} lists no values")
        try:
            return tuple(int(p) for p in parts)
        except ValueError as exc:
            raise ConfigError(
                f"{origin}: [{section}] {key} must be comma-separated integers, "
                f"got {text!r}"
            ) from exc

    stage1 = endpoint("stage1")
    stage2 = endpoint("stage2")
    stage3 = endpoint("stage3")
    ensemble = endpoint("ensemble", default_model=DEFAULT_ENSEMBLE_MODEL)

    ks = get_int_list("stage3", "ks", DEFAULT_KS)
    ts = get_int_list("stage3", "ts", DEFAULT_TS)
    try:
        grid = tuple(SamplingConfig(k=k, t=t) for k in ks for t in ts)
    except ValueError as exc:
        raise ConfigError(f"{origin}: [stage3] invalid grid: {exc}") from exc

    prompts_dir: Optional[Path] = None
    if parser.has_section("prompts"):
        dir_text = parser.get("prompts", "dir", fallback="").strip()
        if dir_text:
            prompts_dir = Path(dir_text)
            if not prompts_dir.is_absolute() and base_dir is not None:
                prompts_dir = base_dir / prompts_dir

    temperature_text = parser.get("run", "temperature", fallback="0")
    try:
        temperature = float(temperature_text)
    except ValueError as exc:
        raise ConfigError(
            f"{origin}: [run] temperature must be a number, "
            f"got {temperature_text!r}"
        ) from exc
    if temperature < 0:
        raise ConfigError(f"{origin}: [run] temperature must be >= 0")

    try:
        stage3_gaze = parser.getboolean("stage3", "gaze", fallback=False)
    except ValueError as exc:
        raise ConfigError(
            f"{origin}: [stage3] gaze must be a boolean"
        ) from exc

    return ExperimentConfig(
        stage1_endpoint=stage1,
        stage2_endpoint=stage2,
        stage3_endpoint=stage3,
        ensemble_endpoint=ensemble,
        stage1_k=get_int("stage1", "frame_interval", default=10, minimum=1),
        grid=grid,
        stage3_gaze=stage3_gaze,
        prompts_dir=prompts_dir,
        parallel=get_int("run", "parallel", default=4, minimum=1),
        seed=get_int("run", "seed", default=0, minimum=0),
        temperature=temperature,
        max_output_tokens=get_int(
            "run", "max_output_tokens", default=2048, minimum=1
        ),
        raw=raw,
        origin=origin,
    )
