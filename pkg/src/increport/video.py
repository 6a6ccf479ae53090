"""Video ingestion: probing, reference-frame sampling, frame extraction,
and gaze-heatmap composition.

Decoding is delegated to an external decoder invoked as a subprocess.
``FfmpegDecoder`` shells out to ffmpeg/ffprobe when those binaries exist;
otherwise ``WorkerDecoder`` runs the bundled OpenCV worker
(:mod:`increport._decode_worker`) in a child interpreter. Frames cross the
process boundary as raw RGB24 bytes, so the parent process stays free of
codec dependencies.
"""

from __future__ import annotations

import json
import logging
import shutil
import subprocess
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np
from PIL import Image

from .errors import DecodeError, InvalidInputError

logger = logging.getLogger(__name__)

_SUBPROCESS_TIMEOUT = 120.0


def sample_reference_frames(frame_count: int, k: int) -> list[int]:
    """Indices of the last frame of each k-frame segment.

    The final segment may be short; its reference frame is the last frame
    of the video. ``frame_count == k`` yields exactly ``[k - 1]``.
    """
    if k < 1:
        raise InvalidInputError(f"segment length k must be >= 1, got {k}")
    if frame_count < 1:
        raise InvalidInputError(f"frame_count must be >= 1, got {frame_count}")
    segments = -(-frame_count // k)
    return [min(s * k + k - 1, frame_count - 1) for s in range(segments)]


def frame_set(i: int, k: int, t: int, frame_count: int) -> list[int]:
    """Sorted distinct frame indices {i + m*k : -t <= m <= t}, clamped to
    [0, frame_count - 1]. Always contains i; size is at most 2t + 1 and
    shrinks only through boundary clamping."""
    if k < 1:
        raise InvalidInputError(f"stride k must be >= 1, got {k}")
    if t < 0:
        raise InvalidInputError(f"radius t must be >= 0, got {t}")
    if frame_count < 1:
        raise InvalidInputError(f"frame_count must be >= 1, got {frame_count}")
    if not 0 <= i < frame_count:
        raise InvalidInputError(
            f"anchor frame {i} outside valid range [0, {frame_count - 1}]"
        )
    hi = frame_count - 1
    return sorted({min(max(i + m * k, 0), hi) for m in range(-t, t + 1)})


@dataclass(frozen=True)
class ComposedFrame:
    """A model-ready image: the camera frame, optionally with the gaze
    heatmap stacked underneath (doubling the height)."""

    frame_index: int
    image: np.ndarray
    has_gaze: bool

    def __post_init__(self) -> None:
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise InvalidInputError(
                f"composed image must be HxWx3, got shape {self.image.shape}"
            )


def compose_gaze_frame(
    frame: np.ndarray,
    heatmap: Optional[np.ndarray],
    frame_index: int,
) -> ComposedFrame:
    """Stack ``heatmap`` below ``frame`` vertically.

    The heatmap is resampled (bilinear) to the frame's width and height
    first, and grayscale maps are replicated to three channels, so the
    output is exactly twice the frame height. A missing heatmap leaves the
    frame unchanged.
    """
    if frame.ndim != 3 or frame.shape[2] != 3 or frame.size == 0:
        raise InvalidInputError(
            f"frame must be a non-empty HxWx3 array, got shape {frame.shape}"
        )
    if frame.dtype != np.uint8:
        raise InvalidInputError(f"frame must be uint8, got {frame.dtype}")
    if heatmap is None:
        return ComposedFrame(frame_index=frame_index, image=frame, has_gaze=False)

    if heatmap.ndim == 3 and heatmap.shape[2] == 1:
        heatmap = heatmap[:, :, 0]
    if heatmap.ndim not in (2, 3) or (heatmap.ndim == 3 and heatmap.shape[2] != 3):
        raise InvalidInputError(
            f"heatmap must be HxW or HxWx3, got shape {heatmap.shape}"
        )
    if heatmap.size == 0:
        raise InvalidInputError("heatmap has a zero dimension")
    if heatmap.dtype != np.uint8:
        raise InvalidInputError(f"heatmap must be uint8, got {heatmap.dtype}")

    h, w = frame.shape[:2]
    if heatmap.shape[:2] != (h, w):
        # PIL sizes are (width, height)
        resized = Image.fromarray(heatmap).resize((w, h), Image.BILINEAR)
        heatmap = np.asarray(resized)
    if heatmap.ndim == 2:
        heatmap = np.stack([heatmap, heatmap, heatmap], axis=2)
    return ComposedFrame(
        frame_index=frame_index,
        image=np.ascontiguousarray(np.vstack([frame, heatmap])),
        has_gaze=True,
    )


def load_gaze_heatmap(
    gaze_dir: Optional[Path], video_id: str, frame_index: int
) -> Optional[np.ndarray]:
    """Load ``<gaze_dir>/<video_id>/<frame_index>.png`` if it exists.

    Returns a 2-D array for grayscale images, HxWx3 otherwise, or None
    when the directory or file is absent.
    """
    if gaze_dir is None:
        return None
    path = Path(gaze_dir) / video_id / f"{frame_index}.png"
    if not path.is_file():
        return None
    with Image.open(path) as img:
        if img.mode in ("L", "I", "I;16", "1"):
            return np.asarray(img.convert("L"))
        return np.asarray(img.convert("RGB"))


class Decoder(Protocol):
    def probe(self, path: Path) -> dict: ...

    def extract(self, path: Path, indices: Sequence[int]) -> list[np.ndarray]: ...


def _run(cmd: list[str], what: str) -> subprocess.CompletedProcess:
    try:
        return subprocess.run(
            cmd, capture_output=True, timeout=_SUBPROCESS_TIMEOUT, check=False
        )
    except FileNotFoundError as exc:
        raise DecodeError(f"{what}: executable not found: {cmd[0]}") from exc
    except subprocess.TimeoutExpired as exc:
        raise DecodeError(f"{what}: timed out after {_SUBPROCESS_TIMEOUT}s") from exc


class FfmpegDecoder:
    """Decoder backed by the ffmpeg and ffprobe command line tools."""

    def __init__(self, ffmpeg: str = "ffmpeg", ffprobe: str = "ffprobe") -> None:
        self.ffmpeg = ffmpeg
        self.ffprobe = ffprobe

    def probe(self, path: Path) -> dict:
        cmd = [
            self.ffprobe,
            "-v", "error",
            "-select_streams", "v:0",
            "-count_frames",
            "-show_entries", "stream=nb_read_frames,r_frame_rate,width,height",
            "-of", "json",
            str(path),
        ]
        proc = _run(cmd, "ffprobe")
        if proc.returncode != 0:
            raise DecodeError(
                f"ffprobe failed on {path}: {proc.stderr.decode(errors='replace').strip()}"
            )
        try:
            streams = json.loads(proc.stdout)["streams"]
            info = streams[0]
            frame_count = int(info["nb_read_frames"])
            num, _, den = info["r_frame_rate"].partition("/")
            fps = float(num) / float(den or 1)
        except (KeyError, IndexError, ValueError, json.JSONDecodeError) as exc:
            raise DecodeError(f"unparseable ffprobe output for {path}") from exc
        if frame_count < 1:
            raise DecodeError(f"no decodable frames in: {path}")
        if fps <= 0:
            fps = 30.0
        return {
            "frame_count": frame_count,
            "fps": fps,
            "width": int(info["width"]),
            "height": int(info["height"]),
        }

    def extract(self, path: Path, indices: Sequence[int]) -> list[np.ndarray]:
        wanted = sorted(set(indices))
        if not wanted:
            return []
        select = "+".join(f"eq(n\\,{i})" for i in wanted)
        cmd = [
            self.ffmpeg,
            "-v", "error",
            "-i", str(path),
            "-vf", f"select='{select}'",
            "-vsync", "0",
            "-f", "rawvideo",
            "-pix_fmt", "rgb24",
            "-",
        ]
        proc = _run(cmd, "ffmpeg")
        if proc.returncode != 0:
            raise DecodeError(
                f"ffmpeg failed on {path}: {proc.stderr.decode(errors='replace').strip()}"
            )
        meta = self.probe(path)
        w, h = meta["width"], meta["height"]
        frame_bytes = w * h * 3
        if frame_bytes == 0 or len(proc.stdout) % frame_bytes != 0:
            raise DecodeError(f"ffmpeg produced a partial frame for {path}")
        got = len(proc.stdout) // frame_bytes
        if got != len(wanted):
            raise InvalidInputError(
                f"requested frames {wanted} but decoder produced {got}; "
                f"index beyond end of video?"
            )
        buf = np.frombuffer(proc.stdout, dtype=np.uint8)
        return [
            buf[i * frame_bytes : (i + 1) * frame_bytes].reshape(h, w, 3).copy()
            for i in range(got)
        ]


class WorkerDecoder:
    """Decoder that runs the bundled OpenCV worker in a child interpreter."""

    def __init__(self, python: Optional[str] = None) -> None:
        self.python = python or sys.executable

    def _worker(self, args: list[str], path: Path) -> subprocess.CompletedProcess:
        cmd = [self.python, "-m", "increport._decode_worker", *args]
        proc = _run(cmd, "decode worker")
        if proc.returncode == 3:
            raise InvalidInputError(
                f"{path}: {proc.stderr.decode(errors='replace').strip()}"
            )
        if proc.returncode != 0:
            raise DecodeError(
                f"decode worker failed on {path}: "
                f"{proc.stderr.decode(errors='replace').strip()}"
            )
        return proc

    def probe(self, path: Path) -> dict:
        proc = self._worker(["probe", str(path)], path)
        try:
            return json.loads(proc.stdout)
        except json.JSONDecodeError as exc:
            raise DecodeError(f"unparseable worker output for {path}") from exc

    def extract(self, path: Path, indices: Sequence[int]) -> list[np.ndarray]:
        wanted = sorted(set(indices))
        if not wanted:
            return []
        arg = ",".join(str(i) for i in wanted)
        proc = self._worker(["extract", str(path), arg], path)
        newline = proc.stdout.find(b"\n")
        if newline < 0:
            raise DecodeError(f"decode worker sent no header for {path}")
        try:
            header = json.loads(proc.stdout[:newline])
            w, h, count = header["width"], header["height"], header["count"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise DecodeError(f"unparseable worker header for {path}") from exc
        body = proc.stdout[newline + 1 :]
        frame_bytes = w * h * 3
        if count != len(wanted) or len(body) != frame_bytes * count:
            raise DecodeError(
                f"decode worker returned {len(body)} bytes for {count} frames "
                f"of {path}, expected {frame_bytes * len(wanted)}"
            )
        buf = np.frombuffer(body, dtype=np.uint8)
        return [
            buf[i * frame_bytes : (i + 1) * frame_bytes].reshape(h, w, 3).copy()
            for i in range(count)
        ]


def default_decoder() -> Decoder:
    """Prefer ffmpeg when installed; fall back to the OpenCV worker."""
    if shutil.which("ffmpeg") and shutil.which("ffprobe"):
        return FfmpegDecoder()
    return WorkerDecoder()


@dataclass(frozen=True)
class VideoMeta:
    """Probe result plus a handle for extracting frames later."""

    video_id: str
    path: Path
    frame_count: int
    fps: float
    width: int
    height: int
    decoder: Decoder = field(repr=False, compare=False)  # type: ignore[assignment]

    def extract(self, indices: Sequence[int]) -> list[np.ndarray]:
        return extract_frames(
            self.path, indices, decoder=self.decoder, frame_count=self.frame_count
        )


def probe_video(
    path: Path | str,
    video_id: Optional[str] = None,
    decoder: Optional[Decoder] = None,
) -> VideoMeta:
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"video file not found: {path}")
    decoder = decoder or default_decoder()
    info = decoder.probe(path)
    if info["frame_count"] < 1:
        raise DecodeError(f"no decodable frames in: {path}")
    return VideoMeta(
        video_id=video_id or path.stem,
        path=path,
        frame_count=int(info["frame_count"]),
        fps=float(info["fps"]),
        width=int(info["width"]),
        height=int(info["height"]),
        decoder=decoder,
    )


def extract_frames(
    path: Path | str,
    indices: Sequence[int],
    decoder: Optional[Decoder] = None,
    frame_count: Optional[int] = None,
) -> list[np.ndarray]:
    """Decode the frames at ``indices`` and return them in request order.

    Duplicate indices are decoded once and returned once per request. An
    index that is negative, or at or beyond the end of the video, raises
    InvalidInputError.
    """
    for i in indices:
        if i < 0:
            raise InvalidInputError(f"negative frame index: {i}")
        if frame_count is not None and i >= frame_count:
            raise InvalidInputError(
                f"frame index {i} outside valid range [0, {frame_count - 1}]"
            )
    if not indices:
        return []
    decoder = decoder or default_decoder()
    wanted = sorted(set(indices))
    frames = decoder.extract(Path(path), wanted)
    by_index = dict(zip(wanted, frames))
    return [by_index[i] for i in indices]
