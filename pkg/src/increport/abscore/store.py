"""Append-only JSON-lines vote log.

Each append writes one line and fsyncs before returning, so an
acknowledged vote survives a process kill. A torn trailing line (a crash
mid-write) is dropped on load; a malformed line anywhere else means the
file was edited and is reported as corruption.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path

from ..errors import ConfigError


class VoteStore:
    def __init__(self, path: Path) -> None:
        self._path = Path(path)
        self._lock = threading.Lock()

    @property
    def path(self) -> Path:
        return self._path

    def append(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True, separators=(",", ":"))
        with self._lock:
            with open(self._path, "a", encoding="utf-8") as handle:
                handle.write(line + "\n")
                handle.flush()
                os.fsync(handle.fileno())

    def load(self) -> list[dict]:
        if not self._path.exists():
            return []
        with self._lock:
            raw = self._path.read_text(encoding="utf-8")
        lines = raw.split("\n")
        trailing = lines.pop()  # "" after a complete final newline
        records = []
        for number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ConfigError(
                    f"{self._path}:{number}: corrupt vote record: {exc}"
                ) from exc
        if trailing.strip():
            try:
                records.append(json.loads(trailing))
            except json.JSONDecodeError:
                pass  # torn write from a crash; the vote was never acknowledged
        return records
