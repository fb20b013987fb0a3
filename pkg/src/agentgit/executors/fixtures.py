"""Record/replay of external responses, keyed by request digest."""

from __future__ import annotations

import os
import tempfile
import threading
from pathlib import Path
from typing import Any

from ..canonical import canonical_serialize, parse, sha256_hex
from .base import ExecutorError

MODES = ("record", "replay", "off")


class FixtureMiss(ExecutorError):
    def __init__(self, digest: str):
        self.digest = digest
        super().__init__(f"fixture miss: {digest}")


def request_digest(executor_id: str, request: dict[str, Any]) -> str:
    return sha256_hex(executor_id.encode("utf-8") + canonical_serialize(request))


class FixtureStore:
    """Files live at ``<path>/<executor>/<digest>.json``.

    In ``replay`` mode callers must never reach the network; a miss raises
    :class:`FixtureMiss`. In ``record`` mode existing fixtures are served
    and new responses are written.
    """

    def __init__(self, path: str | os.PathLike, mode: str = "replay"):
        if mode not in MODES:
            raise ValueError(f"fixture mode must be one of {MODES}, got {mode!r}")
        self.path = Path(path)
        self.mode = mode
        self._write_lock = threading.Lock()

    def _file(self, executor_id: str, digest: str) -> Path:
        return self.path / executor_id / f"{digest}.json"

    def load(self, executor_id: str, request: dict[str, Any]) -> dict[str, Any] | None:
        if self.mode == "off":
            return None
        digest = request_digest(executor_id, request)
        path = self._file(executor_id, digest)
        if path.is_file():
            return parse(path.read_bytes())
        if self.mode == "replay":
            raise FixtureMiss(digest)
        return None

    def save(
        self,
        executor_id: str,
        request: dict[str, Any],
        response: Any,
        usage: dict[str, int] | None = None,
    ) -> Path | None:
        if self.mode != "record":
            return None
        digest = request_digest(executor_id, request)
        path = self._file(executor_id, digest)
        data = canonical_serialize({"request": request, "response": response, "usage": usage or {}})
        with self._write_lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        return path
