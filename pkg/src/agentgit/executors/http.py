"""Minimal HTTP transport with retry and backoff.

A transport is any callable ``(method, url, headers, body, timeout_s) ->
(status, body_bytes)`` that raises :class:`TransportError` on connection
failures. Tests swap in stubs; production uses :func:`urllib_transport`.
"""

from __future__ import annotations

import logging
import time
import urllib.error
import urllib.request
from typing import Callable

from .base import ExecutorError

logger = logging.getLogger(__name__)

Transport = Callable[[str, str, dict, "bytes | None", float], "tuple[int, bytes]"]

RETRYABLE_STATUS = frozenset({408, 429, 500, 502, 503, 504})


class TransportError(ExecutorError):
    """Connection-level failure; always retryable."""


class HttpError(ExecutorError):
    def __init__(self, status: int, body: bytes = b""):
        self.status = status
        self.body = body
        snippet = body[:200].decode("utf-8", "replace")
        super().__init__(f"HTTP {status}: {snippet}")


def urllib_transport(
    method: str, url: str, headers: dict, body: bytes | None, timeout_s: float
) -> tuple[int, bytes]:
    req = urllib.request.Request(url, data=body, headers=headers, method=method)
    try:
        with urllib.request.urlopen(req, timeout=timeout_s) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()
    except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
        raise TransportError(str(exc)) from exc


def send(
    transport: Transport,
    method: str,
    url: str,
    *,
    headers: dict | None = None,
    body: bytes | None = None,
    timeout_s: float = 60.0,
    max_retries: int = 3,
    backoff_s: float = 0.5,
    sleep: Callable[[float], None] = time.sleep,
) -> bytes:
    """Send a request, retrying transient failures with exponential backoff."""
    attempt = 0
    while True:
        try:
            status, data = transport(method, url, headers or {}, body, timeout_s)
        except TransportError as exc:
            error: ExecutorError = exc
        else:
            if 200 <= status < 300:
                return data
            error = HttpError(status, data)
            if status not in RETRYABLE_STATUS:
                raise error
        if attempt >= max_retries:
            raise error
        delay = backoff_s * 2**attempt
        logger.warning("%s %s failed (%s); retry %d in %.2fs", method, url, error, attempt + 1, delay)
        sleep(delay)
        attempt += 1
