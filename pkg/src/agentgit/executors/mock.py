"""Deterministic stand-in executor used for verification sweeps."""

from __future__ import annotations

import hashlib
import threading
from collections import Counter
from typing import Any

from ..canonical import canonical_serialize, state_hash
from .base import StepOutcome


def mock_output(state: dict[str, Any], option_label: str) -> str:
    return hashlib.sha256((state_hash(state) + option_label).encode("utf-8")).hexdigest()


class MockExecutor:
    """Writes ``sha256(state_hash + option_label)`` under ``artifacts.<step>``.

    Params: ``option_label`` (required), ``base_tokens`` (default 10),
    ``size_tokens`` (default true; when false tokens_in is just base_tokens),
    ``fail`` and ``fail_times`` (fail the first N calls per label, every
    call if ``fail_times`` is omitted).
    """

    deterministic = True

    def __init__(self) -> None:
        self._calls: Counter[str] = Counter()
        self._lock = threading.Lock()

    def calls(self, option_label: str) -> int:
        return self._calls[option_label]

    def __call__(self, state: dict[str, Any], params: dict[str, Any], *, step: str) -> StepOutcome:
        label = str(params["option_label"])
        base = int(params.get("base_tokens", 10))
        with self._lock:
            self._calls[label] += 1
            n = self._calls[label]

        tokens_in = base
        if params.get("size_tokens", True):
            tokens_in += len(canonical_serialize(state)) // 100

        if params.get("fail"):
            fail_times = params.get("fail_times")
            if fail_times is None or n <= int(fail_times):
                return StepOutcome.failed(f"mock failure #{n} for {label}", tokens_in=tokens_in)

        digest = mock_output(state, label)
        return StepOutcome(
            delta={
                "artifacts": {step: digest},
                "messages": [{"role": "assistant", "name": step, "content": digest}],
            },
            tokens_in=tokens_in,
            tokens_out=base,
        )
