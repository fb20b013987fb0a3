from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Protocol

#: Executor ids that may not be registered. ``evaluator`` is held for a
#: future output-quality judge.
RESERVED_IDS = frozenset({"evaluator"})


class ExecutorError(Exception):
    """An executor could not produce an outcome (transport, fixture, parse)."""


class UnknownExecutorError(ExecutorError):
    def __init__(self, executor_id: str):
        self.executor_id = executor_id
        super().__init__(f"unknown executor {executor_id!r}")


@dataclass
class StepOutcome:
    """Result of one executor invocation.

    ``delta`` is merged into the state by the engine: maps merge
    recursively, lists are appended, anything else overwrites.
    """

    delta: dict[str, Any] = field(default_factory=dict)
    tokens_in: int = 0
    tokens_out: int = 0
    wall_ms: int = 0
    status: str = "ok"
    reason: str | None = None

    def __post_init__(self) -> None:
        if self.status not in ("ok", "failed"):
            raise ValueError(f"bad status {self.status!r}")
        if min(self.tokens_in, self.tokens_out, self.wall_ms) < 0:
            raise ValueError("token and time counters must be >= 0")
        if self.status == "failed" and self.delta:
            raise ValueError("a failed outcome cannot carry a delta")

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @classmethod
    def failed(cls, reason: str, **counters: int) -> StepOutcome:
        return cls(status="failed", reason=reason, **counters)


class Executor(Protocol):
    deterministic: bool

    def __call__(self, state: dict[str, Any], params: dict[str, Any], *, step: str) -> StepOutcome: ...


class Registry:
    """Maps executor ids to implementations."""

    def __init__(self, executors: dict[str, Executor] | None = None):
        self._executors: dict[str, Executor] = {}
        for name, ex in (executors or {}).items():
            self.register(name, ex)

    def register(self, executor_id: str, executor: Executor) -> None:
        if executor_id in RESERVED_IDS:
            raise ValueError(f"executor id {executor_id!r} is reserved")
        self._executors[executor_id] = executor

    def get(self, executor_id: str) -> Executor:
        try:
            return self._executors[executor_id]
        except KeyError:
            raise UnknownExecutorError(executor_id) from None

    def __contains__(self, executor_id: object) -> bool:
        return executor_id in self._executors

    @property
    def ids(self) -> list[str]:
        return sorted(self._executors)
