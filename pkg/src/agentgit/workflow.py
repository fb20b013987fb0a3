"""Multi-step workflow execution with a checkpoint after every step.

A workflow is an ordered list of steps; each step offers one or more
options (executor + params). :class:`Engine` runs one option per step,
commits the resulting state, resumes from any checkpoint, and rolls back
to the parent checkpoint to try another option when a step fails.
"""

from __future__ import annotations

import copy
import hashlib
import json
import random
import threading
import time
import uuid
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from .canonical import (
    CanonicalError,
    canonical_serialize,
    parse,
    sha256_hex,
    state_hash,
    with_reserved_sections,
)
from .executors.base import ExecutorError, Registry, StepOutcome
from .store import (
    BranchError,
    SerializationConflict,
    StepAccounting,
    Store,
    StoreError,
)

RECOVERY_MODES = ("none", "next-option", "retry-then-next")


class WorkflowError(ValueError):
    """The workflow file or a run request is invalid."""


class StepExecutionError(RuntimeError):
    def __init__(self, step: str, option: str, cause: BaseException):
        self.step = step
        self.option = option
        super().__init__(f"step {step!r} option {option!r}: {type(cause).__name__}: {cause}")


@dataclass(frozen=True)
class OptionSpec:
    name: str
    executor: str
    params: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class StepSpec:
    name: str
    options: tuple[OptionSpec, ...]

    @property
    def x(self) -> int:
        return len(self.options)


@dataclass(frozen=True)
class WorkflowSpec:
    name: str
    steps: tuple[StepSpec, ...]
    initial: dict[str, Any] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.steps)

    @property
    def x(self) -> list[int]:
        return [s.x for s in self.steps]

    def to_json(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "initial": self.initial,
            "steps": [
                {"name": s.name, "options": [asdict(o) for o in s.options]}
                for s in self.steps
            ],
        }


@dataclass(frozen=True)
class RecoveryPolicy:
    mode: str = "none"
    max_retries: int = 0

    def __post_init__(self) -> None:
        if self.mode not in RECOVERY_MODES:
            raise ValueError(f"recovery mode must be one of {RECOVERY_MODES}")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.mode == "none" and self.max_retries:
            raise ValueError("max_retries must be 0 when recovery mode is 'none'")


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise WorkflowError(msg)


def load_workflow(data: bytes | str, registry: Registry | None = None) -> WorkflowSpec:
    """Parse and validate a workflow document.

    ``{"name", "initial", "steps": [{"name", "options": [{"name", "executor", "params"}]}]}``
    """
    try:
        doc = parse(data)
    except json.JSONDecodeError as exc:
        raise WorkflowError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    except ValueError as exc:
        raise WorkflowError(str(exc)) from exc

    _require(isinstance(doc, dict), "workflow must be a JSON object")
    name = doc.get("name")
    _require(isinstance(name, str) and name, "workflow needs a non-empty 'name'")
    initial = doc.get("initial", {})
    _require(isinstance(initial, dict), "'initial' must be an object")
    try:
        canonical_serialize(initial)
    except CanonicalError as exc:
        raise WorkflowError(f"initial state: {exc}") from exc

    raw_steps = doc.get("steps")
    _require(isinstance(raw_steps, list) and raw_steps, "workflow needs at least one step")
    steps = []
    for i, raw in enumerate(raw_steps, 1):
        _require(isinstance(raw, dict), f"step {i}: must be an object")
        step_name = raw.get("name")
        _require(isinstance(step_name, str) and step_name, f"step {i}: needs a 'name'")
        raw_opts = raw.get("options")
        _require(isinstance(raw_opts, list) and raw_opts, f"step {i} ({step_name}): options list is empty")
        options = []
        for j, opt in enumerate(raw_opts):
            where = f"step {i} ({step_name}) option {j}"
            _require(isinstance(opt, dict), f"{where}: must be an object")
            _require(isinstance(opt.get("name"), str) and opt["name"], f"{where}: needs a 'name'")
            _require(isinstance(opt.get("executor"), str), f"{where}: needs an 'executor'")
            params = opt.get("params", {})
            _require(isinstance(params, dict), f"{where}: 'params' must be an object")
            if registry is not None:
                _require(opt["executor"] in registry, f"{where}: unknown executor {opt['executor']!r}")
            options.append(OptionSpec(opt["name"], opt["executor"], params))
        names = [o.name for o in options]
        _require(len(set(names)) == len(names), f"step {i} ({step_name}): duplicate option names")
        steps.append(StepSpec(step_name, tuple(options)))
    step_names = [s.name for s in steps]
    _require(len(set(step_names)) == len(step_names), "duplicate step names")
    return WorkflowSpec(name, tuple(steps), with_reserved_sections(initial))


def mock_workflow(
    x: Sequence[int],
    *,
    task: str = "mock task",
    base_tokens: int = 10,
    size_tokens: bool = True,
    name: str | None = None,
) -> WorkflowSpec:
    """A workflow of ``len(x)`` mock steps where step i has ``x[i]`` options."""
    steps = []
    for i, count in enumerate(x, 1):
        if count < 1:
            raise WorkflowError(f"step {i}: options list is empty")
        opts = tuple(
            OptionSpec(
                f"opt{k}",
                "mock",
                {"option_label": f"s{i}o{k}", "base_tokens": base_tokens, "size_tokens": size_tokens},
            )
            for k in range(count)
        )
        steps.append(StepSpec(f"step{i}", opts))
    if not steps:
        raise WorkflowError("workflow needs at least one step")
    initial = with_reserved_sections({"env": {"task": task}})
    return WorkflowSpec(name or "mock-" + "x".join(map(str, x)), tuple(steps), initial)


# -- state transitions ----------------------------------------------------


def apply_delta(state: dict[str, Any], delta: dict[str, Any]) -> None:
    """Merge ``delta`` into ``state`` in place (maps recurse, lists append)."""
    for key, value in delta.items():
        current = state.get(key)
        if isinstance(value, dict) and isinstance(current, dict):
            apply_delta(current, value)
        elif isinstance(value, list) and isinstance(current, list):
            current.extend(copy.deepcopy(value))
        else:
            state[key] = copy.deepcopy(value)


def _input_digest(state: dict[str, Any], option: OptionSpec) -> str:
    return sha256_hex(state_hash(state).encode() + canonical_serialize(option.params))


def advance_state(
    state: dict[str, Any], step: StepSpec, option: OptionSpec, outcome: StepOutcome
) -> dict[str, Any]:
    """The state after a successful step: delta applied plus a tool-call record."""
    new = copy.deepcopy(state)
    apply_delta(new, outcome.delta)
    new.setdefault("tool_calls", []).append(
        {
            "step": step.name,
            "option": option.name,
            "tool": option.executor,
            "input_digest": _input_digest(state, option),
            "output_digest": state_hash(outcome.delta),
            "status": "ok",
        }
    )
    return new


def execute_step(
    state: dict[str, Any],
    step: StepSpec,
    option: OptionSpec,
    registry: Registry,
    clock_ms: Callable[[], float] | None = None,
) -> StepOutcome:
    """Run one option. Executor failures come back as failed outcomes."""
    executor = registry.get(option.executor)
    clock_ms = clock_ms or _perf_ms
    started = clock_ms()
    try:
        outcome = executor(copy.deepcopy(state), dict(option.params), step=step.name)
    except ExecutorError as exc:
        outcome = StepOutcome.failed(f"step {step.name!r} option {option.name!r}: {exc}")
    except Exception as exc:
        raise StepExecutionError(step.name, option.name, exc) from exc
    outcome.wall_ms = max(0, int(round(clock_ms() - started)))
    return outcome


def _perf_ms() -> float:
    return time.perf_counter() * 1000.0


@dataclass(frozen=True)
class RecoveryAction:
    kind: str  # "retry" | "try" | "abort"
    option: int | None = None


def recover(
    policy: RecoveryPolicy,
    step: StepSpec,
    failed_option: int,
    attempts: int,
    tried: set[int],
) -> RecoveryAction:
    """Decide what to do after ``failed_option`` failed its ``attempts``-th time."""
    if policy.mode == "none":
        return RecoveryAction("abort")
    if policy.mode == "retry-then-next" and attempts <= policy.max_retries:
        return RecoveryAction("retry", failed_option)
    untried = [k for k in range(step.x) if k not in tried]
    if not untried:
        return RecoveryAction("abort")
    later = [k for k in untried if k > failed_option]
    return RecoveryAction("try", (later or untried)[0])


# -- journals ---------------------------------------------------------------


class Journal:
    """Append-only JSON lines: ts, run_id, step, option, status, tokens_in, tokens_out, wall_ms."""

    def __init__(self, path: Path, run_id: str, clock: Callable[[], float] = time.time):
        self.path = Path(path)
        self.run_id = run_id
        self.clock = clock
        self._lock = threading.Lock()

    def append(self, step: str, option: str, outcome: StepOutcome) -> None:
        record = {
            "ts": self.clock(),
            "run_id": self.run_id,
            "step": step,
            "option": option,
            "status": outcome.status,
            "tokens_in": outcome.tokens_in,
            "tokens_out": outcome.tokens_out,
            "wall_ms": outcome.wall_ms,
        }
        line = canonical_serialize(record) + b"\n"
        with self._lock:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "ab") as fh:
                fh.write(line)


# -- engine -----------------------------------------------------------------


@dataclass
class StepResult:
    checkpoint: str | None
    state: dict[str, Any] | None
    option: int
    executed: int
    accounting: StepAccounting
    reason: str | None = None

    @property
    def ok(self) -> bool:
        return self.checkpoint is not None


@dataclass
class RunResult:
    run_id: str
    start: str
    leaf: str | None
    checkpoints: list[str] = field(default_factory=list)
    choices: list[int] = field(default_factory=list)
    steps: list[StepAccounting] = field(default_factory=list)
    steps_executed: int = 0
    status: str = "ok"
    failed_step: str | None = None
    reason: str | None = None

    @property
    def last_good(self) -> str:
        return self.checkpoints[-1] if self.checkpoints else self.start

    @property
    def tokens_in(self) -> int:
        return sum(s.tokens_in for s in self.steps)

    @property
    def tokens_out(self) -> int:
        return sum(s.tokens_out for s in self.steps)


class RunFailed(RuntimeError):
    def __init__(self, result: RunResult):
        self.result = result
        super().__init__(
            f"run {result.run_id} failed at step {result.failed_step!r}: {result.reason}; "
            f"last good checkpoint {result.last_good}"
        )


@dataclass
class LayerCheck:
    step_index: int
    checkpoint: str
    recorded: str
    stored: str | None
    replayed: str | None
    status: str  # "match" | "mismatch" | "unverifiable"
    note: str | None = None


@dataclass
class ReplayReport:
    leaf: str
    layers: list[LayerCheck]

    @property
    def ok(self) -> bool:
        """No layer disagrees; unverifiable layers are allowed."""
        return not self.mismatches

    @property
    def verified(self) -> bool:
        """Every layer was re-executed and matched."""
        return all(layer.status == "match" for layer in self.layers)

    @property
    def mismatches(self) -> list[LayerCheck]:
        return [layer for layer in self.layers if layer.status == "mismatch"]


class Engine:
    """Runs workflows against a store.

    With ``deterministic=True`` journal timestamps, wall times and run ids
    are fixed so repeated runs produce byte-identical records.
    """

    def __init__(
        self,
        store: Store,
        registry: Registry,
        *,
        journal_dir: str | Path | None = None,
        deterministic: bool = False,
    ):
        self.store = store
        self.registry = registry
        self.journal_dir = Path(journal_dir) if journal_dir else store.root / "journals"
        self.deterministic = deterministic
        self._run_counter = 0
        self._counter_lock = threading.Lock()

    def new_run_id(self, prefix: str = "run") -> str:
        if not self.deterministic:
            return f"{prefix}-{uuid.uuid4().hex[:16]}"
        with self._counter_lock:
            self._run_counter += 1
            return f"{prefix}-{self._run_counter:06d}"

    def journal(self, run_id: str) -> Journal:
        clock = (lambda: 0) if self.deterministic else time.time
        return Journal(self.journal_dir / f"{run_id}.jsonl", run_id, clock)

    def _clock_ms(self) -> Callable[[], float] | None:
        return (lambda: 0.0) if self.deterministic else None

    # -- commits --

    def ensure_branch(self, branch: str, at: str) -> None:
        """Create ``branch`` at ``at`` unless it exists; tolerates creation races."""
        for attempt in range(1000):
            try:
                self.store.branch_head(branch)
                return
            except BranchError:
                pass
            try:
                self.store.create_branch(branch, at)
                return
            except SerializationConflict:
                time.sleep(random.uniform(0, 0.002) * min(attempt + 1, 10))
            except BranchError:
                self.store.branch_head(branch)  # lost the race; fine if it exists now
                return
        raise StoreError(f"could not create branch {branch!r}: persistent lock contention")

    def commit(self, parent: str | None, state: dict[str, Any], branch: str, **kwargs: Any) -> str:
        """Commit, retrying while another writer holds the branch lock."""
        for attempt in range(1000):
            try:
                return self.store.commit(parent, state, branch, **kwargs)
            except SerializationConflict:
                time.sleep(random.uniform(0, 0.002) * min(attempt + 1, 10))
        raise StoreError(f"could not commit to branch {branch!r}: persistent lock contention")

    def commit_root(self, spec: WorkflowSpec, branch: str) -> str:
        return self.commit(None, spec.initial, branch, message="root")

    # -- steps --

    def advance(
        self,
        parent: str,
        state: dict[str, Any],
        spec: WorkflowSpec,
        layer: int,
        option: int,
        *,
        branch: str,
        journal: Journal,
        policy: RecoveryPolicy = RecoveryPolicy(),
    ) -> StepResult:
        """Execute step ``layer`` (0-based) from ``parent`` and commit the child.

        Failed attempts are journaled but never committed.
        """
        step = spec.steps[layer]
        tried: set[int] = set()
        attempts: dict[int, int] = {}
        executed = tokens_in = tokens_out = wall = 0
        reason = None
        while True:
            opt = step.options[option]
            outcome = execute_step(state, step, opt, self.registry, self._clock_ms())
            executed += 1
            attempts[option] = attempts.get(option, 0) + 1
            tried.add(option)
            tokens_in += outcome.tokens_in
            tokens_out += outcome.tokens_out
            wall += outcome.wall_ms
            journal.append(step.name, opt.name, outcome)
            acct = StepAccounting(tokens_in, tokens_out, wall, executed)
            if outcome.ok:
                child_state = advance_state(state, step, opt, outcome)
                self.ensure_branch(branch, parent)
                cid = self.commit(
                    parent,
                    child_state,
                    branch,
                    message=f"{step.name}: {opt.name}",
                    option_taken=option,
                    accounting=acct,
                )
                return StepResult(cid, child_state, option, executed, acct)
            reason = outcome.reason
            action = recover(policy, step, option, attempts[option], tried)
            if action.kind == "abort":
                return StepResult(None, None, option, executed, acct, reason)
            state = self.store.checkout(parent)
            option = action.option

    def run_path(
        self,
        spec: WorkflowSpec,
        choices: Sequence[int],
        start: str | None = None,
        policy: RecoveryPolicy = RecoveryPolicy(),
        *,
        branch: str = "main",
        run_id: str | None = None,
        journal: Journal | None = None,
    ) -> RunResult:
        """Execute the remaining steps from ``start`` (a fresh root if None)."""
        first = 0
        if start is not None:
            cp = self.store.get(start)
            first = cp.step_index
            _require(first <= spec.n, f"checkpoint is at step {first} but workflow has {spec.n} steps")
        expected = spec.n - first
        _require(
            len(choices) == expected,
            f"expected {expected} choices from step {first + 1}, got {len(choices)}",
        )
        for offset, k in enumerate(choices):
            step_no = first + offset + 1
            x = spec.steps[step_no - 1].x
            _require(0 <= k < x, f"option {k} out of range at step {step_no}")

        if journal is not None:
            run_id = journal.run_id
        run_id = run_id or self.new_run_id()
        journal = journal or self.journal(run_id)
        if start is None:
            start = self.commit_root(spec, branch)
            state = copy.deepcopy(spec.initial)
        else:
            start = self.store.resolve(start)
            state = self.store.checkout(start)

        result = RunResult(run_id=run_id, start=start, leaf=None)
        parent = start
        for offset, k in enumerate(choices):
            layer = first + offset
            step = self.advance(parent, state, spec, layer, k, branch=branch, journal=journal, policy=policy)
            result.steps_executed += step.executed
            result.steps.append(step.accounting)
            if not step.ok:
                result.status = "failed"
                result.failed_step = spec.steps[layer].name
                result.reason = step.reason
                raise RunFailed(result)
            result.checkpoints.append(step.checkpoint)
            result.choices.append(step.option)
            parent, state = step.checkpoint, step.state
        result.leaf = parent
        return result

    # -- replay --

    def replay(self, leaf: str, spec: WorkflowSpec) -> ReplayReport:
        """Re-execute the recorded option path and compare state hashes layer by layer."""
        chain = self.store.ancestry(leaf)
        layers: list[LayerCheck] = []
        state: dict[str, Any] | None = copy.deepcopy(spec.initial)
        for depth, cid in enumerate(chain):
            cp = self.store.get(cid)
            try:
                stored_bytes = self.store.state_bytes(cp.state_hash)
                stored = hashlib.sha256(stored_bytes).hexdigest()
            except StoreError:
                stored_bytes, stored = None, None

            note = status = None
            if depth > 0:
                step = spec.steps[depth - 1] if depth <= spec.n else None
                if step is None or cp.option_taken is None or cp.merged_from:
                    state, status = None, "unverifiable"
                    note = "no recorded option (merge or foreign checkpoint)"
                else:
                    opt = step.options[cp.option_taken]
                    executor = self.registry.get(opt.executor)
                    if state is None or not getattr(executor, "deterministic", False):
                        state, status = None, "unverifiable"
                        note = f"executor {opt.executor!r} is not replayable"
                    else:
                        outcome = execute_step(state, step, opt, self.registry, self._clock_ms())
                        if outcome.ok:
                            state = advance_state(state, step, opt, outcome)
                        else:
                            state, status, note = None, "mismatch", outcome.reason

            if state is None:
                replayed = None
                # carry on from the stored state so later layers can still be checked
                if stored_bytes is not None and stored == cp.state_hash:
                    state = parse(stored_bytes)
            else:
                replayed = state_hash(state)
                status = "match" if replayed == cp.state_hash == stored else "mismatch"
            layers.append(LayerCheck(depth, cid, cp.state_hash, stored, replayed, status, note))
        return ReplayReport(chain[-1], layers)
