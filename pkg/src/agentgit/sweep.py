"""Full-factorial option sweeps and the step-count formulas they verify.

For option counts ``x = [x1, ..., xn]``:

* leaves ``L = prod(x)``
* standard strategy (every leaf re-runs its whole path): ``n * L`` steps
* rollback strategy (every tree edge runs once): ``sum_i prod(x[:i+1])`` steps
* efficiency ``eta`` is the ratio of the two
"""

from __future__ import annotations

import itertools
import math
import threading
from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Any, Sequence

from .canonical import canonical_serialize, parse
from .executors.base import Registry
from .store import Store
from .workflow import Engine, RunFailed, WorkflowSpec

STRATEGIES = ("standard", "rollback")


def _check_x(x: Sequence[int]) -> list[int]:
    x = list(x)
    if not x:
        raise ValueError("option vector must not be empty")
    if any(not isinstance(v, int) or v < 1 for v in x):
        raise ValueError(f"every option count must be an integer >= 1, got {x}")
    return x


def enumerate_leaves(spec: WorkflowSpec | Sequence[int]) -> list[list[int]]:
    """All option-index vectors, lexicographically ordered."""
    x = _check_x(spec.x if isinstance(spec, WorkflowSpec) else spec)
    return [list(v) for v in itertools.product(*(range(k) for k in x))]


def predicted_leaf_count(x: Sequence[int]) -> int:
    return math.prod(_check_x(x))


def predicted_steps_standard(x: Sequence[int]) -> int:
    x = _check_x(x)
    return len(x) * math.prod(x)


def predicted_steps_rollback(x: Sequence[int]) -> int:
    total, layer = 0, 1
    for count in _check_x(x):
        layer *= count
        total += layer
    return total


def efficiency(x: Sequence[int]) -> Fraction:
    return Fraction(predicted_steps_standard(x), predicted_steps_rollback(x))


def efficiency_per_step_limit(alpha: int) -> Fraction:
    """Limit of eta/n as n grows, for ``alpha`` options at every step."""
    if alpha < 2:
        raise ValueError("the limit needs alpha >= 2")
    return Fraction(alpha - 1, alpha)


# -- execution ----------------------------------------------------------------


@dataclass
class Accounting:
    steps_executed: int = 0
    tokens_in: int = 0
    tokens_out: int = 0
    wall_ms: int = 0
    per_layer: list[int] = field(default_factory=list)

    @property
    def tokens(self) -> int:
        return self.tokens_in + self.tokens_out

    def to_json(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> Accounting:
        return cls(**data)


class _Counter:
    """Accounting with a lock, shared by sweep workers."""

    def __init__(self, n: int):
        self.acct = Accounting(per_layer=[0] * n)
        self._lock = threading.Lock()

    def add(self, layer: int, executed: int, tokens_in: int, tokens_out: int, wall_ms: int) -> None:
        with self._lock:
            a = self.acct
            a.steps_executed += executed
            a.per_layer[layer] += executed
            a.tokens_in += tokens_in
            a.tokens_out += tokens_out
            a.wall_ms += wall_ms


@dataclass(frozen=True)
class SweepPlan:
    spec: WorkflowSpec
    strategy: str = "rollback"
    parallelism: int = 1

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")


@dataclass
class LeafResult:
    choices: list[int]
    state_hash: str | None
    checkpoint: str | None
    status: str = "ok"
    reason: str | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "choices": self.choices,
            "state_hash": self.state_hash,
            "checkpoint": self.checkpoint,
            "status": self.status,
            "reason": self.reason,
        }


@dataclass
class SweepResult:
    x: list[int]
    strategy: str
    leaves: list[LeafResult]
    accounting: Accounting
    run_id: str = ""
    root: str | None = None
    formula_report: FormulaReport | None = None

    @property
    def ok_leaves(self) -> list[LeafResult]:
        return [leaf for leaf in self.leaves if leaf.status == "ok"]

    @property
    def failed_leaves(self) -> list[LeafResult]:
        return [leaf for leaf in self.leaves if leaf.status != "ok"]

    @property
    def leaf_hashes(self) -> list[str]:
        """Sorted state hashes of the successful leaves."""
        return sorted(leaf.state_hash for leaf in self.ok_leaves)

    def to_json(self) -> dict[str, Any]:
        return {
            "x": self.x,
            "strategy": self.strategy,
            "run_id": self.run_id,
            "root": self.root,
            "leaves": [leaf.to_json() for leaf in self.leaves],
            "accounting": self.accounting.to_json(),
            "formula_report": self.formula_report.to_json() if self.formula_report else None,
        }

    def dumps(self) -> bytes:
        return canonical_serialize(self.to_json())

    @classmethod
    def loads(cls, data: bytes | str) -> SweepResult:
        doc = parse(data)
        result = cls(
            x=doc["x"],
            strategy=doc["strategy"],
            leaves=[
                LeafResult(
                    leaf["choices"],
                    leaf["state_hash"],
                    leaf.get("checkpoint"),
                    leaf.get("status", "ok"),
                    leaf.get("reason"),
                )
                for leaf in doc["leaves"]
            ],
            accounting=Accounting.from_json(doc["accounting"]),
            run_id=doc.get("run_id", ""),
            root=doc.get("root"),
        )
        # the stored report is derived data; rebuild it from what was loaded
        result.formula_report = verify_formulas([result], result.x)
        return result


def _branch(layer: int, option: int) -> str:
    return f"sweep/{layer}/{option}"


def run_sweep(
    store: Store,
    plan: SweepPlan,
    registry: Registry,
    *,
    engine: Engine | None = None,
    deterministic: bool = False,
) -> SweepResult:
    """Produce every leaf of the option tree under the plan's strategy."""
    engine = engine or Engine(store, registry, deterministic=deterministic)
    if plan.strategy == "rollback":
        result = _run_rollback(engine, plan)
    else:
        result = _run_standard(engine, plan)
    result.formula_report = verify_formulas([result], plan.spec.x)
    return result


def _run_standard(engine: Engine, plan: SweepPlan) -> SweepResult:
    spec = plan.spec
    run_id = engine.new_run_id("sweep-standard")
    journal = engine.journal(run_id)
    counter = _Counter(spec.n)
    vectors = enumerate_leaves(spec)

    def one(choices: list[int]) -> LeafResult:
        try:
            run = engine.run_path(spec, choices, branch=_branch(0, 0), journal=journal)
        except RunFailed as exc:
            run = exc.result
        for layer, acct in enumerate(run.steps):
            counter.add(layer, acct.attempts, acct.tokens_in, acct.tokens_out, acct.wall_ms)
        if run.status != "ok":
            return LeafResult(choices, None, None, "failed", f"{run.failed_step}: {run.reason}")
        return LeafResult(choices, engine.store.get(run.leaf).state_hash, run.leaf)

    if plan.parallelism == 1:
        leaves = [one(v) for v in vectors]
    else:
        with ThreadPoolExecutor(plan.parallelism) as pool:
            leaves = list(pool.map(one, vectors))
    return SweepResult(spec.x, "standard", leaves, counter.acct, run_id)


def _run_rollback(engine: Engine, plan: SweepPlan) -> SweepResult:
    spec = plan.spec
    run_id = engine.new_run_id("sweep-rollback")
    journal = engine.journal(run_id)
    counter = _Counter(spec.n)
    root = engine.commit_root(spec, _branch(0, 0))
    leaves: dict[tuple[int, ...], LeafResult] = {}
    leaves_lock = threading.Lock()

    def expand(parent: str, state: dict, prefix: tuple[int, ...], k: int) -> list[tuple]:
        """Run one edge; return the child edges it unlocks."""
        layer = len(prefix)
        step = engine.advance(parent, state, spec, layer, k, branch=_branch(layer + 1, k), journal=journal)
        acct = step.accounting
        counter.add(layer, step.executed, acct.tokens_in, acct.tokens_out, acct.wall_ms)
        path = prefix + (k,)
        if not step.ok:
            # the whole subtree below a failed edge is pruned
            failed = [
                LeafResult(list(path) + tail, None, None, "failed", f"{spec.steps[layer].name}: {step.reason}")
                for tail in ([[]] if layer + 1 == spec.n else enumerate_leaves(spec.x[layer + 1 :]))
            ]
            with leaves_lock:
                for leaf in failed:
                    leaves[tuple(leaf.choices)] = leaf
            return []
        if layer + 1 == spec.n:
            with leaves_lock:
                leaves[path] = LeafResult(list(path), engine.store.get(step.checkpoint).state_hash, step.checkpoint)
            return []
        return [(step.checkpoint, step.state, path, j) for j in range(spec.steps[layer + 1].x)]

    initial = [(root, spec.initial, (), k) for k in range(spec.steps[0].x)]
    if plan.parallelism == 1:
        # depth-first, lexicographic
        stack = list(reversed(initial))
        while stack:
            stack.extend(reversed(expand(*stack.pop())))
    else:
        with ThreadPoolExecutor(plan.parallelism) as pool:
            pending: set[Future] = {pool.submit(expand, *edge) for edge in initial}
            while pending:
                done, pending = wait(pending, return_when=FIRST_COMPLETED)
                for fut in done:
                    pending |= {pool.submit(expand, *edge) for edge in fut.result()}

    ordered = [leaves[tuple(v)] for v in enumerate_leaves(spec)]
    return SweepResult(spec.x, "rollback", ordered, counter.acct, run_id, root)


# -- verification -----------------------------------------------------------------


@dataclass
class FormulaReport:
    x: list[int]
    L: int
    s_std: int
    s_rollback: int
    eta: Fraction
    observed: dict[str, Accounting] = field(default_factory=dict)
    observed_leaves: dict[str, int] = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def observed_ratio(self) -> Fraction | None:
        std, rb = self.observed.get("standard"), self.observed.get("rollback")
        if std is None or rb is None or rb.steps_executed == 0:
            return None
        return Fraction(std.steps_executed, rb.steps_executed)

    def to_json(self) -> dict[str, Any]:
        ratio = self.observed_ratio
        return {
            "x": self.x,
            "L": self.L,
            "s_std": self.s_std,
            "s_rollback": self.s_rollback,
            "eta": str(self.eta),
            "observed": {k: v.to_json() for k, v in self.observed.items()},
            "observed_leaves": self.observed_leaves,
            "observed_ratio": None if ratio is None else str(ratio),
            "violations": self.violations,
        }

    def table(self) -> str:
        rows = [("quantity", "predicted", "observed", "check")]

        def row(name: str, predicted: Any, observed: Any) -> None:
            if observed is None:
                rows.append((name, str(predicted), "-", "-"))
            else:
                rows.append((name, str(predicted), str(observed), "ok" if predicted == observed else "FAIL"))

        for strategy in STRATEGIES:
            row(f"L ({strategy})", self.L, self.observed_leaves.get(strategy))
        std, rb = self.observed.get("standard"), self.observed.get("rollback")
        row("S_std", self.s_std, std.steps_executed if std else None)
        row("S_rollback", self.s_rollback, rb.steps_executed if rb else None)
        row("eta", self.eta, self.observed_ratio)
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


def verify_formulas(results: Sequence[SweepResult], x: Sequence[int]) -> FormulaReport:
    """Compare observed sweep costs with the closed forms; mismatches are flagged."""
    x = _check_x(x)
    report = FormulaReport(
        x=x,
        L=predicted_leaf_count(x),
        s_std=predicted_steps_standard(x),
        s_rollback=predicted_steps_rollback(x),
        eta=efficiency(x),
    )
    for res in results:
        if list(res.x) != x:
            raise ValueError(f"incomparable reports: x={res.x} vs x={x}")
        acct = res.accounting
        report.observed[res.strategy] = acct
        distinct = len({tuple(leaf.choices) for leaf in res.ok_leaves})
        report.observed_leaves[res.strategy] = distinct
        if distinct != report.L:
            report.violations.append(
                f"leaves: {res.strategy} produced {distinct} distinct leaves, expected {report.L}"
            )
        if acct.steps_executed != sum(acct.per_layer):
            report.violations.append(
                f"accounting: {res.strategy} steps_executed {acct.steps_executed} != per-layer sum {sum(acct.per_layer)}"
            )
        if res.strategy == "standard" and acct.steps_executed != report.s_std:
            report.violations.append(
                f"standard-steps: standard executed {acct.steps_executed} steps, expected {report.s_std}"
            )
        if res.strategy == "rollback" and acct.steps_executed != report.s_rollback:
            report.violations.append(
                f"rollback-steps: rollback executed {acct.steps_executed} steps, expected {report.s_rollback}"
            )
    return report
