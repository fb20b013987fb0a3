"""``agentgit`` command line.

Exit status: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Sequence

from . import metrics
from .canonical import canonical_serialize, parse
from .docdiff import MERGE_STRATEGIES
from .executors import FixtureStore, LlmEndpointConfig, default_registry
from .executors.base import ExecutorError
from .store import Store, StoreError, init_store, open_store
from .sweep import STRATEGIES, SweepPlan, SweepResult, run_sweep, verify_formulas
from .workflow import RECOVERY_MODES, Engine, RecoveryPolicy, RunFailed, WorkflowError, load_workflow

DEFAULT_STORE = ".agentgit"
STORE_ENV = "AGENTGIT_STORE"


class CliError(Exception):
    """Domain failure reported with exit status 1."""


def _store_root(args: argparse.Namespace) -> Path:
    return Path(args.store or os.environ.get(STORE_ENV) or DEFAULT_STORE)


def _clock(args: argparse.Namespace):
    return (lambda: "") if args.no_timestamps else None


def _open(args: argparse.Namespace) -> Store:
    return open_store(_store_root(args), clock=_clock(args))


def _init(args: argparse.Namespace) -> Store:
    return init_store(_store_root(args), clock=_clock(args))


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {value}")
    return value


def _write(path: str | None, data: bytes, out) -> None:
    if path and path != "-":
        Path(path).write_bytes(data)
    else:
        out.write(data.decode("utf-8"))
        if not data.endswith(b"\n"):
            out.write("\n")


def _registry(args: argparse.Namespace):
    fixtures = None
    if getattr(args, "fixtures", None):
        fixtures = FixtureStore(args.fixtures, args.fixture_mode)
    config = LlmEndpointConfig(
        base_url=os.environ.get("AGENTGIT_LLM_BASE_URL", LlmEndpointConfig.base_url),
        model=os.environ.get("AGENTGIT_LLM_MODEL", LlmEndpointConfig.model),
    )
    return default_registry(fixtures, config)


# -- log rendering ------------------------------------------------------------------


def render_log(store: Store, graph: bool = False, timestamps: bool = True) -> str:
    ids = store.checkpoints()
    if not ids:
        return "no checkpoints"
    cps = {cid: store.get(cid) for cid in ids}
    children: dict[str | None, list[str]] = {}
    for cp in cps.values():
        children.setdefault(cp.parent, []).append(cp.id)

    def order(cid: str):
        cp = cps[cid]
        return (cp.option_taken is None, cp.option_taken or 0, cp.created_at, cid)

    for kids in children.values():
        kids.sort(key=order)
    heads: dict[str, list[str]] = {}
    for ref in store.branches():
        heads.setdefault(ref.head, []).append(ref.name)

    def describe(cid: str) -> str:
        cp = cps[cid]
        parts = [cid[:12], f"step={cp.step_index}"]
        if cp.option_taken is not None:
            parts.append(f"option={cp.option_taken}")
        if cp.merged_from:
            parts.append(f"merge={cp.merged_from[:12]}")
        if timestamps and cp.created_at:
            parts.append(cp.created_at)
        if cid in heads:
            parts.append("(" + ", ".join(heads[cid]) + ")")
        if cp.message:
            parts.append(cp.message)
        if not children.get(cid):
            parts.append("[leaf]")
        return " ".join(parts)

    lines: list[str] = []

    def walk(cid: str, prefix: str, last: bool, top: bool) -> None:
        if graph:
            connector = "" if top else ("`-- " if last else "|-- ")
            lines.append(prefix + connector + describe(cid))
            child_prefix = prefix if top else prefix + ("    " if last else "|   ")
        else:
            lines.append(describe(cid))
            child_prefix = ""
        kids = children.get(cid, [])
        for i, kid in enumerate(kids):
            walk(kid, child_prefix, i == len(kids) - 1, False)

    roots = children.get(None, [])
    for root in roots:
        walk(root, "", True, True)
    edges = sum(1 for cp in cps.values() if cp.parent is not None)
    leaves = sum(1 for cid in cps if not children.get(cid))
    lines.append(f"checkpoints={len(cps)} edges={edges} leaves={leaves}")
    return "\n".join(lines)


# -- commands -------------------------------------------------------------------------


def cmd_init(args, out) -> int:
    store = _init(args)
    out.write(f"initialized store at {store.root}\n")
    return 0


def cmd_commit(args, out) -> int:
    store = _open(args)
    raw = sys.stdin.buffer.read() if args.state == "-" else Path(args.state).read_bytes()
    state = parse(raw)
    if not isinstance(state, dict):
        raise CliError("state must be a JSON object")
    branch = args.branch or store.head_branch
    if args.root:
        parent = None
    elif args.parent:
        parent = store.resolve(args.parent)
    else:
        try:
            parent = store.branch_head(branch)
        except StoreError:
            parent = None
    cid = store.commit(parent, state, branch, message=args.message or "")
    out.write(cid + "\n")
    return 0


def cmd_checkout(args, out) -> int:
    store = _open(args)
    state = store.checkout(args.ref)
    if any(ref.name == args.ref for ref in store.branches()):
        store.set_head_branch(args.ref)
    out.write(canonical_serialize(state).decode("utf-8") + "\n")
    return 0


def cmd_branch(args, out) -> int:
    store = _open(args)
    if args.name is None:
        current = store.head_branch
        for ref in store.branches():
            mark = "*" if ref.name == current else " "
            out.write(f"{mark} {ref.name} {ref.head[:12]}\n")
        return 0
    source = args.from_ref or store.branch_head(store.head_branch)
    ref = store.create_branch(args.name, source)
    out.write(f"{ref.name} {ref.head}\n")
    return 0


def cmd_log(args, out) -> int:
    store = _open(args)
    out.write(render_log(store, graph=args.graph, timestamps=not args.no_timestamps) + "\n")
    return 0


def cmd_diff(args, out) -> int:
    store = _open(args)
    d = store.diff(args.base, args.target)
    if args.json:
        out.write(canonical_serialize(d.to_json()).decode("utf-8") + "\n")
        return 0
    doc = d.to_json()
    for key, value in doc["added"].items():
        out.write(f"+ {key} = {json.dumps(value, sort_keys=True)}\n")
    for key, value in doc["removed"].items():
        out.write(f"- {key} = {json.dumps(value, sort_keys=True)}\n")
    for key, (old, new) in doc["changed"].items():
        out.write(f"~ {key}: {json.dumps(old, sort_keys=True)} -> {json.dumps(new, sort_keys=True)}\n")
    return 0


def cmd_merge(args, out) -> int:
    store = _open(args)
    result = store.merge(args.ours, args.theirs, args.strategy, branch=args.branch)
    if not result.ok:
        for c in result.conflicts:
            out.write(f"CONFLICT {c.key}: base={c.base!r} ours={c.ours!r} theirs={c.theirs!r}\n")
        raise CliError(f"{len(result.conflicts)} conflict(s)")
    out.write(result.checkpoint + "\n")
    return 0


def _load_spec(path: str, registry):
    try:
        return load_workflow(Path(path).read_bytes(), registry)
    except OSError as exc:
        raise CliError(f"cannot read workflow: {exc}") from exc


def cmd_run(args, out) -> int:
    store = _init(args)
    registry = _registry(args)
    spec = _load_spec(args.workflow, registry)
    engine = Engine(store, registry, deterministic=args.no_timestamps)
    policy = RecoveryPolicy(args.policy, args.max_retries)
    try:
        result = engine.run_path(spec, args.choices, args.from_ref, policy, branch=args.branch)
    except RunFailed as exc:
        raise CliError(str(exc)) from exc
    out.write(f"leaf={result.leaf} steps={result.steps_executed} tokens={result.tokens_in + result.tokens_out}\n")
    return 0


def cmd_sweep(args, out) -> int:
    store = _init(args)
    registry = _registry(args)
    spec = _load_spec(args.workflow, registry)
    plan = SweepPlan(spec, args.strategy, args.parallelism)
    result = run_sweep(store, plan, registry, deterministic=args.no_timestamps)
    if args.out:
        Path(args.out).write_bytes(result.dumps() + b"\n")
    acct = result.accounting
    out.write(f"leaves={len(result.ok_leaves)} steps={acct.steps_executed} tokens={acct.tokens}\n")
    if result.failed_leaves:
        for leaf in result.failed_leaves:
            sys.stderr.write(f"failed leaf {leaf.choices}: {leaf.reason}\n")
        raise CliError(f"{len(result.failed_leaves)} leaves failed")
    return 0


def cmd_verify(args, out) -> int:
    if len(args.report) < 1:
        raise CliError("at least one --report is required")
    reports = [SweepResult.loads(Path(p).read_bytes()) for p in args.report]
    xs = {tuple(r.x) for r in reports}
    if len(xs) != 1:
        raise CliError("incomparable reports: option vectors differ " + " vs ".join(str(list(x)) for x in xs))
    report = verify_formulas(reports, list(xs.pop()))
    out.write(report.table() + "\n")
    for v in report.violations:
        out.write(f"VIOLATION {v}\n")
    return 0 if report.ok else 1


def cmd_curves(args, out) -> int:
    try:
        data = metrics.emit_curves(args.alphas, args.n_max)
    except ValueError as exc:
        args.parser.error(str(exc))
    _write(args.out, data, out)
    return 0


def cmd_stats(args, out) -> int:
    store = _open(args)
    journals: dict[str, list[Path]] = {}
    jdir = store.root / "journals"
    for path in sorted(jdir.glob("*.jsonl")) if jdir.is_dir() else []:
        if path.name.startswith("sweep-standard"):
            key = "standard"
        elif path.name.startswith("sweep-rollback"):
            key = "rollback"
        else:
            key = "runs"
        journals.setdefault(key, []).append(path)
    sweeps = [SweepResult.loads(Path(p).read_bytes()) for p in args.report or ()]
    report = metrics.build_run_report(journals, sweeps)
    out.write(report.dumps().decode("utf-8") + "\n")
    return 0 if not report.flags else 1


def cmd_replay(args, out) -> int:
    store = _open(args)
    registry = _registry(args)
    spec = _load_spec(args.workflow, registry)
    report = Engine(store, registry, deterministic=True).replay(args.leaf, spec)
    for layer in report.layers:
        note = f" ({layer.note})" if layer.note else ""
        out.write(f"step={layer.step_index} {layer.checkpoint[:12]} {layer.status}{note}\n")
    return 0 if report.ok else 1


# -- parser -----------------------------------------------------------------------------


def _add_fixture_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fixtures", help="fixture directory for llm-chat / arxiv executors")
    p.add_argument("--fixture-mode", choices=("replay", "record", "off"), default="replay")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agentgit", description=__doc__.splitlines()[0])
    parser.add_argument("--store", help=f"store root (default ${STORE_ENV} or {DEFAULT_STORE})")
    parser.add_argument(
        "--no-timestamps",
        action="store_true",
        help="fixed timestamps, wall times and run ids for byte-stable output",
    )
    # --no-timestamps is also accepted after the subcommand name.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--no-timestamps", action="store_true", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", parents=[common], help="create a store")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("commit", parents=[common], help="commit a state document")
    p.add_argument("--state", required=True, help="JSON file, or - for stdin")
    p.add_argument("--branch")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--parent")
    group.add_argument("--root", action="store_true")
    p.add_argument("-m", "--message")
    p.set_defaults(func=cmd_commit)

    p = sub.add_parser("checkout", parents=[common], help="print the state at a checkpoint or branch")
    p.add_argument("ref")
    p.set_defaults(func=cmd_checkout)

    p = sub.add_parser("branch", parents=[common], help="list or create branches")
    p.add_argument("name", nargs="?")
    p.add_argument("--from", dest="from_ref")
    p.set_defaults(func=cmd_branch)

    p = sub.add_parser("log", parents=[common], help="list checkpoints")
    p.add_argument("--graph", action="store_true")
    p.set_defaults(func=cmd_log)

    p = sub.add_parser("diff", parents=[common], help="key-path diff between two checkpoints")
    p.add_argument("base")
    p.add_argument("target")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("merge", parents=[common], help="three-way merge theirs into ours")
    p.add_argument("ours")
    p.add_argument("theirs")
    p.add_argument("--strategy", choices=MERGE_STRATEGIES, default="fail-on-conflict")
    p.add_argument("--branch")
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("run", parents=[common], help="run one path through a workflow")
    p.add_argument("--workflow", required=True)
    p.add_argument("--choices", required=True, type=_int_list)
    p.add_argument("--from", dest="from_ref")
    p.add_argument("--policy", choices=RECOVERY_MODES, default="none")
    p.add_argument("--max-retries", type=int, default=0)
    p.add_argument("--branch", default="main")
    _add_fixture_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", parents=[common], help="run the full option tree")
    p.add_argument("--workflow", required=True)
    p.add_argument("--strategy", choices=STRATEGIES, default="rollback")
    p.add_argument("--parallelism", type=_positive, default=1)
    p.add_argument("--out", help="sweep report path")
    _add_fixture_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", parents=[common], help="check sweep reports against the step-count formulas")
    p.add_argument("--report", action="append", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("curves", parents=[common], help="emit the step-count / efficiency curve CSV")
    p.add_argument("--alphas", type=_int_list, default=[2, 3, 4, 5])
    p.add_argument("--n-max", type=_positive, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_curves, parser=p)

    p = sub.add_parser("stats", parents=[common], help="aggregate journals into a run report")
    p.add_argument("--report", action="append", help="sweep report(s) to cross-check")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("replay", parents=[common], help="re-execute a leaf's path and compare state hashes")
    p.add_argument("--workflow", required=True)
    p.add_argument("leaf")
    _add_fixture_flags(p)
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, out)
    except (CliError, StoreError, WorkflowError, ExecutorError, ValueError, OSError) as exc:
        sys.stderr.write(f"agentgit: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
