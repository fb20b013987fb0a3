"""Key-path diff and three-way merge over state documents.

Documents are flattened to ``{key_path: value}`` where a key path is a tuple
of map keys. Lists, scalars and empty maps are atomic leaves; list values are
never merged element-wise.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any

KeyPath = tuple[str, ...]

MERGE_STRATEGIES = ("fail-on-conflict", "prefer-ours", "prefer-theirs")


class _Absent:
    """Marker for a key path that does not exist on one side."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "<absent>"

    def __reduce__(self):
        return (_Absent, ())


ABSENT: Any = _Absent()


def dotted(path: KeyPath) -> str:
    return ".".join(path)


def flatten(doc: dict[str, Any], prefix: KeyPath = ()) -> dict[KeyPath, Any]:
    flat: dict[KeyPath, Any] = {}
    for key, value in doc.items():
        path = prefix + (key,)
        if isinstance(value, dict) and value:
            flat.update(flatten(value, path))
        else:
            flat[path] = value
    return flat


def unflatten(flat: dict[KeyPath, Any]) -> dict[str, Any]:
    doc: dict[str, Any] = {}
    # Shorter paths first so an empty-map leaf never shadows a deeper key.
    for path in sorted(flat, key=len):
        node = doc
        for key in path[:-1]:
            child = node.get(key)
            if not isinstance(child, dict):
                child = node[key] = {}
            node = child
        leaf = path[-1]
        value = flat[path]
        if isinstance(value, dict) and not value and isinstance(node.get(leaf), dict):
            continue
        node[leaf] = copy.deepcopy(value)
    return doc


def lookup(doc: dict[str, Any], path: KeyPath) -> Any:
    node: Any = doc
    for key in path:
        if not isinstance(node, dict) or key not in node:
            return ABSENT
        node = node[key]
    return node


@dataclass
class Diff:
    added: dict[KeyPath, Any] = field(default_factory=dict)
    removed: dict[KeyPath, Any] = field(default_factory=dict)
    changed: dict[KeyPath, tuple[Any, Any]] = field(default_factory=dict)

    @property
    def is_empty(self) -> bool:
        return not (self.added or self.removed or self.changed)

    def to_json(self) -> dict[str, Any]:
        return {
            "added": {dotted(k): v for k, v in self.added.items()},
            "removed": {dotted(k): v for k, v in self.removed.items()},
            "changed": {dotted(k): [o, n] for k, (o, n) in self.changed.items()},
        }


def diff_states(base: dict[str, Any], target: dict[str, Any]) -> Diff:
    fb, ft = flatten(base), flatten(target)
    result = Diff()
    for path in sorted(fb.keys() | ft.keys()):
        old, new = fb.get(path, ABSENT), ft.get(path, ABSENT)
        if old is ABSENT:
            result.added[path] = new
        elif new is ABSENT:
            result.removed[path] = old
        elif not _same(old, new):
            result.changed[path] = (old, new)
    return result


def apply_diff(diff: Diff, base: dict[str, Any]) -> dict[str, Any]:
    flat = flatten(base)
    for path in diff.removed:
        flat.pop(path, None)
    for path, (_, new) in diff.changed.items():
        flat[path] = new
    flat.update(diff.added)
    return unflatten(flat)


def _same(a: Any, b: Any) -> bool:
    # bool/int and int/float compare equal in Python; the canonical form
    # does not treat true and 1 as the same value.
    if type(a) is bool or type(b) is bool:
        return type(a) is type(b) and a == b
    return a == b and _same_shape(a, b)


def _same_shape(a: Any, b: Any) -> bool:
    if isinstance(a, list) and isinstance(b, list):
        return all(_same(x, y) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return all(_same(a[k], b[k]) for k in a)
    return True


@dataclass(frozen=True)
class Conflict:
    path: KeyPath
    base: Any
    ours: Any
    theirs: Any

    @property
    def key(self) -> str:
        return dotted(self.path)

    def to_json(self) -> dict[str, Any]:
        def enc(v: Any) -> Any:
            return {"absent": True} if v is ABSENT else {"value": v}

        return {
            "key": self.key,
            "base": enc(self.base),
            "ours": enc(self.ours),
            "theirs": enc(self.theirs),
        }


@dataclass
class MergeResult:
    merged: dict[str, Any] | None
    conflicts: list[Conflict] = field(default_factory=list)
    checkpoint: str | None = None

    @property
    def ok(self) -> bool:
        return not self.conflicts


def _clashes(flat: dict[KeyPath, Any]) -> list[KeyPath]:
    """Paths holding a non-map value while deeper paths exist below them."""
    found = []
    for path, value in flat.items():
        if isinstance(value, dict):
            continue
        if any(len(p) > len(path) and p[: len(path)] == path for p in flat):
            found.append(path)
    return sorted(found)


def _drop_empty_map_parents(flat: dict[KeyPath, Any]) -> None:
    for path in [p for p, v in flat.items() if isinstance(v, dict) and not v]:
        if any(len(p) > len(path) and p[: len(path)] == path for p in flat):
            del flat[path]


def _map_paths(doc: dict[str, Any], prefix: KeyPath = ()) -> set[KeyPath]:
    found = set()
    for key, value in doc.items():
        if isinstance(value, dict):
            found.add(prefix + (key,))
            found |= _map_paths(value, prefix + (key,))
    return found


def _subtree(flat: dict[KeyPath, Any], prefix: KeyPath) -> dict[KeyPath, Any]:
    n = len(prefix)
    return {p: v for p, v in flat.items() if p[:n] == prefix}


def three_way_merge(
    base: dict[str, Any],
    ours: dict[str, Any],
    theirs: dict[str, Any],
    strategy: str = "fail-on-conflict",
) -> MergeResult:
    """Merge two descendants of ``base`` at key-path granularity."""
    if strategy not in MERGE_STRATEGIES:
        raise ValueError(f"unknown merge strategy {strategy!r}")
    fb, fo, ft = flatten(base), flatten(ours), flatten(theirs)
    merged: dict[KeyPath, Any] = {}
    conflicts: list[Conflict] = []

    for path in sorted(fb.keys() | fo.keys() | ft.keys()):
        b, o, t = fb.get(path, ABSENT), fo.get(path, ABSENT), ft.get(path, ABSENT)
        if _eq(o, t) or _eq(t, b):
            value = o
        elif _eq(o, b):
            value = t
        else:
            conflicts.append(Conflict(path, b, o, t))
            continue
        if value is not ABSENT:
            merged[path] = value

    # Map nodes follow the same rule on existence, so a map emptied by
    # deletions on both sides survives as {}.
    mb, mo, mt = _map_paths(base), _map_paths(ours), _map_paths(theirs)
    for path in sorted(mb | mo | mt):
        in_o, in_t = path in mo, path in mt
        keep = in_o if (in_o == in_t or in_t == (path in mb)) else in_t
        if keep and path not in merged and not any(path[:i] in merged for i in range(1, len(path))):
            merged[path] = {}
    _drop_empty_map_parents(merged)
    # One side replaced a map by a scalar while the other wrote inside it.
    for prefix in _clashes(merged):
        conflicts.append(
            Conflict(prefix, lookup(base, prefix), lookup(ours, prefix), lookup(theirs, prefix))
        )
    conflicts.sort(key=lambda c: c.path)

    if not conflicts:
        return MergeResult(unflatten(merged))
    if strategy == "fail-on-conflict":
        return MergeResult(None, conflicts)

    winner = fo if strategy == "prefer-ours" else ft
    for c in conflicts:
        for p in list(_subtree(merged, c.path)):
            del merged[p]
        merged.update(_subtree(winner, c.path))
    _drop_empty_map_parents(merged)
    # Resolving a key conflict can expose a fresh clash; settle it the same way.
    for prefix in _clashes(merged):
        for p in list(_subtree(merged, prefix)):
            del merged[p]
        merged.update(_subtree(winner, prefix))
    return MergeResult(unflatten(merged))


def _eq(a: Any, b: Any) -> bool:
    if a is ABSENT or b is ABSENT:
        return a is b
    return _same(a, b)
