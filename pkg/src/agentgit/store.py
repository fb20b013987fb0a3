"""Content-addressed checkpoint store.

On-disk layout under the store root::

    store.meta                      {"format_version":1}
    HEAD                            current branch name
    objects/st/<ab>/<digest>        canonical state documents
    objects/cp/<ab>/<digest>        canonical checkpoint records
    refs/branches/<name>            64-hex head id + newline

Objects are write-once (temp file + rename). Branch heads are updated under
a ``<ref>.lock`` file created with ``O_EXCL``, which doubles as the
compare-and-swap guard for concurrent committers.
"""

from __future__ import annotations

import copy
import errno
import os
import re
import tempfile
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterator

from .canonical import canonical_serialize, parse, sha256_hex
from .docdiff import Diff, MergeResult, diff_states, three_way_merge

FORMAT_VERSION = 1
DEFAULT_BRANCH = "main"

_BRANCH_RE = re.compile(r"[A-Za-z0-9._/-]+")
_HEX64 = re.compile(r"[0-9a-f]{64}")


class StoreError(Exception):
    """Base class for store failures."""


class NotAStoreError(StoreError):
    pass


class UnknownCheckpointError(StoreError, KeyError):
    def __init__(self, ref: str):
        self.ref = ref
        StoreError.__init__(self, f"unknown checkpoint {ref}")

    def __str__(self) -> str:
        return self.args[0]


class BranchError(StoreError):
    pass


class SerializationConflict(StoreError):
    """Another committer won the race for a branch head; retry."""


class CorruptObjectError(StoreError):
    pass


class NoCommonAncestorError(StoreError):
    pass


@dataclass(frozen=True)
class StepAccounting:
    tokens_in: int = 0
    tokens_out: int = 0
    wall_ms: int = 0
    attempts: int = 1

    @classmethod
    def from_json(cls, data: dict[str, Any] | None) -> StepAccounting | None:
        return None if data is None else cls(**data)


@dataclass(frozen=True)
class Checkpoint:
    id: str
    parent: str | None
    state_hash: str
    step_index: int
    option_taken: int | None
    branch: str
    created_at: str
    message: str
    accounting: StepAccounting | None = None
    merged_from: str | None = None

    def record(self) -> dict[str, Any]:
        data = asdict(self)
        del data["id"]
        return data


@dataclass(frozen=True)
class BranchRef:
    name: str
    head: str


def validate_branch_name(name: str) -> None:
    ok = (
        isinstance(name, str)
        and _BRANCH_RE.fullmatch(name) is not None
        and not name.startswith("-")
        and not name.endswith((".lock", "/"))
        and all(part not in ("", ".", "..") for part in name.split("/"))
    )
    if not ok:
        raise BranchError(f"invalid branch name {name!r}")


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def _write_once(path: Path, data: bytes) -> bool:
    """Write ``data`` to ``path`` unless it exists. Returns True if written."""
    if path.exists():
        return False
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return True


def init_store(root: str | os.PathLike, **kwargs: Any) -> Store:
    """Create a store at ``root`` or open the one already there."""
    root = Path(root)
    if root.exists():
        if not root.is_dir():
            raise NotAStoreError(f"not a store root: {root}")
        if (root / "store.meta").exists():
            return Store(root, **kwargs)
        if any(root.iterdir()):
            raise NotAStoreError(f"not a store root: {root}")
    for sub in ("objects/st", "objects/cp", "refs/branches"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    (root / "HEAD").write_text(DEFAULT_BRANCH + "\n")
    _write_once(root / "store.meta", canonical_serialize({"format_version": FORMAT_VERSION}))
    return Store(root, **kwargs)


def open_store(root: str | os.PathLike, **kwargs: Any) -> Store:
    return Store(Path(root), **kwargs)


class Store:
    """Handle on an initialized store directory.

    ``clock`` returns the ``created_at`` string for new checkpoints; pass
    ``lambda: ""`` for byte-stable ids in tests.
    """

    def __init__(self, root: Path, clock: Callable[[], str] | None = None):
        self.root = Path(root)
        meta = self.root / "store.meta"
        if not meta.is_file():
            raise NotAStoreError(f"not a store: {self.root}")
        version = parse(meta.read_bytes()).get("format_version")
        if version != FORMAT_VERSION:
            raise NotAStoreError(f"unsupported store format {version!r}")
        self.clock = clock or _utc_now

    def __repr__(self) -> str:
        return f"Store({str(self.root)!r})"

    # -- objects ---------------------------------------------------------

    def _object_path(self, kind: str, digest: str) -> Path:
        return self.root / "objects" / kind / digest[:2] / digest

    def _iter_objects(self, kind: str) -> Iterator[str]:
        base = self.root / "objects" / kind
        for prefix in sorted(base.iterdir()):
            for obj in sorted(prefix.iterdir()):
                if _HEX64.fullmatch(obj.name):
                    yield obj.name

    def put_state(self, state: dict[str, Any]) -> str:
        data = canonical_serialize(state)
        digest = sha256_hex(data)
        _write_once(self._object_path("st", digest), data)
        return digest

    def state_bytes(self, digest: str) -> bytes:
        """Raw stored bytes of a state blob, without integrity checks."""
        path = self._object_path("st", digest)
        if not path.is_file():
            raise CorruptObjectError(f"missing state blob {digest}")
        return path.read_bytes()

    def state_blobs(self) -> list[str]:
        return list(self._iter_objects("st"))

    # -- checkpoints -----------------------------------------------------

    def get(self, ref: str) -> Checkpoint:
        cid = self.resolve(ref)
        data = self._object_path("cp", cid).read_bytes()
        if sha256_hex(data) != cid:
            raise CorruptObjectError(f"checkpoint {cid} does not match its digest")
        record = parse(data)
        record["accounting"] = StepAccounting.from_json(record.get("accounting"))
        return Checkpoint(id=cid, **record)

    def exists(self, cid: str) -> bool:
        return bool(_HEX64.fullmatch(cid or "")) and self._object_path("cp", cid).is_file()

    def checkpoints(self) -> list[str]:
        return list(self._iter_objects("cp"))

    def resolve(self, ref: str) -> str:
        """Resolve a full id, a branch name, or a unique id prefix (>= 4 chars)."""
        if self.exists(ref):
            return ref
        try:
            validate_branch_name(ref)
            path = self._ref_path(ref)
            if path.is_file():
                return path.read_text().strip()
        except BranchError:
            pass
        if isinstance(ref, str) and 4 <= len(ref) < 64 and re.fullmatch(r"[0-9a-f]+", ref):
            prefix_dir = self.root / "objects" / "cp" / ref[:2]
            if prefix_dir.is_dir():
                hits = [p.name for p in prefix_dir.iterdir() if p.name.startswith(ref)]
                if len(hits) == 1:
                    return hits[0]
        raise UnknownCheckpointError(ref)

    def checkout(self, ref: str) -> dict[str, Any]:
        """Return the state committed at ``ref``. The store is not modified."""
        cp = self.get(ref)
        data = self.state_bytes(cp.state_hash)
        if sha256_hex(data) != cp.state_hash:
            raise CorruptObjectError(f"state blob {cp.state_hash} is corrupt")
        return parse(data)

    def commit(
        self,
        parent: str | None,
        state: dict[str, Any],
        branch: str = DEFAULT_BRANCH,
        message: str = "",
        option_taken: int | None = None,
        accounting: StepAccounting | None = None,
        *,
        merged_from: str | None = None,
        expected_head: str | None = None,
    ) -> str:
        """Write a checkpoint and move ``branch`` to it.

        A non-root commit needs ``branch`` to exist; a root commit creates it.
        With ``expected_head`` the branch head must still equal it.
        """
        validate_branch_name(branch)
        if parent is not None:
            parent_cp = self.get(parent)
            parent = parent_cp.id
            step_index = parent_cp.step_index + 1
            if not self._ref_path(branch).is_file():
                raise BranchError(f"unknown branch {branch!r}")
        else:
            step_index = 0

        with self._ref_lock(branch) as lock:
            current = self._read_ref(branch)
            if expected_head is not None and current != expected_head:
                raise SerializationConflict(
                    f"branch {branch!r} moved: expected {expected_head[:12]}, found {str(current)[:12]}"
                )
            state_digest = self.put_state(state)
            record = Checkpoint(
                id="",
                parent=parent,
                state_hash=state_digest,
                step_index=step_index,
                option_taken=option_taken,
                branch=branch,
                created_at=self.clock(),
                message=message,
                accounting=accounting,
                merged_from=merged_from,
            ).record()
            data = canonical_serialize(record)
            cid = sha256_hex(data)
            _write_once(self._object_path("cp", cid), data)
            lock.write(cid)
        return cid

    # -- refs ------------------------------------------------------------

    def _ref_path(self, name: str) -> Path:
        return self.root / "refs" / "branches" / name

    def _read_ref(self, name: str) -> str | None:
        path = self._ref_path(name)
        return path.read_text().strip() if path.is_file() else None

    def _ref_lock(self, name: str) -> _RefLock:
        return _RefLock(self._ref_path(name), name)

    def branches(self) -> list[BranchRef]:
        base = self.root / "refs" / "branches"
        refs = []
        for path in base.rglob("*"):
            if path.is_file() and not path.name.endswith(".lock"):
                name = path.relative_to(base).as_posix()
                refs.append(BranchRef(name, path.read_text().strip()))
        return sorted(refs, key=lambda r: r.name)

    def branch_head(self, name: str) -> str:
        head = self._read_ref(name)
        if head is None:
            raise BranchError(f"unknown branch {name!r}")
        return head

    def create_branch(self, name: str, from_ref: str) -> BranchRef:
        validate_branch_name(name)
        cid = self.resolve(from_ref)
        if not self.exists(cid):
            raise UnknownCheckpointError(from_ref)
        if self._ref_path(name).exists():
            raise BranchError(f"branch {name!r} already exists")
        with self._ref_lock(name) as lock:
            if self._ref_path(name).exists():
                raise BranchError(f"branch {name!r} already exists")
            lock.write(cid)
        return BranchRef(name, cid)

    @property
    def head_branch(self) -> str:
        return (self.root / "HEAD").read_text().strip()

    def set_head_branch(self, name: str) -> None:
        self.branch_head(name)
        tmp = self.root / "HEAD.tmp"
        tmp.write_text(name + "\n")
        os.replace(tmp, self.root / "HEAD")

    # -- history ---------------------------------------------------------

    def ancestry(self, ref: str) -> list[str]:
        """Checkpoint ids from the root down to ``ref``."""
        chain = []
        cid: str | None = self.resolve(ref)
        while cid is not None:
            chain.append(cid)
            cid = self.get(cid).parent
        chain.reverse()
        return chain

    def children_index(self) -> dict[str, list[str]]:
        index: dict[str, list[str]] = {}
        for cid in self.checkpoints():
            parent = self.get(cid).parent
            if parent is not None:
                index.setdefault(parent, []).append(cid)
        return index

    def children(self, ref: str) -> list[str]:
        return self.children_index().get(self.resolve(ref), [])

    def lowest_common_ancestor(self, a: str, b: str) -> str:
        path_a, path_b = self.ancestry(a), self.ancestry(b)
        lca = None
        for x, y in zip(path_a, path_b):
            if x != y:
                break
            lca = x
        if lca is None:
            raise NoCommonAncestorError(f"no common ancestor for {a} and {b}")
        return lca

    def diff(self, base: str, target: str) -> Diff:
        return diff_states(self.checkout(base), self.checkout(target))

    def merge(
        self,
        ours: str,
        theirs: str,
        strategy: str = "fail-on-conflict",
        *,
        branch: str | None = None,
        message: str | None = None,
    ) -> MergeResult:
        """Three-way merge of ``theirs`` into ``ours``.

        On success a checkpoint is committed with ``ours`` as its parent and
        ``theirs`` recorded in ``merged_from``; history stays a tree.
        """
        ours_id, theirs_id = self.resolve(ours), self.resolve(theirs)
        base_id = self.lowest_common_ancestor(ours_id, theirs_id)
        result = three_way_merge(
            self.checkout(base_id),
            self.checkout(ours_id),
            self.checkout(theirs_id),
            strategy,
        )
        if result.merged is None:
            return result
        if branch is None:
            branch = next(
                (r.name for r in self.branches() if r.head == ours_id),
                self.get(ours_id).branch,
            )
        result.checkpoint = self.commit(
            ours_id,
            copy.deepcopy(result.merged),
            branch=branch,
            message=message or f"merge {theirs_id[:12]} into {ours_id[:12]}",
            merged_from=theirs_id,
        )
        return result


class _RefLock:
    """``<ref>.lock`` guard; ``write`` stages the new head, exit publishes it."""

    def __init__(self, ref_path: Path, name: str):
        self.ref_path = ref_path
        self.name = name
        self.lock_path = ref_path.with_name(ref_path.name + ".lock")
        self._value: str | None = None

    def __enter__(self) -> _RefLock:
        try:
            self.lock_path.parent.mkdir(parents=True, exist_ok=True)
        except (FileExistsError, NotADirectoryError):
            raise BranchError(f"branch {self.name!r} collides with an existing ref") from None
        try:
            fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o644)
        except OSError as exc:
            if exc.errno == errno.EEXIST:
                raise SerializationConflict(
                    f"branch {self.name!r} is locked by another committer"
                ) from None
            raise
        os.close(fd)
        return self

    def write(self, head: str) -> None:
        self._value = head

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is None and self._value is not None:
            self.lock_path.write_text(self._value + "\n")
            os.replace(self.lock_path, self.ref_path)
        else:
            os.unlink(self.lock_path)
