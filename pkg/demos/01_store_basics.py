"""
Checkpoints, branches and merges
================================

Commit a few state documents, branch off an earlier checkpoint, roll back,
and merge the two lines of work.
"""

import tempfile

from agentgit import init_store

store = init_store(tempfile.mkdtemp() + "/store")

# a root checkpoint and two steps on main
root = store.commit(None, {"env": {"model": "gpt-4o-mini"}, "artifacts": {}}, "main", "root")
intro = store.commit(root, {"env": {"model": "gpt-4o-mini"}, "artifacts": {"intro": "draft 1"}}, "main", "intro")
store.commit(intro, {"env": {"model": "gpt-4o-mini"}, "artifacts": {"intro": "draft 2"}}, "main", "revise")

# roll back to the root: nothing after it is deleted
print("state at root:", store.checkout(root))
print("checkpoints still stored:", len(store.checkpoints()))

# explore a different setting from the root on its own branch
store.create_branch("exp/temperature", root)
warm = store.commit(root, {"env": {"model": "gpt-4o-mini", "temperature": 0.7}, "artifacts": {}}, "exp/temperature")

print("diff main..exp:", store.diff(store.branch_head("main"), warm).to_json())

result = store.merge("main", "exp/temperature")
print("merged state:", store.checkout(result.checkpoint))
print("merge recorded theirs:", store.get(result.checkpoint).merged_from == warm)
