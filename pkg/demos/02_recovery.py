"""
Failure recovery and resuming
=============================

A step that fails rolls back to the last good checkpoint and tries another
option. A finished run can be resumed from any intermediate checkpoint.
"""

import json
import tempfile

from agentgit import Engine, RecoveryPolicy, default_registry, init_store, load_workflow

registry = default_registry()
store = init_store(tempfile.mkdtemp() + "/store")
engine = Engine(store, registry)

doc = {
    "name": "flaky",
    "initial": {"env": {"task": "demo"}},
    "steps": [
        {"name": "search", "options": [{"name": "arxiv", "executor": "mock", "params": {"option_label": "search"}}]},
        {"name": "draft", "options": [
            # the preferred option always fails
            {"name": "cot", "executor": "mock", "params": {"option_label": "cot", "fail": True}},
            {"name": "few-shot", "executor": "mock", "params": {"option_label": "few-shot"}},
        ]},
        {"name": "polish", "options": [{"name": "edit", "executor": "mock", "params": {"option_label": "edit"}}]},
    ],
}
spec = load_workflow(json.dumps(doc), registry)

run = engine.run_path(spec, [0, 0, 0], policy=RecoveryPolicy("next-option"))
print("choices taken:", run.choices)  # [0, 1, 0]
print("executor calls:", run.steps_executed)  # one failed attempt plus three good steps
print("checkpoints:", len(store.checkpoints()))  # the failed attempt never became one

# resume from the checkpoint after "draft": only "polish" runs again
resumed = engine.run_path(spec, [0], start=run.checkpoints[1])
print("steps on resume:", resumed.steps_executed)
