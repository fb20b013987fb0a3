"""
Prompt A/B sweep over recorded responses
========================================

The literature-report workflow (search, then introduction / analysis /
discussion each written with a chain-of-thought or a few-shot prompt) swept
over all 8 prompt combinations. Responses come from the fixtures directory,
so nothing touches the network. Re-record with ``record_fixtures.py``, or
point the fixtures at a live endpoint with ``--fixture-mode record``.
"""

import tempfile
from pathlib import Path

from agentgit import Engine, SweepPlan, default_registry, init_store, load_workflow, run_sweep
from agentgit.executors import FixtureStore, LlmEndpointConfig

here = Path(__file__).parent
config = LlmEndpointConfig(base_url="http://llm.invalid/v1")
registry = default_registry(FixtureStore(here / "fixtures", "replay"), config)
spec = load_workflow((here / "experiment.json").read_bytes(), registry)

store = init_store(tempfile.mkdtemp() + "/store")
result = run_sweep(store, SweepPlan(spec, "rollback"), registry)
print("steps:", result.accounting.steps_executed, "tokens:", result.accounting.tokens)

engine = Engine(store, registry)
for leaf in result.ok_leaves:
    labels = [spec.steps[i].options[k].name for i, k in enumerate(leaf.choices)]
    state = store.checkout(leaf.checkpoint)
    replay = engine.replay(leaf.checkpoint, spec)
    print(" / ".join(labels[1:]), "->", state["artifacts"]["discussion"][:40], "replay ok" if replay.verified else "REPLAY MISMATCH")
