"""
Regenerate demos/fixtures
=========================

Runs the literature-report sweep against stand-in services in record mode.
Swap ``FakeServices`` for the default transport (and set OPENAI_API_KEY) to
record real responses instead.
"""

import shutil
import sys
import tempfile
from pathlib import Path

here = Path(__file__).parent
sys.path.insert(0, str(here.parent / "tests"))

from fakes import FakeServices  # noqa: E402

from agentgit import SweepPlan, default_registry, init_store, load_workflow, run_sweep  # noqa: E402
from agentgit.executors import FixtureStore, LlmEndpointConfig  # noqa: E402

target = here / "fixtures"
shutil.rmtree(target, ignore_errors=True)
config = LlmEndpointConfig(base_url="http://llm.invalid/v1")
registry = default_registry(FixtureStore(target, "record"), config, FakeServices())
spec = load_workflow((here / "experiment.json").read_bytes(), registry)
result = run_sweep(init_store(tempfile.mkdtemp() + "/store"), SweepPlan(spec, "rollback"), registry)
print("recorded", sum(1 for _ in target.rglob("*.json")), "fixtures for", len(result.ok_leaves), "leaves")
