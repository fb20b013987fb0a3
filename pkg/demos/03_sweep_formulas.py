"""
Full-factorial sweeps
=====================

Run every option combination of a 4-step workflow with both strategies and
check the observed step counts against the closed forms.
"""

import tempfile
from pathlib import Path

from agentgit import SweepPlan, default_registry, init_store, load_workflow, run_sweep, verify_formulas

here = Path(__file__).parent
registry = default_registry()
spec = load_workflow((here / "experiment_mock.json").read_bytes(), registry)
print("option vector:", spec.x)

results = []
for strategy in ("standard", "rollback"):
    store = init_store(tempfile.mkdtemp() + "/store")
    result = run_sweep(store, SweepPlan(spec, strategy, parallelism=4), registry)
    acct = result.accounting
    print(f"{strategy:9s} leaves={len(result.ok_leaves)} steps={acct.steps_executed} tokens={acct.tokens}")
    results.append(result)

print("same leaves:", results[0].leaf_hashes == results[1].leaf_hashes)
print(verify_formulas(results, spec.x).table())
