"""Git-style commit, rollback, branch and merge for multi-step agent workflows."""

from .canonical import CanonicalError, canonical_serialize, parse, state_hash
from .docdiff import ABSENT, Conflict, Diff, MergeResult, apply_diff, diff_states, three_way_merge
from .executors import Registry, StepOutcome, default_registry
from .metrics import CurvePoint, RunReport, build_run_report, curve_point, emit_curves
from .store import (
    BranchRef,
    Checkpoint,
    StepAccounting,
    Store,
    StoreError,
    init_store,
    open_store,
)
from .sweep import (
    Accounting,
    FormulaReport,
    SweepPlan,
    SweepResult,
    efficiency,
    efficiency_per_step_limit,
    enumerate_leaves,
    predicted_leaf_count,
    predicted_steps_rollback,
    predicted_steps_standard,
    run_sweep,
    verify_formulas,
)
from .workflow import (
    Engine,
    OptionSpec,
    RecoveryPolicy,
    RunFailed,
    RunResult,
    StepSpec,
    WorkflowSpec,
    execute_step,
    load_workflow,
    mock_workflow,
    recover,
)

__version__ = "0.1.0"
