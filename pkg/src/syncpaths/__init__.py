"""Synced parallel control paths: bumpless switching between control modes.

Typical use::

    from syncpaths import builtin_example, run_comparison
    sync, nosync = run_comparison(builtin_example("example1"))
"""
from .closed_loop import ClosedLoop, PlantCascade, Trace, run_comparison, simulate
from .controller import PathConfig, PathState, SyncedController, augment_integrator, path_drive_input
from .gating import GateSchedule, GateSet, gate_set_at, gate_value, transitions_in
from .lti import (
    NumericFailure,
    PIParams,
    RationalTransferFunction,
    StateSpaceModel,
    analytic_step_response,
    dc_gain,
    realize,
    rk4_step,
    step_response,
)
from .metrics import switch_bumps, tracking_metrics
from .scenario import Scenario, ScenarioError, SimConfig, builtin_example, parse_scenario, serialize_scenario
from .traceio import emit_trace_csv, read_trace_csv

__version__ = "0.1.0"
