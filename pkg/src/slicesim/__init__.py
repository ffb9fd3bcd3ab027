"""Deterministic network-slicing simulator with an agent-style controller.

The control loop mirrors a perceive/remember/plan/act cycle: requests are
parsed into observations, matched against remembered outcomes, pushed through
a five-step planning workflow (intent understanding, user registration, slice
optimization, QoS evaluation, slice handover), and applied to the slice
ledgers through validated tools.
"""

from .domain import (
    EMBB,
    URLLC,
    NetworkState,
    Position,
    RateRange,
    SliceConfig,
    SliceLedger,
    default_slice_configs,
    fresh_state,
    rbs_for_rate,
)
from .harness import (
    ConfigError,
    Scenario,
    ScenarioMismatch,
    SimConfig,
    compare,
    emit_csv,
    emit_plot,
    gen_scenario,
    read_csv,
    run,
)
from .memory import MemoryStore, StateKey, make_key
from .perception import Observation, RawRequest, observe, parse_request
from .planning import (
    HandoverPlan,
    IntentCatalog,
    Outcome,
    PlanState,
    PlanTrace,
    QosIntent,
    WorkflowConfig,
    default_catalog,
    evaluate_qos,
    optimize,
    plan_handover,
    register,
    run_workflow,
    understand_intent,
)
from .tools import ChannelModel, apply_handover, gen_channel, rate_cap, zf_precoder

__version__ = "0.1.0"

__all__ = [
    "EMBB", "URLLC", "NetworkState", "Position", "RateRange", "SliceConfig",
    "SliceLedger", "default_slice_configs", "fresh_state", "rbs_for_rate",
    "ConfigError", "Scenario", "ScenarioMismatch", "SimConfig", "compare",
    "emit_csv", "emit_plot", "gen_scenario", "read_csv", "run",
    "MemoryStore", "StateKey", "make_key",
    "Observation", "RawRequest", "observe", "parse_request",
    "HandoverPlan", "IntentCatalog", "Outcome", "PlanState", "PlanTrace",
    "QosIntent", "WorkflowConfig", "default_catalog", "evaluate_qos",
    "optimize", "plan_handover", "register", "run_workflow", "understand_intent",
    "ChannelModel", "apply_handover", "gen_channel", "rate_cap", "zf_precoder",
    "__version__",
]
