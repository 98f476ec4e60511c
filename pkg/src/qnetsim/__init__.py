"""Event-driven queueing-network control simulator and benchmark harness."""

from .bench import (
    EvaluationReport,
    TrajectoryMetrics,
    evaluate,
    make_policy,
    run_trajectory,
)
from .config import EnvConfig, load_config, loads_config, to_network_spec
from .engine import (
    Arrival,
    Completion,
    Horizon,
    InfeasibleAction,
    Job,
    Observation,
    SimState,
    Simulator,
    StepOutcome,
)
from .instances import builtin_instances, get_instance
from .network import (
    ArrivalSpec,
    NetworkSpec,
    ServiceSpec,
    make_spec,
    sample_interarrival,
    sample_workload,
    validate,
)
from .policies import (
    assign,
    priority_cmu,
    priority_maxpressure,
    priority_maxweight,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
