"""Executable coordination engine for EL attack graphs."""
from .engine import Engine, EngineConfig, Mode, RoundReport, RunResult, RunStatus
from .environment import (
    Alert,
    Environment,
    InteractiveSource,
    LiveConfig,
    LiveEnvironment,
    Reaction,
    Scenario,
    SimulatedEnvironment,
)
from .exec_state import ExecutionState, hat, partition_check, reset_nodes
from .graph_io import load_graph, loads_graph, dumps_graph, save_graph, to_dot
from .graph_model import (
    INFINITE,
    TOP,
    And,
    Graph,
    GraphError,
    LoopInfo,
    Node,
    NodeKind,
    Or,
    Watchpoint,
    activation,
    collapse,
    compute_loop_info,
    eval_expr,
    guarded_effect,
    logic,
    loop_count,
    loop_exit,
    validate,
)
from .trace import TraceEntry

__version__ = "0.1.0"

__all__ = [
    "Engine",
    "EngineConfig",
    "Mode",
    "RoundReport",
    "RunResult",
    "RunStatus",
    "Alert",
    "Environment",
    "InteractiveSource",
    "LiveConfig",
    "LiveEnvironment",
    "Reaction",
    "Scenario",
    "SimulatedEnvironment",
    "ExecutionState",
    "hat",
    "partition_check",
    "reset_nodes",
    "load_graph",
    "loads_graph",
    "dumps_graph",
    "save_graph",
    "to_dot",
    "INFINITE",
    "TOP",
    "And",
    "Graph",
    "GraphError",
    "LoopInfo",
    "Node",
    "NodeKind",
    "Or",
    "Watchpoint",
    "activation",
    "collapse",
    "compute_loop_info",
    "eval_expr",
    "guarded_effect",
    "logic",
    "loop_count",
    "loop_exit",
    "validate",
    "TraceEntry",
]
