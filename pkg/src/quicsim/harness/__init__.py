from quicsim.harness.apps import RoundRobinClient, SinkServer
from quicsim.harness.config import ExperimentConfig, parse_config_file
from quicsim.harness.experiment import (
    ExperimentRun,
    FlowTraceRecorder,
    SummaryReport,
    run_experiment,
)
from quicsim.harness.traces import emit_traces

__all__ = [
    "RoundRobinClient", "SinkServer", "ExperimentConfig", "parse_config_file",
    "ExperimentRun", "FlowTraceRecorder", "SummaryReport", "run_experiment",
    "emit_traces",
]
