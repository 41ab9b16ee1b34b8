"""Simulation harness: ingestion, the event loop, the flat oracle and reports."""

from .engine import (
    Delivery,
    MessageRecord,
    SimConfig,
    SimReport,
    SimulationError,
    compare_reports,
    data_path,
    measure_overhead,
    run,
    run_oracle,
)
from .formats import (
    FormatError,
    RuleSet,
    load_rules,
    load_topology,
    load_trace,
    parse_rules,
    serialize_rules,
    serialize_topology,
    topology_from_text,
)
from .kdd import stratified_sample, synth_kdd
from .synth import random_scenario, synth_flood_trace

__all__ = [
    "Delivery", "MessageRecord", "SimConfig", "SimReport", "SimulationError",
    "compare_reports", "data_path", "measure_overhead", "run", "run_oracle",
    "FormatError", "RuleSet", "load_rules", "load_topology", "load_trace", "parse_rules",
    "serialize_rules", "serialize_topology", "topology_from_text",
    "stratified_sample", "synth_kdd", "random_scenario", "synth_flood_trace",
]
