"""Scenarios, hybrid localization, evaluation and the benchmark protocol."""

from .benchmark import (RUN_FIELDS, BenchReport, load_artifacts, run_benchmark,
                        run_once, summarize, write_report)
from .evaluation import associate, convergence_index, evaluate
from .hybrid import HybridResult, hybrid_localize
from .scenarios import (Doorway, Scenario, find_doorways, make_scenario,
                        make_scenarios, parse_scenario_name, scenario_name)

__all__ = [
    "RUN_FIELDS",
    "BenchReport",
    "Doorway",
    "HybridResult",
    "Scenario",
    "associate",
    "convergence_index",
    "evaluate",
    "find_doorways",
    "hybrid_localize",
    "load_artifacts",
    "make_scenario",
    "make_scenarios",
    "parse_scenario_name",
    "run_benchmark",
    "run_once",
    "scenario_name",
    "summarize",
    "write_report",
]
