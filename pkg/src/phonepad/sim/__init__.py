from .report import CompareResult, ShapeMismatch, StatsReport, compare_reports
from .scenario import ConfigInvalid, ScenarioConfig, run_scenario
from .trace import gen_trace

__all__ = ["ScenarioConfig", "ConfigInvalid", "run_scenario", "gen_trace",
           "StatsReport", "CompareResult", "ShapeMismatch", "compare_reports"]
