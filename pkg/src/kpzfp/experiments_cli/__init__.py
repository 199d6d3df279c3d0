"""Experiment specs, runners, result tables and the command-line driver."""

from .runners import OPS, run_spec
from .spec import ExperimentSpec, load_spec, parse_spec
from .table import ResultTable, emit_plotdata

__all__ = ["OPS", "run_spec", "ExperimentSpec", "load_spec", "parse_spec", "ResultTable",
           "emit_plotdata"]
