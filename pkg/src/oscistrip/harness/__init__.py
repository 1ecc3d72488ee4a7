"""Configuration, experiment suites and the command-line entry point."""
from .config import ExperimentConfig, load_config, parse_config, shipped_config
from .suites import SUITES, Check, RunReport, run_suite

__all__ = ["Check", "ExperimentConfig", "RunReport", "SUITES", "load_config",
           "parse_config", "run_suite", "shipped_config"]
