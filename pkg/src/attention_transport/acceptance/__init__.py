"""Seeded acceptance suite."""
from .suite import SuiteConfig, generate_instance, run_suite, summary_lines, write_instances

__all__ = ["SuiteConfig", "generate_instance", "run_suite", "summary_lines", "write_instances"]
