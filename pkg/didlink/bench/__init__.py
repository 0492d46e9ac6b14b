"""Benchmark harness: handshake scenarios, transfer comparison and reports."""

from .envelope import Envelope, unwrap_envelope, wrap_envelope
from .report import BenchReport, Summary, emit_report, load_report, summarize
from .scenarios import Scenario, ScenarioId, run_scenario, scenario
from .transfer import crossover, linear_fit, run_transfer_comparison
