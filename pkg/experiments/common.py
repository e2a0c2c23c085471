# experiments/common.py
from dataclasses import dataclass, field

import numpy as np

from engines.cascade import pulse_train
from model.trace import SignalTrace
from model.units import count_to_concentration

SECTION = "─" * 80


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""
    required: bool = False


@dataclass
class TraceOutput:
    """A trace in nM with the volume that turns it into molecules, plus optional standard errors (molecules)."""

    trace: SignalTrace
    volume: float
    stderr: np.ndarray | None = None


@dataclass
class RunResult:
    """What a runner produced: traces and tables to export, checks to report."""

    name: str
    traces: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def check(self, name, passed, detail, log, required=False):
        """Record a check; a failed required check fails the run, not only the report."""
        self.checks.append(Check(name, bool(passed), detail, required))
        severity = "INFO" if passed else ("ERROR" if required else "WARNING")
        log(f"{name}: {'ok' if passed else 'FAILED'} ({detail})", when=self.name, severity=severity)
        return passed

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed_required(self) -> list:
        return [c for c in self.checks if c.required and not c.passed]

    def add_counts(self, key, counts, volume, ts, stderr=None):
        """Store a molecule-count series as a trace."""
        trace = SignalTrace(count_to_concentration(np.asarray(counts, dtype=float), volume), ts, clamp=False)
        self.traces[key] = TraceOutput(trace, volume, stderr)


def symbol_inputs(scenario, layout, symbols, n, interval=None) -> dict:
    """Dose trace per source bit for a symbol sequence sent every `interval` seconds."""
    interval = interval or scenario.interval or scenario.horizon
    return {
        src.bit: pulse_train(
            symbols,
            src.bit,
            scenario.amplitude,
            scenario.duration,
            interval,
            n,
            scenario.ts,
            scenario.start,
            scenario.release_rate,
        )
        for src in layout.sources
    }


def within_standard_errors(mean, stderr, expected, sigmas=3.0, floor=0.0) -> np.ndarray:
    """Per-sample |mean - expected| <= sigmas * stderr + floor."""
    return np.abs(np.asarray(mean) - np.asarray(expected)) <= sigmas * np.asarray(stderr) + floor
