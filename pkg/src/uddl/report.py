"""Trial reports and their on-disk text format.

A report file is deliberately plain: a ``uddl-report v1`` header line,
``#``-prefixed config-echo lines, one ``method<TAB>trial<TAB>accuracy`` row
per trial, then one ``method<TAB>mean<TAB>std`` summary row per method.
Accuracies are written with repr so parsing them back is lossless, and the
whole file is a pure function of the run's inputs (no timestamps), so
re-runs are byte-identical. Wall-clock time lives only on the in-memory
object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import FormatError

HEADER = "uddl-report v1"


@dataclass
class TrialReport:
    methods: list[str] = field(default_factory=list)
    trial_accuracies: dict[str, list[float]] = field(default_factory=dict)
    config_echo: dict[str, str] = field(default_factory=dict)
    runtime_seconds: float = 0.0

    def add(self, method: str, accuracy: float) -> None:
        if method not in self.trial_accuracies:
            self.methods.append(method)
            self.trial_accuracies[method] = []
        self.trial_accuracies[method].append(float(accuracy))

    def mean(self, method: str) -> float:
        values = self.trial_accuracies[method]
        return sum(values) / len(values)

    def std(self, method: str) -> float:
        values = self.trial_accuracies[method]
        m = self.mean(method)
        return math.sqrt(sum((v - m) ** 2 for v in values) / len(values))


def format_report(report: TrialReport) -> str:
    lines = [HEADER]
    for key in sorted(report.config_echo):
        lines.append(f"# {key} = {report.config_echo[key]}")
    for method in report.methods:
        for trial, accuracy in enumerate(report.trial_accuracies[method]):
            lines.append(f"{method}\t{trial}\t{accuracy!r}")
    for method in report.methods:
        lines.append(f"{method}\t{report.mean(method)!r}\t{report.std(method)!r}")
    return "\n".join(lines) + "\n"


def write_report(report: TrialReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_report(report))


def read_report(path) -> TrialReport:
    """Parse a report file back; summary rows are recomputed, not trusted."""
    report = TrialReport()
    summaries: dict[str, tuple[float, float]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if first != HEADER:
            raise FormatError(f"{path}: expected header {HEADER!r}, got {first!r}")
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                key, _, value = body.partition("=")
                report.config_echo[key.strip()] = value.strip()
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(f"{path}: malformed row {line!r}")
            method, second, third = parts
            try:
                trial = int(second)
            except ValueError:
                summaries[method] = (float(second), float(third))
                continue
            expected = len(report.trial_accuracies.get(method, []))
            if trial != expected:
                raise FormatError(f"{path}: trial rows for {method} out of order")
            report.add(method, float(third))
    for method, (mean, std) in summaries.items():
        if method not in report.trial_accuracies:
            raise FormatError(f"{path}: summary row for unknown method {method}")
        if not math.isclose(mean, report.mean(method), abs_tol=1e-9):
            raise FormatError(f"{path}: summary mean for {method} disagrees with trial rows")
        if not math.isclose(std, report.std(method), abs_tol=1e-9):
            raise FormatError(f"{path}: summary std for {method} disagrees with trial rows")
    return report
