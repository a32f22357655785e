"""
Summarize experiment runs to users.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional

from click import style

from strange_reservoir.utils.output import err, metric_line, out


class Outcome(Enum):
    PASSED = 0
    METRIC_FAILURE = 2
    ERROR = 1


@dataclass
class Report:
    """Counts runs by outcome. Can be rendered with `str(report)`."""

    quiet: bool = False
    verbose: bool = False
    pass_count: int = 0
    metric_failure_count: int = 0
    error_count: int = 0

    def done(
        self,
        name: str,
        passed: bool,
        failures: Iterable[str] = (),
        metrics: Optional[dict] = None,
        checks: Optional[dict] = None,
    ) -> None:
        """Record a finished run and write out a message."""
        if passed:
            self.pass_count += 1
            if self.verbose or not self.quiet:
                out(f"passed {name}")
        else:
            self.metric_failure_count += 1
            err(f"failed {name}: {', '.join(failures)}")
        if self.verbose and metrics:
            checks = checks or {}
            for key, value in metrics.items():
                out(metric_line(key, value, checks.get(key)), bold=False)

    def failed(self, name: str, message: str) -> None:
        """Record a run that raised. Write out a message."""
        err(f"error: cannot run {name}: {message}")
        self.error_count += 1

    @property
    def outcome(self) -> Outcome:
        if self.error_count:
            return Outcome.ERROR
        if self.metric_failure_count:
            return Outcome.METRIC_FAILURE
        return Outcome.PASSED

    @property
    def return_code(self) -> int:
        """Return the exit code that the app should use.

        - if any run raised, return 1;
        - if any run missed a threshold, return 2;
        - otherwise return 0.
        """
        return self.outcome.value

    def __str__(self) -> str:
        """Render a color report of the current state.

        Use `click.unstyle` to remove colors.
        """
        report = []
        if self.pass_count:
            s = "s" if self.pass_count > 1 else ""
            report.append(
                style(f"{self.pass_count} run{s} ", bold=True, fg="blue")
                + style("passed", bold=True)
            )
        if self.metric_failure_count:
            s = "s" if self.metric_failure_count > 1 else ""
            report.append(
                style(f"{self.metric_failure_count} run{s} ", fg="blue")
                + "missed a threshold"
            )
        if self.error_count:
            s = "s" if self.error_count > 1 else ""
            report.append(
                style(
                    f"{self.error_count} run{s} failed with errors", fg="red"
                )
            )
        if not report:
            return "No runs."
        return ", ".join(report) + "."
