"""
Output writer service.

This module renders estimates, trajectories and check reports as CSV or JSON
and writes them atomically, so an interrupted run never leaves a partial file
behind. Without a destination path the text goes to stdout.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence

from core.engine import GenealogyTrajectory
from core.montecarlo import EstimateWithError
from core.reporting import CheckReport

logger = logging.getLogger(__name__)

TRAJECTORY_HEADER = ("replicate", "generation", "n_blocks", "partition")
ESTIMATE_HEADER = ("quantity", "value", "stderr", "reps", "seed")
PLOTDATA_HEADER = ("N", "quantity", "estimate", "stderr", "target")


def format_cell(value: Any) -> str:
    """17 significant digits for floats, empty for missing values."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


class CoalgeneReportWriter:
    """
    Renders coalgene results and writes them to disk or stdout.

    All writes go through ``write_atomic``: the text lands in a temporary file
    next to the destination and is renamed over it once complete.
    """

    def __init__(self, stdout=None):
        self.stdout = stdout if stdout is not None else sys.stdout

    def write_atomic(self, text: str, path: str | Path) -> Path:
        """
        Write ``text`` to ``path`` through a temporary file and os.replace.

        Args:
            text: Complete file content
            path: Destination file

        Returns:
            The destination path
        """
        path = Path(path)
        directory = path.parent if str(path.parent) else Path(".")
        try:
            directory.mkdir(parents=True, exist_ok=True)
            fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=directory)
        except OSError as e:
            raise OSError(f"cannot write {path}: {e.strerror or e}") from e
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
                handle.write(text)
            os.replace(tmp_name, path)
        except OSError as e:
            Path(tmp_name).unlink(missing_ok=True)
            raise OSError(f"cannot write {path}: {e.strerror or e}") from e
        logger.info("RUN: output written to %s", path)
        return path

    def emit(self, text: str, path: str | Path | None = None) -> Path | None:
        if path is None:
            self.stdout.write(text)
            self.stdout.flush()
            return None
        return self.write_atomic(text, path)

    def render_csv(self, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(value) for value in row])
        return buffer.getvalue()

    def render_json(self, payload: Any) -> str:
        if isinstance(payload, CheckReport):
            return payload.model_dump_json(indent=2) + "\n"
        return json.dumps(payload, indent=2, allow_nan=False) + "\n"

    def trajectories_csv(self, trajectories: Sequence[GenealogyTrajectory]) -> str:
        rows = (
            (replicate, generation, pi.n_blocks, str(pi))
            for replicate, trajectory in enumerate(trajectories)
            for generation, pi in trajectory.steps
        )
        return self.render_csv(TRAJECTORY_HEADER, rows)

    def estimates_csv(self, estimates: Sequence[tuple[str, EstimateWithError]], seed: int | None) -> str:
        rows = ((quantity, est.value, est.stderr, est.reps, seed) for quantity, est in estimates)
        return self.render_csv(ESTIMATE_HEADER, rows)

    def plotdata_csv(self, report: CheckReport) -> str:
        """Rows of ``report`` that belong to one population size."""
        rows = (
            (row.N, row.quantity, row.estimate, row.stderr, row.target) for row in report.rows if row.N is not None
        )
        return self.render_csv(PLOTDATA_HEADER, rows)
