"""
Check reports and the verdict policy.

A CheckReport collects rows comparing an estimate with its target under a
declared tolerance. Rows with a standard error are judged by |z| < 4, rows
without one by their relative or absolute tolerance, and trend rows by
movement toward the target across increasing N.
"""

from __future__ import annotations

import math
from typing import Any, Literal, Sequence

from pydantic import BaseModel, ConfigDict, Field

from core.montecarlo import EstimateWithError

Z_TOLERANCE = 4.0
DETERMINISTIC_RTOL = 1e-9

RowStatus = Literal["pass", "fail", "indeterminate", "info"]
Verdict = Literal["pass", "fail", "indeterminate"]

TOLERANCE_POLICY = (
    "statistical rows: |z| < 4 with pooled standard errors; deterministic rows: stated relative/absolute "
    "tolerance; asymptotic constants: 10-15% relative at the largest N plus movement toward the target "
    "across increasing N (one pooled standard error of slack)"
)


def _finite_or_none(x: float | None) -> float | None:
    if x is None or not math.isfinite(x):
        return None
    return float(x)


class CheckRow(BaseModel):
    """One compared quantity."""

    model_config = ConfigDict(extra="forbid")

    quantity: str
    estimate: float | None
    stderr: float = 0.0
    target: float | None = None
    zscore: float | None = None
    rel_error: float | None = None
    tolerance: str = ""
    status: RowStatus = "info"
    N: int | None = None


class CheckReport(BaseModel):
    """Outcome of one diagnostic check."""

    model_config = ConfigDict(extra="forbid")

    name: str
    params: dict[str, Any] = Field(default_factory=dict)
    rows: list[CheckRow] = Field(default_factory=list)
    verdict: Verdict = "indeterminate"
    tolerance_policy: str = TOLERANCE_POLICY
    notes: list[str] = Field(default_factory=list)

    def __str__(self) -> str:
        counts = {s: sum(1 for r in self.rows if r.status == s) for s in ("pass", "fail", "indeterminate")}
        return (
            f"Check {self.name}: {self.verdict.upper()} "
            f"({counts['pass']} pass, {counts['fail']} fail, {counts['indeterminate']} indeterminate)"
        )

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


def decide_verdict(rows: Sequence[CheckRow]) -> Verdict:
    statuses = {row.status for row in rows}
    if "fail" in statuses:
        return "fail"
    if "indeterminate" in statuses or not statuses - {"info"}:
        return "indeterminate"
    return "pass"


def make_report(
    name: str, params: dict[str, Any], rows: Sequence[CheckRow], notes: Sequence[str] = ()
) -> CheckReport:
    return CheckReport(name=name, params=params, rows=list(rows), verdict=decide_verdict(rows), notes=list(notes))


def _relative(value: float, target: float) -> float:
    scale = abs(target)
    return abs(value - target) / scale if scale > 0.0 else abs(value - target)


def statistical_row(
    quantity: str,
    est: EstimateWithError,
    target: float,
    z_tol: float = Z_TOLERANCE,
    N: int | None = None,
    atol: float | None = None,
) -> CheckRow:
    """|z| < z_tol; a zero-SE estimate falls back to ``atol`` (default: near-exact)."""
    z = est.zscore(target)
    if est.stderr == 0.0:
        bound = atol if atol is not None else DETERMINISTIC_RTOL * max(1.0, abs(target))
        ok = abs(est.value - target) <= bound
        tolerance = f"|diff| <= {bound:.3g}"
    else:
        ok = abs(z) < z_tol
        tolerance = f"|z| < {z_tol:g}"
    return CheckRow(
        quantity=quantity,
        estimate=est.value,
        stderr=est.stderr,
        target=target,
        zscore=_finite_or_none(z),
        rel_error=_finite_or_none(_relative(est.value, target)),
        tolerance=tolerance,
        status="pass" if ok else "fail",
        N=N,
    )


def relative_row(
    quantity: str,
    value: float,
    target: float,
    rel_tol: float,
    stderr: float = 0.0,
    N: int | None = None,
) -> CheckRow:
    """Relative tolerance; a miss whose standard error is as large as the tolerance is indeterminate."""
    rel = _relative(value, target)
    if rel <= rel_tol:
        status: RowStatus = "pass"
    elif stderr >= rel_tol * max(abs(target), 1e-300):
        status = "indeterminate"
    else:
        status = "fail"
    z = (value - target) / stderr if stderr > 0.0 else None
    return CheckRow(
        quantity=quantity,
        estimate=value,
        stderr=stderr,
        target=target,
        zscore=_finite_or_none(z),
        rel_error=_finite_or_none(rel),
        tolerance=f"rel <= {rel_tol:g}",
        status=status,
        N=N,
    )


def absolute_row(quantity: str, value: float, target: float, atol: float, N: int | None = None) -> CheckRow:
    diff = abs(value - target)
    return CheckRow(
        quantity=quantity,
        estimate=value,
        target=target,
        rel_error=_finite_or_none(_relative(value, target)),
        tolerance=f"|diff| <= {atol:.3g}",
        status="pass" if diff <= atol else "fail",
        N=N,
    )


def bound_row(
    quantity: str, value: float, upper: float | None = None, lower: float | None = None, N: int | None = None
) -> CheckRow:
    ok = (upper is None or value <= upper) and (lower is None or value >= lower)
    parts = ([f">= {lower:g}"] if lower is not None else []) + ([f"<= {upper:g}"] if upper is not None else [])
    return CheckRow(
        quantity=quantity, estimate=value, tolerance=" and ".join(parts), status="pass" if ok else "fail", N=N
    )


def info_row(quantity: str, value: float, stderr: float = 0.0, target: float | None = None, N: int | None = None) -> CheckRow:
    return CheckRow(quantity=quantity, estimate=_finite_or_none(value), stderr=stderr, target=target, N=N)


def trend_row(quantity: str, estimates: Sequence[EstimateWithError], target: float, Ns: Sequence[int]) -> CheckRow:
    """Distance to target must not grow between consecutive N (one pooled SE of slack)."""
    ok = True
    for prev, nxt in zip(estimates[:-1], estimates[1:]):
        slack = math.hypot(prev.stderr, nxt.stderr)
        if abs(nxt.value - target) > abs(prev.value - target) + slack:
            ok = False
    last = estimates[-1]
    return CheckRow(
        quantity=quantity,
        estimate=last.value,
        stderr=last.stderr,
        target=target,
        rel_error=_finite_or_none(_relative(last.value, target)),
        tolerance=f"distance to target non-increasing over N={list(Ns)}",
        status="pass" if ok else "fail",
    )


def decreasing_row(quantity: str, estimates: Sequence[EstimateWithError], Ns: Sequence[int]) -> CheckRow:
    ok = all(
        nxt.value <= prev.value + math.hypot(prev.stderr, nxt.stderr)
        for prev, nxt in zip(estimates[:-1], estimates[1:])
    )
    last = estimates[-1]
    return CheckRow(
        quantity=quantity,
        estimate=last.value,
        stderr=last.stderr,
        tolerance=f"non-increasing over N={list(Ns)}",
        status="pass" if ok else "fail",
    )
