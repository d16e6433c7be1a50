"""
Tests for check reports and the replicate machinery.

Core claims:
    - Any failing row fails the report; indeterminate or info-only reports are
      indeterminate
    - Row builders apply their tolerances, and a relative miss drowned in noise
      is indeterminate rather than a failure
    - Replicate streams depend only on (seed, stream, replicate)
    - Estimates and ratios carry the usual standard errors
    - The published JSON schema names exactly the report and row fields
"""

import json
import math
from pathlib import Path

import numpy as np
import pytest
from pytest import approx

from core.montecarlo import (
    EstimateWithError,
    check_seed,
    difference_zscore,
    ratio_estimate,
    replicate_rng,
    run_replicates,
)
from core.reporting import (
    CheckReport,
    CheckRow,
    absolute_row,
    bound_row,
    decide_verdict,
    decreasing_row,
    info_row,
    make_report,
    relative_row,
    statistical_row,
    trend_row,
)

SCHEMA = Path(__file__).resolve().parents[1] / "services" / "schemas" / "check_report.schema.json"


def _row(status):
    return CheckRow(quantity="q", estimate=1.0, status=status)


def _draw(rng):
    return float(rng.random())


class TestVerdict:
    @pytest.mark.parametrize(
        "statuses,verdict",
        [
            (["pass", "pass"], "pass"),
            (["pass", "fail", "indeterminate"], "fail"),
            (["pass", "indeterminate"], "indeterminate"),
            (["info", "info"], "indeterminate"),
            ([], "indeterminate"),
            (["info", "pass"], "pass"),
        ],
    )
    def test_rules(self, statuses, verdict):
        assert decide_verdict([_row(s) for s in statuses]) == verdict

    def test_make_report(self):
        report = make_report("demo", {"N": 10}, [_row("pass")], notes=["hello"])
        assert report.passed
        assert str(report) == "Check demo: PASS (1 pass, 0 fail, 0 indeterminate)"
        assert report.notes == ["hello"]


class TestRowBuilders:
    def test_statistical(self):
        assert statistical_row("x", EstimateWithError(1.1, 0.05, 100), 1.0).status == "pass"
        row = statistical_row("x", EstimateWithError(1.3, 0.05, 100), 1.0)
        assert row.status == "fail"
        assert row.zscore == approx(6.0)

    def test_statistical_exact_estimate(self):
        assert statistical_row("x", EstimateWithError.exact(0.5), 0.5).status == "pass"
        assert statistical_row("x", EstimateWithError.exact(0.5), 0.6).status == "fail"
        assert statistical_row("x", EstimateWithError.exact(0.5), 0.6, atol=0.2).status == "pass"
        assert statistical_row("x", EstimateWithError.exact(0.5), 0.6).zscore is None

    def test_relative(self):
        assert relative_row("x", 1.05, 1.0, 0.1).status == "pass"
        assert relative_row("x", 1.5, 1.0, 0.1).status == "fail"
        assert relative_row("x", 1.5, 1.0, 0.1, stderr=0.2).status == "indeterminate"

    def test_absolute_and_bound(self):
        assert absolute_row("x", 0.01, 0.0, 0.02).status == "pass"
        assert absolute_row("x", 0.03, 0.0, 0.02).status == "fail"
        assert bound_row("x", 1.5, upper=2.0, lower=0.5).status == "pass"
        assert bound_row("x", 2.5, upper=2.0).status == "fail"

    def test_info_drops_non_finite(self):
        row = info_row("x", float("nan"))
        assert row.estimate is None
        assert row.status == "info"

    def test_trend(self):
        toward = [EstimateWithError(0.5, 0.01, 10), EstimateWithError(0.8, 0.01, 10)]
        away = [EstimateWithError(0.8, 0.01, 10), EstimateWithError(0.5, 0.01, 10)]
        assert trend_row("x", toward, 1.0, [10, 100]).status == "pass"
        assert trend_row("x", away, 1.0, [10, 100]).status == "fail"

    def test_decreasing(self):
        down = [EstimateWithError(0.5, 0.0, 10), EstimateWithError(0.1, 0.0, 10)]
        assert decreasing_row("x", down, [10, 100]).status == "pass"
        assert decreasing_row("x", down[::-1], [10, 100]).status == "fail"


class TestReplicateStreams:
    def test_streams_are_keyed(self):
        a = replicate_rng(5, "genealogy", 3).random(4)
        assert np.array_equal(a, replicate_rng(5, "genealogy", 3).random(4))
        assert not np.array_equal(a, replicate_rng(5, "genealogy", 4).random(4))
        assert not np.array_equal(a, replicate_rng(5, "model-draws", 3).random(4))
        assert not np.array_equal(a, replicate_rng(6, "genealogy", 3).random(4))

    def test_results_in_replicate_order(self):
        values = run_replicates(_draw, 10, 42, "demo")
        assert values == [float(replicate_rng(42, "demo", r).random()) for r in range(10)]

    def test_parallel_matches_serial(self):
        serial = run_replicates(_draw, 80, 42, "demo", workers=1)
        assert run_replicates(_draw, 80, 42, "demo", workers=3) == serial

    @pytest.mark.parametrize("seed", [None, -1, 2**64])
    def test_seed_validation(self, seed):
        with pytest.raises(ValueError):
            check_seed(seed)

    def test_replicates_must_be_positive(self):
        with pytest.raises(ValueError):
            run_replicates(_draw, 0, 1, "demo")


class TestEstimates:
    def test_from_samples(self):
        est = EstimateWithError.from_samples([1.0, 2.0, 3.0, 4.0])
        assert est.value == approx(2.5)
        assert est.stderr == approx(math.sqrt(5.0 / 3.0 / 4.0))
        assert est.reps == 4

    def test_constant_samples_are_exact(self):
        est = EstimateWithError.from_samples([0.25] * 5)
        assert est.stderr == 0.0
        assert est.zscore(0.25) == 0.0
        assert est.zscore(0.3) == -math.inf

    def test_ratio_of_proportional_samples(self):
        den = np.array([1.0, 2.0, 3.0])
        est = ratio_estimate(2.0 * den, den)
        assert est.value == approx(2.0)
        assert est.stderr == approx(0.0, abs=1e-15)

    def test_ratio_needs_pairs(self):
        with pytest.raises(ValueError):
            ratio_estimate([1.0, 2.0], [1.0])

    def test_difference_zscore(self):
        a, b = EstimateWithError(1.0, 0.3, 10), EstimateWithError(0.5, 0.4, 10)
        assert difference_zscore(a, b) == approx(1.0)

    def test_scaled(self):
        est = EstimateWithError(2.0, 0.1, 10).scaled(-3.0)
        assert est.value == approx(-6.0)
        assert est.stderr == approx(0.3)


class TestSchema:
    def test_schema_names_report_fields(self):
        schema = json.loads(SCHEMA.read_text())
        assert set(schema["required"]) == set(CheckReport.model_fields)
        row = schema["$defs"]["CheckRow"]
        assert set(row["properties"]) == set(CheckRow.model_fields)
        assert row["properties"]["status"]["enum"] == ["pass", "fail", "indeterminate", "info"]

    def test_report_json_has_no_nan(self):
        report = make_report("demo", {}, [info_row("x", 1.0), statistical_row("y", EstimateWithError.exact(1.0), 2.0)])
        data = json.loads(report.model_dump_json())
        assert data["rows"][1]["zscore"] is None
        assert data["verdict"] == "fail"
