import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loadcast.core import derive_rng
from loadcast.extract import CLEAN, MALFORMED, ParseOutcome, Verdict, VerdictKind
from loadcast.metrics import (
    LengthMismatch,
    MetricsReport,
    MetricsSlice,
    ReportStyle,
    evaluate,
    parse_report,
    render_comparison,
    render_report,
)


def clean_outcome(values):
    values = tuple(float(v) for v in values)
    return ParseOutcome(
        raw_values=values, verdict=CLEAN, repaired=values,
        expected_len=len(values),
    )


def hallucinated_outcome(values):
    values = tuple(float(v) for v in values)
    return ParseOutcome(
        raw_values=values[:-1], verdict=Verdict(VerdictKind.MISSING, 1),
        repaired=values, expected_len=len(values),
    )


def reference_metrics(outcomes, targets):
    """Deliberately naive double loop, kept independent of the library."""
    n_h = sum(1 for o in outcomes if o.verdict.kind is not VerdictKind.CLEAN)
    abs_sum = 0.0
    sq_sum = 0.0
    count = 0
    for o, t in zip(outcomes, targets):
        for got, want in zip(o.repaired, t):
            abs_sum += abs(got - want)
            sq_sum += (got - want) ** 2
            count += 1
    return (
        n_h / len(outcomes),
        abs_sum / count,
        math.sqrt(sq_sum / count),
    )


class TestEvaluate:
    def test_hand_oracle_single_sample(self):
        report = evaluate([clean_outcome([3, 4, 5])], [[1, 4, 9]])
        assert report.mae == pytest.approx(2.0)
        assert report.rmse == pytest.approx(math.sqrt(20 / 3))

    def test_identity_case(self):
        outcomes = [clean_outcome([1, 2]), clean_outcome([3, 4])]
        report = evaluate(outcomes, [[1, 2], [3, 4]])
        assert (report.hallucination_rate, report.mae, report.rmse) == (0.0, 0.0, 0.0)

    def test_rate_is_exact_fraction(self):
        outcomes = [clean_outcome([1.0])] * 38 + [hallucinated_outcome([0.0])] * 2
        report = evaluate(outcomes, [[1.0]] * 38 + [[5.0]] * 2)
        assert report.hallucination_rate == 2 / 40
        assert report.n_hallucinated == 2

    def test_length_mismatches_raise(self):
        with pytest.raises(LengthMismatch):
            evaluate([clean_outcome([1])], [])
        with pytest.raises(LengthMismatch):
            evaluate([clean_outcome([1])], [[1, 2]])
        with pytest.raises(LengthMismatch):
            evaluate([clean_outcome([1])], [[1]], formats=[])

    def test_per_format_breakdown(self):
        outcomes = [clean_outcome([1]), hallucinated_outcome([0])]
        report = evaluate(outcomes, [[1], [2]], formats=["text", "ets"])
        assert set(report.per_format_breakdown) == {"text", "ets"}
        assert report.per_format_breakdown["ets"].hallucination_rate == 1.0
        assert report.per_format_breakdown["text"].mae == 0.0

    def test_permutation_invariance(self):
        rng = derive_rng(1, "perm")
        outcomes = [clean_outcome(rng.uniform(0, 10, 3)) for _ in range(20)]
        targets = [rng.uniform(0, 10, 3).tolist() for _ in range(20)]
        forward = evaluate(outcomes, targets)
        order = rng.permutation(20)
        shuffled = evaluate(
            [outcomes[i] for i in order], [targets[i] for i in order]
        )
        assert forward.mae == pytest.approx(shuffled.mae, abs=1e-12)
        assert forward.rmse == pytest.approx(shuffled.rmse, abs=1e-12)

    @given(seed=st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=100, deadline=None)
    def test_matches_reference_and_rmse_dominates(self, seed):
        rng = derive_rng(seed, "metrics-oracle")
        n = int(rng.integers(1, 30))
        horizon = int(rng.integers(1, 10))
        outcomes = []
        targets = []
        for _ in range(n):
            values = rng.uniform(-100, 100, horizon)
            if rng.random() < 0.3:
                outcomes.append(hallucinated_outcome(values))
            else:
                outcomes.append(clean_outcome(values))
            targets.append(rng.uniform(-100, 100, horizon).tolist())
        report = evaluate(outcomes, targets)
        h, mae, rmse = reference_metrics(outcomes, targets)
        assert report.hallucination_rate == h
        assert report.mae == pytest.approx(mae, abs=1e-9)
        assert report.rmse == pytest.approx(rmse, abs=1e-9)
        assert report.rmse >= report.mae


class TestReportTypes:
    def test_rate_must_be_exact(self):
        with pytest.raises(ValueError):
            MetricsSlice(
                n_samples=3, n_hallucinated=1,
                hallucination_rate=0.33, mae=0.0, rmse=0.0,
            )

    def test_breakdown_is_read_only(self):
        report = evaluate([clean_outcome([1])], [[1]], formats=["text"])
        with pytest.raises(TypeError):
            report.per_format_breakdown["x"] = None


class TestRendering:
    def _report(self):
        outcomes = [clean_outcome([10, 20])] * 92 + [
            hallucinated_outcome([0, 0])
        ] * 8
        targets = [[10, 20]] * 92 + [[7, 9]] * 8
        return evaluate(outcomes, targets, formats=["text"] * 100)

    def test_markdown_row_contains_rate(self):
        text = render_report(self._report(), ReportStyle.MARKDOWN)
        lines = text.strip().splitlines()
        assert lines[0] == "| Method | Hallucination Rate | MAE | RMSE |"
        assert "| text | 0.08 |" in lines[2]

    def test_empty_breakdown_renders_header_only(self):
        report = evaluate([clean_outcome([1])], [[1]])
        text = render_report(report, ReportStyle.MARKDOWN)
        assert len(text.strip().splitlines()) == 2

    def test_csv_shape(self):
        text = render_report(self._report(), ReportStyle.CSV)
        lines = text.strip().splitlines()
        assert lines[0] == "method,hallucination_rate,mae,rmse"
        assert lines[1].startswith("text,0.08,")

    def test_json_round_trip(self):
        report = self._report()
        again = parse_report(render_report(report, ReportStyle.JSON))
        assert again == report

    def test_comparison_one_row_per_run(self):
        named = {"run-a": self._report(), "run-b": self._report()}
        text = render_comparison(named, ReportStyle.MARKDOWN)
        lines = text.strip().splitlines()
        assert len(lines) == 4
        assert lines[2].startswith("| run-a |")
        assert lines[3].startswith("| run-b |")

    def test_report_from_dict_tolerates_missing_breakdown(self):
        report = MetricsReport.from_dict({
            "n_samples": 1, "n_hallucinated": 0,
            "hallucination_rate": 0.0, "mae": 0.0, "rmse": 0.0,
        })
        assert dict(report.per_format_breakdown) == {}


class TestNumericalStability:
    def test_fsum_keeps_tiny_errors_exact(self):
        # 0.1 repeated: naive accumulation drifts, compensated does not.
        outcomes = [clean_outcome([0.1])] * 1000
        targets = [[0.0]] * 1000
        report = evaluate(outcomes, targets)
        assert report.mae == pytest.approx(0.1, abs=1e-15)

    def test_malformed_repair_scores_against_target(self):
        outcome = ParseOutcome(
            raw_values=(), verdict=MALFORMED, repaired=(0.0, 0.0),
            expected_len=2,
        )
        report = evaluate([outcome], [[3.0, 4.0]])
        assert report.mae == pytest.approx(3.5)
        assert report.hallucination_rate == 1.0
