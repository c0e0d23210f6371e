import logging
import math
from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mobibench.backtest import KIND_BASELINE, KIND_MOBILITY, PredictionRecord
from mobibench.metrics import (
    CiPoint, MetricsError, average_ranks, ci_series, spearman, spearman_flagged,
    summarize,
)


def oracle_ranks(values):
    """Independent average-rank construction by tie-position counting."""
    ranks = []
    for v in values:
        less = sum(1 for u in values if u < v)
        equal = sum(1 for u in values if u == v)
        ranks.append(less + (equal + 1) / 2)
    return ranks


def oracle_spearman(xs, ys):
    """Pearson over oracle ranks, computed with plain-Python sums."""
    rx, ry = oracle_ranks(xs), oracle_ranks(ys)
    n = len(rx)
    mx = math.fsum(rx) / n
    my = math.fsum(ry) / n
    cov = math.fsum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = math.fsum((a - mx) ** 2 for a in rx)
    vy = math.fsum((b - my) ** 2 for b in ry)
    return cov / math.sqrt(vx * vy)


def rec(day, county, pred, actual, kind, lookahead=7, dataset="m"):
    return PredictionRecord(date=day, county=county, lookahead=lookahead,
                            model_kind=kind, dataset=dataset,
                            predicted=pred, actual=actual)


def group(day, preds_m, preds_b, actuals, lookahead=7):
    out = []
    for i, (pm, pb, a) in enumerate(zip(preds_m, preds_b, actuals)):
        county = f"{i + 1:05d}"
        out.append(rec(day, county, pm, a, KIND_MOBILITY, lookahead))
        out.append(rec(day, county, pb, a, KIND_BASELINE, lookahead))
    return out


D0 = date(2020, 5, 17)


class TestAverageRanks:
    def test_no_ties(self):
        np.testing.assert_array_equal(average_ranks([30, 10, 20]), [3, 1, 2])

    def test_ties_get_mean_position(self):
        np.testing.assert_array_equal(average_ranks([1, 2, 2, 4]), [1, 2.5, 2.5, 4])

    def test_all_equal(self):
        np.testing.assert_array_equal(average_ranks([5, 5, 5]), [2, 2, 2])

    @given(st.lists(st.integers(-5, 5), min_size=1, max_size=30))
    def test_matches_oracle(self, values):
        np.testing.assert_allclose(average_ranks(values), oracle_ranks(values))


class TestSpearman:
    def test_perfect_monotone(self):
        assert spearman([1, 2, 3], [10, 20, 30]) == 1.0

    def test_perfect_reversal(self):
        assert spearman([1, 2, 3], [3, 2, 1]) == -1.0

    def test_tied_fixture(self):
        assert spearman([1, 2, 2, 4], [1, 2, 3, 4]) == pytest.approx(0.9487, abs=1e-4)

    def test_degenerate_flat_vector(self):
        rho, degenerate = spearman_flagged([5, 5, 5], [1, 2, 3])
        assert rho == 0.0 and degenerate
        rho, degenerate = spearman_flagged([1, 2, 3], [4, 5, 6])
        assert not degenerate

    def test_length_preconditions(self):
        with pytest.raises(MetricsError):
            spearman([1], [2])
        with pytest.raises(MetricsError):
            spearman([1, 2], [1, 2, 3])

    def test_rejects_non_finite(self):
        with pytest.raises(MetricsError):
            spearman([1, np.nan], [1, 2])

    @given(st.lists(st.integers(0, 8), min_size=2, max_size=30),
           st.integers(0, 10_000))
    @settings(max_examples=200)
    def test_matches_bruteforce_oracle(self, xs, seed):
        rng = np.random.default_rng(seed)
        ys = rng.integers(0, 8, size=len(xs)).tolist()  # injected ties
        rho, degenerate = spearman_flagged(xs, ys)
        if degenerate:
            assert len(set(xs)) == 1 or len(set(ys)) == 1
        else:
            assert rho == pytest.approx(oracle_spearman(xs, ys), abs=1e-12)

    @given(st.lists(st.integers(-50, 50), min_size=2, max_size=20, unique=True),
           st.integers(0, 10_000))
    def test_invariant_under_increasing_transforms(self, xs, seed):
        # integer-valued inputs keep exp/affine strictly increasing in float64
        xs = [float(v) for v in xs]
        rng = np.random.default_rng(seed)
        ys = rng.permutation(len(xs)).astype(float)
        base = spearman(xs, ys)
        assert spearman(np.exp(np.asarray(xs) / 50), ys) == pytest.approx(base, abs=1e-12)
        assert spearman(3.5 * np.asarray(xs) + 11, ys) == pytest.approx(base, abs=1e-12)
        assert spearman(xs, 0.1 * ys + 2) == pytest.approx(base, abs=1e-12)

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=20))
    def test_self_correlation_and_symmetry(self, xs):
        if len(set(xs)) >= 2:
            assert spearman(xs, xs) == pytest.approx(1.0, abs=1e-12)
        ys = list(reversed(xs))
        assert spearman(xs, ys) == pytest.approx(spearman(ys, xs), abs=1e-12)


class TestCiSeries:
    def test_identical_predictions_give_zero_ci(self):
        records = group(D0, [3.0, 1.0, 2.0], [3.0, 1.0, 2.0], [5.0, 6.0, 7.0])
        points = ci_series(records)
        assert len(points) == 1
        assert points[0].ci == 0.0
        assert points[0].n_counties == 3

    def test_bound_attained(self):
        actual = [1.0, 2.0, 3.0, 4.0]
        records = group(D0, actual, list(reversed(actual)), actual)
        (pt,) = ci_series(records)
        assert pt.rho_mobility == 1.0
        assert pt.rho_baseline == -1.0
        assert pt.ci == 2.0

    def test_points_sorted_and_keyed(self):
        records = []
        for offset in (2, 0, 1):
            for lookahead in (7, 1):
                records += group(D0 + timedelta(days=offset), [1, 2], [2, 1], [1, 2],
                                 lookahead)
        points = ci_series(records)
        keys = [(p.date, p.lookahead) for p in points]
        assert keys == sorted(keys)
        assert len(points) == 6

    def test_county_mismatch_is_error(self):
        records = group(D0, [1, 2], [2, 1], [1, 2])
        records.append(rec(D0, "99999", 1.0, 1.0, KIND_MOBILITY))
        with pytest.raises(MetricsError, match="county-set mismatch"):
            ci_series(records)

    def test_actual_disagreement_is_error(self):
        records = [
            rec(D0, "00001", 1.0, 5.0, KIND_MOBILITY),
            rec(D0, "00001", 1.0, 6.0, KIND_BASELINE),
            rec(D0, "00002", 2.0, 7.0, KIND_MOBILITY),
            rec(D0, "00002", 2.0, 7.0, KIND_BASELINE),
        ]
        with pytest.raises(MetricsError, match="disagree on actuals"):
            ci_series(records)

    def test_mixed_datasets_rejected(self):
        records = group(D0, [1, 2], [2, 1], [1, 2])
        records += [
            rec(D0, c, 1.0, 2.0, k, dataset="other")
            for c, k in [("00001", KIND_MOBILITY), ("00001", KIND_BASELINE),
                         ("00002", KIND_MOBILITY), ("00002", KIND_BASELINE)]
        ]
        with pytest.raises(MetricsError, match="mix datasets"):
            ci_series(records)

    def test_small_group_skipped_with_warning(self, caplog):
        records = group(D0, [1.0], [1.0], [1.0])
        with caplog.at_level(logging.WARNING):
            points = ci_series(records)
        assert points == []
        assert "skipping" in caplog.text

    def test_degenerate_prediction_vector_flagged(self, caplog):
        records = group(D0, [4.0, 4.0, 4.0], [1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        with caplog.at_level(logging.WARNING):
            (pt,) = ci_series(records)
        assert pt.rho_mobility == 0.0
        assert pt.rho_baseline == 1.0
        assert "degenerate" in caplog.text

    def test_antisymmetry_under_kind_swap(self):
        rng = np.random.default_rng(9)
        records = []
        for offset in range(3):
            records += group(D0 + timedelta(days=offset),
                             rng.normal(size=5), rng.normal(size=5), rng.normal(size=5))
        swapped = [
            PredictionRecord(
                date=r.date, county=r.county, lookahead=r.lookahead,
                model_kind=KIND_MOBILITY if r.model_kind == KIND_BASELINE else KIND_BASELINE,
                dataset=r.dataset, predicted=r.predicted, actual=r.actual)
            for r in records
        ]
        for a, b in zip(ci_series(records), ci_series(swapped)):
            assert a.ci == pytest.approx(-b.ci, abs=1e-15)

    def test_invariant_under_county_permutation(self):
        rng = np.random.default_rng(10)
        records = group(D0, rng.normal(size=6), rng.normal(size=6), rng.normal(size=6))
        shuffled = list(records)
        rng.shuffle(shuffled)
        assert ci_series(records) == ci_series(shuffled)


def point(offset, ci, lookahead=7):
    return CiPoint(date=D0 + timedelta(days=offset), lookahead=lookahead,
                   rho_mobility=ci, rho_baseline=0.0, ci=ci, n_counties=10)


class TestSummarize:
    def test_all_zero(self):
        summary = summarize([point(i, 0.0) for i in range(4)])
        entry = summary[7]
        assert entry["max_ci"] == entry["min_ci"] == 0.0
        assert entry["positive_spans"] == [] and entry["negative_spans"] == []

    def test_single_positive_point(self):
        summary = summarize([point(0, 0.25)])
        assert summary[7]["positive_spans"] == [
            {"start": D0.isoformat(), "end": D0.isoformat(), "days": 1}
        ]

    def test_spans_split_on_sign_change_and_gaps(self):
        pts = [point(0, 0.1), point(1, 0.2), point(2, -0.3),
               point(3, 0.4), point(5, 0.5)]  # day 4 missing: gap splits the run
        entry = summarize(pts)[7]
        assert entry["max_ci"] == 0.5 and entry["min_ci"] == -0.3
        assert [s["days"] for s in entry["positive_spans"]] == [2, 1, 1]
        assert entry["negative_spans"] == [
            {"start": pts[2].date.isoformat(), "end": pts[2].date.isoformat(), "days": 1}
        ]

    def test_per_lookahead_grouping(self):
        pts = [point(0, 0.1, lookahead=1), point(0, -0.1, lookahead=28)]
        summary = summarize(pts)
        assert set(summary) == {1, 28}
        assert summary[1]["max_ci"] == 0.1
        assert summary[28]["min_ci"] == -0.1

    def test_empty_is_error(self):
        with pytest.raises(MetricsError):
            summarize([])
