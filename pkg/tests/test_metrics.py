import numpy as np
import pytest

from otimpute.exceptions import NoMissingEntries
from otimpute.metrics import evaluate, mae, rmse, w2_metric
from otimpute.ot import exact_w2


def _case(seed=0, n=12, d=4, frac=0.3):
    rng = np.random.default_rng(seed)
    truth = rng.standard_normal((n, d))
    imputed = truth + 0.1 * rng.standard_normal((n, d))
    mask = (rng.random((n, d)) > frac).astype(int)
    mask[0] = 1
    return truth, imputed, mask


class TestPointwise:
    def test_against_explicit_loops(self):
        truth, imputed, mask = _case()
        diffs = [
            truth[i, j] - imputed[i, j]
            for i in range(truth.shape[0])
            for j in range(truth.shape[1])
            if mask[i, j] == 0
        ]
        assert mae(truth, imputed, mask) == pytest.approx(
            sum(abs(x) for x in diffs) / len(diffs), abs=1e-14
        )
        assert rmse(truth, imputed, mask) == pytest.approx(
            (sum(x * x for x in diffs) / len(diffs)) ** 0.5, abs=1e-14
        )

    def test_hand_values(self):
        truth = np.array([[1.0, 2.0], [3.0, 4.0]])
        imputed = np.array([[1.0, 2.5], [1.0, 4.0]])
        mask = np.array([[1, 0], [0, 1]])
        # errors at the two missing cells: 0.5 and 2.0
        assert mae(truth, imputed, mask) == pytest.approx(1.25, abs=1e-15)
        assert rmse(truth, imputed, mask) == pytest.approx(
            np.sqrt((0.25 + 4.0) / 2), abs=1e-15
        )

    def test_observed_cells_ignored(self):
        truth, imputed, mask = _case(1)
        corrupted = imputed.copy()
        corrupted[mask == 1] = 1e9  # garbage on observed entries only
        assert mae(truth, corrupted, mask) == mae(truth, imputed, mask)

    def test_perfect_imputation_scores_zero(self):
        truth, _, mask = _case(2)
        assert mae(truth, truth.copy(), mask) == 0.0
        assert rmse(truth, truth.copy(), mask) == 0.0

    def test_rmse_dominates_mae(self):
        truth, imputed, mask = _case(3)
        assert rmse(truth, imputed, mask) >= mae(truth, imputed, mask)

    def test_no_missing_entries(self):
        truth = np.zeros((3, 2))
        with pytest.raises(NoMissingEntries):
            mae(truth, truth, np.ones((3, 2)))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mae(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((3, 2)))


class TestW2Metric:
    def test_restricted_to_rows_with_missing_entries(self):
        truth, imputed, mask = _case(4, n=10)
        rows = np.flatnonzero((mask == 0).any(axis=1))
        expected = exact_w2(imputed[rows], truth[rows])
        assert w2_metric(truth, imputed, mask) == pytest.approx(expected, abs=1e-12)

    def test_fully_observed_rows_do_not_matter(self):
        truth, imputed, mask = _case(5, n=10)
        imputed2 = imputed.copy()
        full_rows = np.flatnonzero((mask == 1).all(axis=1))
        assert full_rows.size > 0
        imputed2[full_rows] = 123.0  # perturb rows outside the restriction
        assert w2_metric(truth, imputed2, mask) == w2_metric(truth, imputed, mask)

    def test_no_missing_rows(self):
        with pytest.raises(NoMissingEntries):
            w2_metric(np.zeros((2, 2)), np.zeros((2, 2)), np.ones((2, 2)))


class TestEvaluate:
    def test_counts(self):
        truth, imputed, mask = _case(6)
        rep = evaluate(truth, imputed, mask)
        assert rep.m0 == int((mask == 0).sum())
        assert rep.m1 == int(((mask == 0).any(axis=1)).sum())
        assert not rep.w2_skipped and rep.w2 is not None
        assert rep.units == "standardized"

    def test_w2_cap_produces_flagged_report(self):
        truth, imputed, mask = _case(7, n=30)
        rep = evaluate(truth, imputed, mask, cap=3)
        assert rep.w2_skipped and rep.w2 is None
        assert rep.w2_skip_reason
        assert np.isfinite(rep.mae) and np.isfinite(rep.rmse)

    def test_to_dict_round_trip_keys(self):
        truth, imputed, mask = _case(8)
        payload = evaluate(truth, imputed, mask).to_dict()
        assert {"mae", "rmse", "w2", "m0", "m1", "w2_skipped"} <= set(payload)
