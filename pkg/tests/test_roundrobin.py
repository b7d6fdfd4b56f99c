import json

import numpy as np
import pytest

from otimpute.data import IncompleteMatrix, standardize
from otimpute.imputers.baselines import ice_fit, impute_mean
from otimpute.imputers.roundrobin import (
    LinearColumnParams,
    RoundRobinConfig,
    RoundRobinModel,
    rr_fit,
    rr_transform,
    load_model,
    save_model,
    _from_vector,
    _grad_vector,
    _predict,
    _to_vector,
)
from otimpute.masking import mcar_mask
from otimpute.metrics import evaluate
from otimpute.optim import finite_diff_grad
from otimpute.ot import batch_divergence_grads
from otimpute.toydata import correlated_gaussian

FAST = RoundRobinConfig(
    t_max=2, inner_steps=8, n_pairs=2, batch_size=32, sinkhorn_tol=1e-2, mcar=True
)


def _standardized_case(n=200, d=4, p=0.25, seed=0):
    rng = np.random.default_rng(seed)
    vals = correlated_gaussian(n, d, 0.6, rng=rng)
    mask = mcar_mask(n, d, p, np.random.default_rng(seed + 1))
    X = IncompleteMatrix(np.where(mask == 1, vals, np.nan), mask)
    Xs, means, stds = standardize(X)
    truth_s = (vals - means) / stds
    return Xs, truth_s, mask


def _linear_relation_case(n=400, seed=0, p=0.3):
    """x2 = 1.5*x0 - 0.5*x1 + small noise, missing only on x2."""
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=n)
    x1 = rng.normal(size=n)
    x2 = 1.5 * x0 - 0.5 * x1 + 0.05 * rng.normal(size=n)
    vals = np.column_stack([x0, x1, x2])
    mask = np.ones((n, 3))
    mask[rng.random(n) < p, 2] = 0
    X = IncompleteMatrix(np.where(mask == 1, vals, np.nan), mask)
    Xs, means, stds = standardize(X)
    truth_s = (vals - means) / stds
    return Xs, truth_s, mask


class TestAssembledGradient:
    """Finite differences through one full inner-step loss, per model kind.

    This exercises the exact path rr_fit uses: predictions overwrite the
    missing column in both batches, the divergence gradient is restricted to
    those entries, and the result is assembled in the vectorized layout.
    """

    @pytest.mark.parametrize("kind", ["linear", "mlp"])
    def test_matches_finite_differences(self, kind):
        rng = np.random.default_rng(0)
        n_pairs, m, d, j = 2, 6, 4, 1
        eps = 1.0
        XK = rng.normal(size=(n_pairs, m, d))
        XL = rng.normal(size=(n_pairs, m, d))
        misK = rng.random((n_pairs, m)) < 0.4
        misL = rng.random((n_pairs, m)) < 0.4
        others = np.arange(d) != j
        k = d - 1
        theta0 = (
            LinearColumnParams(rng.normal(size=k) * 0.3, 0.1)
            if kind == "linear"
            else _random_mlp(k, rng)
        )

        def loss_of(vec):
            theta = _from_vector(kind, vec, k)
            XKc, XLc = XK.copy(), XL.copy()
            nK = int(misK.sum())
            inputs = np.vstack([XKc[misK][:, others], XLc[misL][:, others]])
            preds = _predict(kind, theta, inputs)
            XKc[misK, j] = preds[:nK]
            XLc[misL, j] = preds[nK:]
            vals, _, _, _ = batch_divergence_grads(XKc, XLc, eps, 20000, 1e-12)
            return float(vals.mean())

        vec0 = _to_vector(kind, theta0)
        XKc, XLc = XK.copy(), XL.copy()
        nK = int(misK.sum())
        inputs = np.vstack([XKc[misK][:, others], XLc[misL][:, others]])
        preds = _predict(kind, theta0, inputs)
        XKc[misK, j] = preds[:nK]
        XLc[misL, j] = preds[nK:]
        _, dXK, dXL, _ = batch_divergence_grads(XKc, XLc, eps, 20000, 1e-12)
        upstream = np.concatenate([dXK[misK, j], dXL[misL, j]]) / n_pairs
        analytic = _grad_vector(kind, theta0, inputs, upstream)

        numeric = finite_diff_grad(loss_of, vec0, h=1e-6)
        rel = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)
        assert rel < 1e-4


def _random_mlp(k, rng):
    from otimpute.imputers.mlp import MlpColumnParams

    return MlpColumnParams(
        W1=rng.normal(size=(k, 2 * k)) * 0.4,
        b1=rng.normal(size=2 * k) * 0.1,
        W2=rng.normal(size=(2 * k, k)) * 0.4,
        b2=rng.normal(size=k) * 0.1,
        W3=rng.normal(size=(k, 1)) * 0.4,
        b3=rng.normal(size=1) * 0.1,
    )


class TestRrFit:
    def test_all_observed_is_identity(self):
        vals = np.arange(24.0).reshape(8, 3)
        X = IncompleteMatrix(vals, np.ones((8, 3)))
        out, model, diag = rr_fit(X, "linear", FAST, np.random.default_rng(0))
        assert np.array_equal(out, vals)
        assert diag.loss_history == []
        assert model.d == 3

    def test_observed_entries_untouched(self):
        Xs, _, mask = _standardized_case()
        out, _, _ = rr_fit(Xs, "linear", FAST, np.random.default_rng(2))
        obs = mask == 1
        assert np.array_equal(out[obs], Xs.values[obs])

    @pytest.mark.parametrize("kind", ["linear", "mlp"])
    def test_deterministic_under_seed(self, kind):
        Xs, _, _ = _standardized_case(seed=3)
        out1, _, _ = rr_fit(Xs, kind, FAST, np.random.default_rng(5))
        out2, _, _ = rr_fit(Xs, kind, FAST, np.random.default_rng(5))
        assert np.array_equal(out1, out2)

    def test_visit_order_follows_missing_counts(self):
        rng = np.random.default_rng(4)
        vals = rng.normal(size=(60, 3))
        mask = np.ones((60, 3))
        mask[:18, 0] = 0  # most missing
        mask[:6, 2] = 0  # least missing among incomplete
        X = IncompleteMatrix(np.where(mask == 1, vals, np.nan), mask)
        _, model, _ = rr_fit(X, "linear", FAST, np.random.default_rng(0))
        assert model.visit_order.tolist() == [1, 2, 0]

    def test_complete_column_keeps_mean_prediction(self):
        rng = np.random.default_rng(5)
        vals = rng.normal(size=(80, 3))
        mask = np.ones((80, 3))
        mask[rng.random(80) < 0.3, 0] = 0
        X = IncompleteMatrix(np.where(mask == 1, vals, np.nan), mask)
        Xs, _, _ = standardize(X)
        _, model, _ = rr_fit(Xs, "linear", FAST, np.random.default_rng(1))
        for j in (1, 2):  # fully observed columns are never trained
            assert np.array_equal(model.params[j].weights, np.zeros(2))
            assert model.params[j].bias == 0.0

    def test_loss_bookkeeping_sizes(self):
        Xs, _, _ = _standardized_case(n=120, d=3, seed=6)
        cfg = RoundRobinConfig(
            t_max=2, inner_steps=5, n_pairs=2, batch_size=16, sinkhorn_tol=1e-2
        )
        _, _, diag = rr_fit(Xs, "linear", cfg, np.random.default_rng(7))
        n_incomplete = 3  # every column has holes at p=0.25, n=120
        assert len(diag.cycle_losses) == 2
        assert len(diag.loss_history) == 2 * n_incomplete * 5

    def test_epsilon_override_and_default(self):
        Xs, _, _ = _standardized_case(seed=8)
        cfg = RoundRobinConfig(
            t_max=1, inner_steps=2, n_pairs=2, batch_size=16, epsilon=0.77
        )
        _, _, diag = rr_fit(Xs, "linear", cfg, np.random.default_rng(0))
        assert diag.epsilon == 0.77
        _, _, diag2 = rr_fit(Xs, "linear", FAST, np.random.default_rng(0))
        assert diag2.epsilon > 0

    def test_stratified_fallback_counted(self):
        rng = np.random.default_rng(9)
        vals = rng.normal(size=(40, 3))
        mask = np.ones((40, 3))
        mask[:30, 1] = 0  # only 10 observed rows on this column
        X = IncompleteMatrix(np.where(mask == 1, vals, np.nan), mask)
        cfg = RoundRobinConfig(
            t_max=1, inner_steps=2, n_pairs=2, batch_size=16,
            sinkhorn_tol=1e-2, mcar=True,
        )
        _, _, diag = rr_fit(X, "linear", cfg, np.random.default_rng(0))
        assert diag.n_stratified_fallbacks > 0

    def test_rejects_bad_inputs(self):
        Xs, _, _ = _standardized_case()
        with pytest.raises(ValueError, match="model_kind"):
            rr_fit(Xs, "forest", FAST)
        one_col = IncompleteMatrix(np.array([[1.0], [np.nan]]), np.array([[1], [0]]))
        with pytest.raises(ValueError, match="2 columns"):
            rr_fit(one_col, "linear", FAST)

    def test_cycle_losses_non_increasing_with_slack(self):
        Xs, _, _ = _linear_relation_case(seed=11)
        cfg = RoundRobinConfig(
            t_max=4, inner_steps=12, n_pairs=4, batch_size=64,
            sinkhorn_tol=1e-3, mcar=True,
        )
        _, _, diag = rr_fit(Xs, "linear", cfg, np.random.default_rng(12))
        losses = diag.cycle_losses
        assert len(losses) == 4
        for prev, cur in zip(losses, losses[1:]):
            assert cur <= prev * 1.05

    def test_close_to_ice_on_linear_data(self):
        Xs, truth_s, mask = _linear_relation_case(seed=13)
        cfg = RoundRobinConfig(
            t_max=10, inner_steps=30, n_pairs=2, batch_size=64,
            step_size=2e-2, sinkhorn_tol=1e-3, mcar=True,
        )
        out, _, _ = rr_fit(Xs, "linear", cfg, np.random.default_rng(14))
        rr_rmse = evaluate(truth_s, out, mask).rmse
        ice_out, _ = ice_fit(Xs)
        ice_rmse = evaluate(truth_s, ice_out, mask).rmse
        assert abs(rr_rmse - ice_rmse) < 0.2

    @pytest.mark.parametrize("kind", ["linear", "mlp"])
    def test_beats_mean_imputation(self, kind):
        Xs, truth_s, mask = _standardized_case(n=300, d=5, seed=15)
        cfg = RoundRobinConfig(
            t_max=2, inner_steps=12, n_pairs=2, batch_size=64,
            sinkhorn_tol=1e-3, mcar=True,
        )
        out, _, _ = rr_fit(Xs, kind, cfg, np.random.default_rng(16))
        ours = evaluate(truth_s, out, mask)
        mean = evaluate(truth_s, impute_mean(Xs), mask)
        assert ours.mae < mean.mae
        assert ours.w2 < mean.w2


class TestMonitoring:
    def test_reports_once_per_cycle(self):
        Xs, _, _ = _standardized_case(seed=20)
        cfg = RoundRobinConfig(
            t_max=3, inner_steps=4, n_pairs=2, batch_size=32,
            sinkhorn_tol=1e-2, monitor_fraction=0.1,
        )
        _, _, diag = rr_fit(Xs, "linear", cfg, np.random.default_rng(21))
        assert [r["cycle"] for r in diag.monitor_reports] == [1, 2, 3]
        assert all("mae" in r and np.isfinite(r["mae"]) for r in diag.monitor_reports)

    def test_off_by_default(self):
        Xs, _, _ = _standardized_case(seed=22)
        _, _, diag = rr_fit(Xs, "linear", FAST, np.random.default_rng(23))
        assert diag.monitor_reports == []

    def test_observed_entries_survive_monitoring(self):
        Xs, _, mask = _standardized_case(seed=24)
        cfg = RoundRobinConfig(
            t_max=2, inner_steps=4, n_pairs=2, batch_size=32,
            sinkhorn_tol=1e-2, monitor_fraction=0.15,
        )
        out, _, _ = rr_fit(Xs, "linear", cfg, np.random.default_rng(25))
        obs = mask == 1
        assert np.array_equal(out[obs], Xs.values[obs])

    def test_deterministic_with_monitoring(self):
        Xs, _, _ = _standardized_case(seed=26)
        cfg = RoundRobinConfig(
            t_max=2, inner_steps=4, n_pairs=2, batch_size=32,
            sinkhorn_tol=1e-2, monitor_fraction=0.1,
        )
        out1, _, _ = rr_fit(Xs, "linear", cfg, np.random.default_rng(27))
        out2, _, _ = rr_fit(Xs, "linear", cfg, np.random.default_rng(27))
        assert np.array_equal(out1, out2)


class TestTransform:
    def _fitted(self, kind="linear", seed=30):
        """Fit on a standardized linear-relation dataset; keep the scaler."""
        rng = np.random.default_rng(seed)
        n = 500
        x0 = rng.normal(size=n)
        x1 = rng.normal(size=n)
        x2 = 1.5 * x0 - 0.5 * x1 + 0.05 * rng.normal(size=n)
        vals = np.column_stack([x0, x1, x2])
        mask = np.ones((n, 3))
        mask[rng.random(n) < 0.3, 2] = 0
        X = IncompleteMatrix(np.where(mask == 1, vals, np.nan), mask)
        Xs, means, stds = standardize(X)
        cfg = RoundRobinConfig(
            t_max=10, inner_steps=30, n_pairs=2, batch_size=64,
            step_size=2e-2, sinkhorn_tol=1e-3, mcar=True,
        )
        _, model, _ = rr_fit(Xs, kind, cfg, np.random.default_rng(seed + 1))
        return model, means, stds

    def test_identity_on_complete_rows(self):
        model, _, _ = self._fitted()
        vals = np.random.default_rng(31).normal(size=(7, 3))
        X = IncompleteMatrix(vals, np.ones((7, 3)))
        assert np.array_equal(rr_transform(model, X), vals)

    def test_generalizes_to_new_rows(self):
        model, means, stds = self._fitted(seed=32)
        rng = np.random.default_rng(33)
        x0 = rng.normal(size=200)
        x1 = rng.normal(size=200)
        x2 = 1.5 * x0 - 0.5 * x1
        vals_s = (np.column_stack([x0, x1, x2]) - means) / stds
        mask = np.ones((200, 3))
        mask[rng.random(200) < 0.4, 2] = 0
        X = IncompleteMatrix(np.where(mask == 1, vals_s, np.nan), mask)
        out = rr_transform(model, X)
        err = np.abs(out[mask[:, 2] == 0, 2] - vals_s[mask[:, 2] == 0, 2])
        assert err.mean() < 0.2

    def test_single_row(self):
        model, _, _ = self._fitted(seed=34)
        X = IncompleteMatrix(
            np.array([[1.0, -0.5, np.nan]]), np.array([[1, 1, 0]])
        )
        out = rr_transform(model, X)
        assert out.shape == (1, 3)
        assert np.isfinite(out).all()

    def test_column_count_checked(self):
        model, _, _ = self._fitted(seed=35)
        X = IncompleteMatrix(np.zeros((3, 2)), np.ones((3, 2)))
        with pytest.raises(ValueError, match="columns"):
            rr_transform(model, X)


class TestModelSerialization:
    @pytest.mark.parametrize("kind", ["linear", "mlp"])
    def test_round_trip_preserves_predictions(self, kind, tmp_path):
        Xs, _, _ = _standardized_case(n=150, d=3, seed=40)
        _, model, _ = rr_fit(Xs, kind, FAST, np.random.default_rng(41))
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.kind == model.kind
        assert np.array_equal(loaded.visit_order, model.visit_order)
        assert np.allclose(loaded.col_means, model.col_means)
        X_new = IncompleteMatrix(
            np.array([[0.3, np.nan, -0.2], [np.nan, 0.1, 0.4]]),
            np.array([[1, 0, 1], [0, 1, 1]]),
        )
        assert np.allclose(rr_transform(model, X_new), rr_transform(loaded, X_new))

    def test_unknown_schema_version_rejected(self, tmp_path):
        Xs, _, _ = _standardized_case(n=100, d=3, seed=42)
        _, model, _ = rr_fit(Xs, "linear", FAST, np.random.default_rng(43))
        path = tmp_path / "model.json"
        save_model(model, path)
        doc = json.loads(path.read_text())
        doc["schema_version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(ValueError, match="schema version"):
            load_model(path)


class TestValidation:
    def test_config_dict_round_trip(self):
        cfg = RoundRobinConfig(t_max=4, inner_steps=9, epsilon=0.3, mcar=True)
        assert RoundRobinConfig.from_dict(cfg.to_dict()) == cfg

    def test_linear_params_must_be_finite(self):
        with pytest.raises(ValueError, match="finite"):
            LinearColumnParams(np.array([np.inf, 0.0]), 0.0)

    def test_model_kind_checked(self):
        with pytest.raises(ValueError, match="kind"):
            RoundRobinModel(
                "forest", [None, None], np.array([0, 1]), np.zeros(2), 1, 2
            )

    def test_visit_order_must_be_permutation(self):
        with pytest.raises(ValueError, match="permutation"):
            RoundRobinModel(
                "linear",
                [LinearColumnParams(np.zeros(1), 0.0)] * 2,
                np.array([0, 0]),
                np.zeros(2),
                1,
                2,
            )
