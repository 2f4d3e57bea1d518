import numpy as np
import pytest

from spectralforge.core import TargetMatrix
from spectralforge.nn import (
    Activation,
    Conv1D,
    Dense,
    Flatten,
    ModelSpec,
    forward,
)
from spectralforge.train import (
    EarlyStopper,
    TargetScaler,
    TrainConfig,
    heuristic_lr,
    inner_split,
    predict,
    train_model,
)
from conftest import make_matrix


def tiny_model(input_len=16):
    return ModelSpec(
        (
            Conv1D(1, 4, 5, 1, "same"), Activation("relu"),
            Flatten(),
            Dense(4 * input_len, 8), Activation("relu"),
            Dense(8, 3), Activation("identity"),
        ),
        input_len, 3,
    )


def linear_synthetic(n=40, f=16, seed=0):
    """Targets are exact linear functions of the spectra (zero noise)."""
    rng = np.random.default_rng(seed)
    basis = rng.uniform(0.1, 1.0, (3, f))
    y = rng.uniform([70, 10, 2], [80, 20, 8], (n, 3))
    x = y @ basis
    return make_matrix(x), TargetMatrix(y)


class TestHeuristicLr:
    def test_paper_batch_size(self):
        assert heuristic_lr(38) == 0.001484375
        assert round(heuristic_lr(38), 4) == 0.0015

    def test_fixed_point(self):
        assert heuristic_lr(256) == 0.01

    def test_batch_one(self):
        assert heuristic_lr(1) == 3.90625e-5

    def test_invalid(self):
        with pytest.raises(ValueError):
            heuristic_lr(0)


class TestTargetScaler:
    def test_round_trip(self):
        rng = np.random.default_rng(1)
        y = rng.uniform([70, 10, 2], [80, 20, 8], (20, 3))
        scaler = TargetScaler.fit(y)
        np.testing.assert_allclose(scaler.inverse(scaler.transform(y)), y, atol=1e-12)

    def test_transform_moments(self):
        rng = np.random.default_rng(2)
        y = rng.uniform(0, 10, (50, 3))
        z = TargetScaler.fit(y).transform(y)
        np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(z.std(axis=0, ddof=1), 1.0, atol=1e-12)

    def test_constant_column_rejected(self):
        y = np.ones((5, 3))
        with pytest.raises(ValueError, match="constant"):
            TargetScaler.fit(y)

    def test_known_inverse(self):
        scaler = TargetScaler(np.array([75.0, 15.0, 5.0]), np.array([1.0, 1.0, 1.0]))
        np.testing.assert_allclose(scaler.inverse(np.zeros((1, 3))), [[75.0, 15.0, 5.0]])


class TestEarlyStopper:
    def test_stops_after_patience_non_improvements(self):
        from spectralforge.nn import init_state

        state = init_state(tiny_model(), 0)
        stopper = EarlyStopper(patience=2)
        losses = [1.0, 0.9, 0.95, 0.91]
        stopped_at = None
        for epoch, loss in enumerate(losses, start=1):
            stopper.update(epoch, loss, state)
            if stopper.should_stop:
                stopped_at = epoch
                break
        assert stopped_at == 4  # second consecutive non-improvement
        assert stopper.best_epoch == 2
        assert stopper.best_loss == 0.9

    def test_best_loss_non_increasing(self):
        from spectralforge.nn import init_state

        state = init_state(tiny_model(), 0)
        stopper = EarlyStopper(patience=10)
        best_seen = np.inf
        rng = np.random.default_rng(0)
        for epoch in range(1, 30):
            stopper.update(epoch, float(rng.uniform(0, 1)), state)
            assert stopper.best_loss <= best_seen
            best_seen = stopper.best_loss


class TestInnerSplit:
    def test_paper_fraction(self):
        x, y = linear_synthetic(n=32)
        (tr_x, tr_y), (val_x, val_y) = inner_split(x, y, 0.15, seed=0)
        assert val_x.n_samples == 5  # ceil(0.15 * 32)
        assert tr_x.n_samples == 27
        assert tr_y.n_samples == 27 and val_y.n_samples == 5

    def test_deterministic(self):
        x, y = linear_synthetic(n=20)
        a = inner_split(x, y, 0.2, seed=7)
        b = inner_split(x, y, 0.2, seed=7)
        assert a[0][0].sample_ids == b[0][0].sample_ids

    def test_no_overlap_and_complete(self):
        x, y = linear_synthetic(n=21)
        (tr_x, _), (val_x, _) = inner_split(x, y, 0.3, seed=3)
        ids = set(tr_x.sample_ids) | set(val_x.sample_ids)
        assert len(ids) == 21
        assert not set(tr_x.sample_ids) & set(val_x.sample_ids)

    def test_degenerate_fraction_rejected(self):
        x, y = linear_synthetic(n=10)
        with pytest.raises(ValueError):
            inner_split(x, y, 0.0, seed=0)
        with pytest.raises(ValueError):
            inner_split(x, y, 0.999, seed=0)  # empty training part


class TestTrainModel:
    def _prepared(self, seed=0):
        x, y = linear_synthetic(seed=seed)
        tr_x, tr_y = x.rows[:32], y.rows[:32]
        val_x, val_y = x.rows[32:], y.rows[32:]
        scaler = TargetScaler.fit(tr_y)
        return tr_x, scaler.transform(tr_y), val_x, scaler.transform(val_y), scaler

    def test_loss_drops_on_learnable_data(self):
        tr_x, tr_y, val_x, val_y, _ = self._prepared()
        cfg = TrainConfig(batch_size=8, max_epochs=200, patience=200, seed=1)
        _, report = train_model(tiny_model(), tr_x, tr_y, val_x, val_y, cfg)
        assert report.train_loss[-1] < 0.01 * report.train_loss[0]

    def test_best_model_restoration(self):
        tr_x, tr_y, val_x, val_y, _ = self._prepared()
        cfg = TrainConfig(batch_size=8, max_epochs=40, patience=10, seed=2)
        spec = tiny_model()
        state, report = train_model(spec, tr_x, tr_y, val_x, val_y, cfg)
        from spectralforge.nn import huber_loss

        pred, _ = forward(spec, state, val_x, mode="eval")
        loss, _ = huber_loss(pred, val_y, cfg.huber_delta)
        assert loss == pytest.approx(min(report.val_loss), abs=1e-12)
        assert report.best_epoch == int(np.argmin(report.val_loss)) + 1

    def test_early_stopping_bound(self):
        tr_x, tr_y, val_x, val_y, _ = self._prepared()
        cfg = TrainConfig(batch_size=8, max_epochs=300, patience=5, seed=3)
        _, report = train_model(tiny_model(), tr_x, tr_y, val_x, val_y, cfg)
        assert report.epochs_run <= report.best_epoch + cfg.patience

    def test_patience_ge_max_epochs_runs_all(self):
        tr_x, tr_y, val_x, val_y, _ = self._prepared()
        cfg = TrainConfig(batch_size=16, max_epochs=8, patience=8, seed=4)
        _, report = train_model(tiny_model(), tr_x, tr_y, val_x, val_y, cfg)
        assert report.epochs_run == 8
        assert not report.stopped_early

    def test_epoch_determinism(self):
        tr_x, tr_y, val_x, val_y, _ = self._prepared()
        cfg = TrainConfig(batch_size=8, max_epochs=12, patience=12, seed=5)
        _, r1 = train_model(tiny_model(), tr_x, tr_y, val_x, val_y, cfg)
        _, r2 = train_model(tiny_model(), tr_x, tr_y, val_x, val_y, cfg)
        assert r1.train_loss == r2.train_loss
        assert r1.val_loss == r2.val_loss

    def test_report_json_fields(self):
        tr_x, tr_y, val_x, val_y, _ = self._prepared()
        cfg = TrainConfig(batch_size=16, max_epochs=3, patience=3, seed=6)
        _, report = train_model(tiny_model(), tr_x, tr_y, val_x, val_y, cfg)
        doc = report.to_json_dict()
        assert set(doc) == {"epochs", "train_loss", "val_loss", "best_epoch", "stopped_early"}
        assert doc["epochs"] == 3


class TestPredict:
    def test_deterministic_and_inverse_scaled(self):
        x, y = linear_synthetic(n=10)
        spec = tiny_model()
        from spectralforge.nn import init_state

        state = init_state(spec, 1)
        scaler = TargetScaler(np.array([75.0, 15.0, 5.0]), np.array([1.0, 1.0, 1.0]))
        p1 = predict(state, spec, x, scaler)
        p2 = predict(state, spec, x, scaler)
        np.testing.assert_array_equal(p1.rows, p2.rows)

    def test_zero_network_output_gives_scaler_mean(self):
        x, _ = linear_synthetic(n=4)
        spec = tiny_model()
        from spectralforge.nn import init_state

        state = init_state(spec, 2)
        for p in state.params:  # zero all parameters -> network output 0
            for arr in p.values():
                arr[:] = 0.0
        scaler = TargetScaler(np.array([75.0, 15.0, 5.0]), np.ones(3))
        pred = predict(state, spec, x, scaler)
        np.testing.assert_allclose(pred.rows, np.tile([75.0, 15.0, 5.0], (4, 1)))

    def test_row_permutation_equivariance(self):
        x, _ = linear_synthetic(n=8)
        spec = tiny_model()
        from spectralforge.nn import init_state

        state = init_state(spec, 3)
        scaler = TargetScaler(np.zeros(3), np.ones(3))
        perm = [3, 1, 0, 2, 7, 6, 5, 4]
        direct = predict(state, spec, x.take(perm), scaler)
        permuted = predict(state, spec, x, scaler).rows[perm]
        np.testing.assert_allclose(direct.rows, permuted, atol=1e-12)

    def test_width_mismatch_rejected(self):
        x, _ = linear_synthetic(n=4, f=20)
        spec = tiny_model(16)
        from spectralforge.nn import init_state

        scaler = TargetScaler(np.zeros(3), np.ones(3))
        with pytest.raises(ValueError, match="width"):
            predict(init_state(spec, 0), spec, x, scaler)
