import json

import numpy as np
import pytest

from kgam.datasets import Dataset, friedman_generate, iris_binarize, iris_load, split
from kgam.embedding import SchemaError, fit_normalizer
from kgam.koppen import DomainError, KstParams
from kgam.model import (
    KgamModel,
    build_model,
    embed,
    evaluate,
    format_confusion,
    loss_value,
    metrics,
    outer_function,
    predict,
    predict_batch,
    train,
)
from kgam.neural import Mlp, TrainConfig, TrainingDivergence, init_mlp, outer_dims
from kgam.neural import predict as net_predict


def zero_out(model):
    for net in model.nets:
        for arr in net.weights + net.biases:
            arr[:] = 0.0
    return model


def small_friedman(n=40, seed=0):
    ds = friedman_generate(n, seed=seed)
    p = KstParams(d=5, k_digits=4)
    return ds, p, fit_normalizer(ds.X, p)


def identity_unit_model():
    p = KstParams(d=1, k_digits=2, n_beta=2)
    norm = fit_normalizer(np.array([[0.0], [1.0]]), p)
    net = Mlp([1, 1, 1], [np.array([[1.0]]), np.array([[1.0]])], [np.array([0.0]), np.array([0.0])])
    return KgamModel(p, norm, "shared_g", [net])


class TestPredict:
    def test_zero_regression(self):
        ds, p, norm = small_friedman()
        model = zero_out(build_model(p, norm, "per_channel_g", dims=[1, 4, 1]))
        np.testing.assert_array_equal(predict_batch(model, ds.X), 0.0)

    def test_zero_classification(self):
        ds = iris_binarize(iris_load())
        p = KstParams(d=3)
        model = zero_out(build_model(p, fit_normalizer(ds.X, p), "shared_g", "binary_classification", [1, 3, 1]))
        assert predict(model, ds.X[0]) == 0.5

    def test_identity_unit_net(self):
        # z = (0, 1.001, 2.002); ReLU passes all three through
        assert predict(identity_unit_model(), [0.0]) == pytest.approx(3.0030, abs=1e-12)

    def test_additivity_per_channel(self):
        ds, p, norm = small_friedman()
        model = build_model(p, norm, "per_channel_g", dims=[1, 6, 6, 1], seed=3)
        Z = embed(model, ds.X)
        by_channel = np.zeros(ds.n)
        for q, net in enumerate(model.nets):
            by_channel += net_predict(net, Z[:, q])
        np.testing.assert_array_equal(predict_batch(model, ds.X), by_channel)

    def test_outer_function_sums_to_prediction(self):
        ds, p, norm = small_friedman()
        model = build_model(p, norm, "per_channel_g", dims=[1, 6, 1], fit_data=(ds.X, ds.y))
        Z = embed(model, ds.X)
        total = sum(outer_function(model, Z[:, q], q) for q in range(model.n_channels))
        np.testing.assert_allclose(total, predict_batch(model, ds.X), rtol=1e-12, atol=1e-12)

    def test_badic_mode(self):
        ds, p, norm = small_friedman()
        model = build_model(p, norm, "badic_single_g", dims=[1, 4, 1], badic_base=10)
        assert embed(model, ds.X).shape == (ds.n, 1)
        assert np.all(np.isfinite(predict_batch(model, ds.X)))

    def test_classification_in_unit_interval(self):
        ds = iris_binarize(iris_load())
        p = KstParams(d=3)
        model = build_model(p, fit_normalizer(ds.X, p), "per_channel_g", "binary_classification", [1, 8, 1])
        prob = predict_batch(model, ds.X)
        assert np.all((prob > 0) & (prob < 1))

    def test_schema_mismatch(self):
        _, p, norm = small_friedman()
        model = build_model(p, norm, dims=[1, 2, 1])
        with pytest.raises(SchemaError):
            predict(model, np.zeros(4))

    def test_out_of_domain(self):
        _, p, norm = small_friedman()
        model = build_model(p, norm, dims=[1, 2, 1])
        with pytest.raises(DomainError):
            predict(model, np.full(5, 10.0))

    def test_net_count_validated(self):
        _, p, norm = small_friedman()
        with pytest.raises(ValueError):
            KgamModel(p, norm, "per_channel_g", [init_mlp([1, 2, 1], 0)])
        with pytest.raises(ValueError):
            KgamModel(p, norm, "badic_single_g", [init_mlp([1, 2, 1], 0)])

    def test_default_architecture(self):
        _, p, norm = small_friedman()
        model = build_model(p, norm, "per_channel_g")
        assert len(model.nets) == 11 and model.nets[0].dims == outer_dims(16, 18)


class TestTrain:
    def test_zero_epochs(self):
        ds, p, norm = small_friedman()
        model = build_model(p, norm, dims=[1, 4, 1])
        out, trace = train(model, ds, TrainConfig(epochs=0))
        assert trace == []
        for a, b in zip(model.nets[0].weights, out.nets[0].weights):
            assert a.tobytes() == b.tobytes()

    def test_input_model_not_mutated(self):
        ds, p, norm = small_friedman()
        model = build_model(p, norm, dims=[1, 4, 1])
        before = model.nets[0].weights[0].copy()
        train(model, ds, TrainConfig(epochs=3))
        np.testing.assert_array_equal(model.nets[0].weights[0], before)

    def test_embedding_frozen(self):
        ds, p, norm = small_friedman()
        model = build_model(p, norm, "per_channel_g", dims=[1, 4, 1], fit_data=(ds.X, ds.y))
        snapshot = json.dumps([p.to_dict(), norm.to_dict()], sort_keys=True)
        out, _ = train(model, ds, TrainConfig(epochs=5, learning_rate=1e-2))
        assert json.dumps([out.params.to_dict(), out.normalizer.to_dict()], sort_keys=True) == snapshot
        np.testing.assert_array_equal(embed(out, ds.X), embed(model, ds.X))

    def test_constant_target(self):
        ds, p, norm = small_friedman()
        const = Dataset(ds.feature_names, ds.X, np.full(ds.n, 3.5))
        model = build_model(p, norm, "per_channel_g", dims=[1, 4, 1], seed=1)
        out, trace = train(model, const, TrainConfig(epochs=200, learning_rate=1e-3))
        assert trace[-1] <= np.mean(const.y**2)

    @pytest.mark.parametrize("seed", range(20))
    def test_tiny_step_does_not_increase_loss(self, seed):
        ds, p, norm = small_friedman(n=16, seed=seed)
        mode = ("shared_g", "per_channel_g")[seed % 2]
        model = build_model(p, norm, mode, dims=[1, 5, 5, 1], seed=seed, fit_data=(ds.X, ds.y))
        Z = embed(model, ds.X)
        before = loss_value(model, Z, ds.y)
        out, trace = train(model, ds, TrainConfig(learning_rate=1e-6, epochs=1, batch_size=ds.n))
        assert trace[0] <= before

    def test_logistic_descent(self):
        ds = split(iris_binarize(iris_load()), 105, 0)
        p = KstParams(d=3)
        model = build_model(p, fit_normalizer(ds.X, p), "per_channel_g", "binary_classification", [1, 8, 1])
        out, trace = train(model, ds, TrainConfig(epochs=30, learning_rate=1e-2))
        assert trace[-1] < trace[0]
        assert out.intercept != 0.0

    def test_trace_length_and_determinism(self):
        ds, p, norm = small_friedman()
        model = build_model(p, norm, "shared_g", dims=[1, 8, 1], fit_data=(ds.X, ds.y))
        cfg = TrainConfig(epochs=7, learning_rate=1e-3, seed=4)
        a, ta = train(model, ds, cfg)
        b, tb = train(model, ds, cfg)
        assert len(ta) == 7 and ta == tb
        assert a.nets[0].weights[1].tobytes() == b.nets[0].weights[1].tobytes()

    def test_divergence_reports_epoch(self):
        ds, p, norm = small_friedman()
        model = build_model(p, norm, "shared_g", dims=[1, 8, 1])
        with pytest.raises(TrainingDivergence) as info:
            train(model, ds, TrainConfig(epochs=50, learning_rate=1e6))
        assert info.value.epoch is not None and 0 <= info.value.epoch < 50

    def test_logistic_needs_binary_targets(self):
        ds, p, norm = small_friedman()
        model = build_model(p, norm, dims=[1, 2, 1])
        with pytest.raises(ValueError):
            train(model, ds, TrainConfig(epochs=1), loss="logistic")


class TestMetrics:
    def test_perfect_classifier(self):
        y = np.array([0, 1, 1, 0.0])
        m = metrics("binary_classification", y, y)
        assert m["rmse"] == 0 and m["accuracy"] == 1 and m["confusion"] == [[2, 0], [0, 2]]

    def test_constant_half(self):
        y = np.array([0, 1, 0, 1.0])
        m = metrics("binary_classification", np.full(4, 0.5), y)
        assert m["accuracy"] == 0.5 and m["rmse"] == 0.5

    def test_confusion_layout(self):
        y = np.array([0, 0, 1, 1, 1.0])
        m = metrics("binary_classification", np.array([0.9, 0.1, 0.2, 0.8, 0.7]), y)
        assert m["confusion"] == [[1, 1], [1, 2]]
        text = format_confusion(m["confusion"])
        assert "Predicted 0" in text and "Actual 1" in text

    def test_regression(self):
        m = metrics("regression", np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 3.0]))
        assert m["rmse"] == 0 and m["r2"] == 1

    def test_empty_split(self):
        ds, p, norm = small_friedman()
        model = build_model(p, norm, dims=[1, 2, 1])
        with pytest.raises(ValueError):
            evaluate(model, ds, "test")
