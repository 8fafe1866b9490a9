import dataclasses
import json

import numpy as np
import pytest

from tetrobench import engine as E
from tetrobench.datagen import ScenarioSpec, build_dataset
from tetrobench.models import (ArchitectureSpec, CalibrationError, Network, TrainedModel,
                               TrainingConfig, TrainingError, build_architecture, calibrate_snr,
                               choose_alpha, correctly_predicted_intersection,
                               default_learning_rate, evaluate_accuracy, train)


@pytest.fixture(scope="module")
def small_dataset():
    return build_dataset(ScenarioSpec.paper_defaults("LIN", "WHITE", alpha=0.5, n_samples=300))


def test_mlp_widths_and_cnn_shapes():
    mlp = Network.init(build_architecture("MLP", 8), 0)
    assert [p.shape for p in mlp.params[::2]] == [(64, 64), (64, 32), (32, 16), (16, 8), (8, 2)]
    cnn = build_architecture("CNN", 8)
    tape = E.Tape()
    trace = []
    out = Network.init(cnn, 0).forward(tape, tape.constant(np.zeros((3, 8, 8))), trace=trace)
    assert out.shape == (3, 2)
    flatten_in = [t for layer, t in trace if layer.kind == "flatten"][0]
    assert flatten_in.shape == (3, 4, 1, 1)
    big = build_architecture("CNN", 64)
    assert big.layers[-1].n_in == 32 * 60 * 60


def test_architecture_round_trip_and_errors():
    arch = build_architecture("cnn", 8)
    assert ArchitectureSpec.from_dict(json.loads(json.dumps(arch.to_dict()))) == arch
    with pytest.raises(ValueError, match="unknown architecture"):
        build_architecture("RNN", 8)
    with pytest.raises(E.ShapeError):
        Network(build_architecture("LLR", 8), [np.zeros((63, 2)), np.zeros(2)])


def test_he_normal_scale():
    net = Network.init(build_architecture("MLP", 64), 3)
    w = net.params[0]
    assert w.std() == pytest.approx(np.sqrt(2 / 4096), rel=0.01)
    assert np.all(net.params[1] == 0)


def test_learning_rates():
    assert default_learning_rate("LIN", 8) == 0.004
    assert default_learning_rate("RIGID", 8) == 0.0004
    assert default_learning_rate("XOR", 64) == 0.0005


def test_training_keeps_minimum_validation_loss(small_dataset):
    cfg = TrainingConfig(epochs=12, lr=0.004, seed=1)
    model = train(build_architecture("LLR", 8), small_dataset, cfg)
    r = model.report
    assert r.best_epoch == int(np.argmin(r.val_loss))
    assert r.best_val_loss == min(r.val_loss)
    assert len(r.train_loss) == 12
    assert r.test_accuracy == evaluate_accuracy(model, small_dataset.test)
    again = train(build_architecture("LLR", 8), small_dataset, cfg)
    for a, b in zip(model.network.params, again.network.params):
        np.testing.assert_array_equal(a, b)


def test_non_finite_loss_is_reported(small_dataset):
    bad = dataclasses.replace(small_dataset)
    bad.train = dataclasses.replace(small_dataset.train, x=small_dataset.train.x.copy())
    bad.train.x[0, 0, 0] = np.nan
    with pytest.raises(TrainingError, match="epoch 0"):
        train(build_architecture("LLR", 8), bad, TrainingConfig(epochs=2, lr=0.01))


def test_checkpoint_round_trip_and_corruption(tmp_path, small_dataset):
    model = train(build_architecture("MLP", 8), small_dataset, TrainingConfig(epochs=2, lr=0.004))
    path = model.save(tmp_path / "ckpt")
    loaded = TrainedModel.load(path)
    for a, b in zip(model.network.params, loaded.network.params):
        np.testing.assert_array_equal(a, b)
    assert loaded.report.best_epoch == model.report.best_epoch
    raw = bytearray((path / "p0.f64").read_bytes())
    raw[0] ^= 1
    (path / "p0.f64").write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="checksum"):
        Network.load(path)
    (path / "p0.f64").write_bytes(bytes(raw[:-8]))
    with pytest.raises(ValueError, match="bytes"):
        Network.load(path)


def test_intersection_is_all_models_correct(small_dataset):
    a = Network.init(build_architecture("LLR", 8), 0)
    b = Network.init(build_architecture("LLR", 8), 1)
    idx = correctly_predicted_intersection([a, b], small_dataset.test)
    x = small_dataset.test.x.astype(float)
    ok = (a.predict(x) == small_dataset.test.y) & (b.predict(x) == small_dataset.test.y)
    np.testing.assert_array_equal(idx, np.flatnonzero(ok))


def test_choose_alpha_picks_smallest_reaching_threshold():
    assert choose_alpha([0.1, 0.2, 0.3], [0.5, 0.81, 0.9], 0.8) == 0.2
    assert choose_alpha([0.1, 0.2], [0.5, 0.6], 0.8) is None
    with pytest.raises(ValueError):
        choose_alpha([0.2, 0.1], [0.9, 0.9])


def test_calibration_reports_failure_with_table():
    template = ScenarioSpec.paper_defaults("LIN", "WHITE", alpha=0.0, n_samples=200)
    with pytest.raises(CalibrationError) as info:
        calibrate_snr(template, "LLR", [0.0, 0.01], trials=2, threshold=0.99,
                      config=TrainingConfig(epochs=2, lr=0.004))
    result = info.value.result
    assert result.chosen_alpha is None
    assert len(result.accuracies) == 2 and all(len(a) == 2 for a in result.accuracies)
