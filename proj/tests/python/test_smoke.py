import numpy as np
import pytest

import spongelab as sl


def small_data():
    return sl.synth_blobs(20, 3, 5, 0.3, 4)


def quick_cfg(epochs=5):
    cfg = sl.TrainConfig()
    cfg.epochs = epochs
    cfg.learning_rate = 1e-2
    cfg.batch_size = 16
    return cfg


def test_synth_blobs_shape_and_determinism():
    d = small_data()
    assert len(d) == 60 and d.dim == 5 and d.num_classes == 3
    assert d.features.shape == (60, 5)
    assert np.array_equal(d.features, small_data().features)


def test_train_predict_and_roundtrip(tmp_path):
    r = sl.train(small_data(), sl.MlpConfig(hidden_dims=[16, 8]), quick_cfg(30), sl.SpongeConfig())
    assert len(r.history) == 30
    assert r.history[-1].test_acc > 80.0
    x = r.test_set.features
    preds = r.model.predict(x)
    assert len(preds) == x.shape[0]
    path = tmp_path / "m.json"
    r.model.save(path)
    back = sl.MlpModel.load(path)
    assert back == r.model
    assert back.predict(x) == preds


def test_energy_and_pruning():
    r = sl.train(small_data(), sl.MlpConfig(hidden_dims=[16, 8]), quick_cfg(),
                 sl.SpongeConfig(poison_fraction=1.0))
    x = r.test_set.features
    base = sl.energy_proxy(r.model, x)
    assert 0.0 <= base.energy_ratio <= 1.0
    assert base.proxy_energy == base.latency_ops
    pruned = sl.weight_prune(r.model, 0.5)
    assert sl.energy_proxy(pruned, x).proxy_energy < base.proxy_energy
    masked = sl.neuron_prune(r.model, 0.25)
    assert masked.masked_count() == 4 + 2
    assert sl.compact(masked).predict(x) == masked.predict(x)


def test_forward_matches_numpy():
    m = sl.MlpModel.init(sl.MlpConfig(4, [6], 3), 1)
    x = np.random.default_rng(0).normal(size=(7, 4))
    (w0, w1), (b0, b1) = m.weights(), m.biases()
    h = np.maximum(x @ w0 + b0, 0.0)
    np.testing.assert_allclose(m.logits(x), h @ w1 + b1, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(m.hidden_activations(x)[0], h, rtol=1e-12, atol=1e-12)


def test_grid_records_and_csv(tmp_path):
    spec = sl.GridSpec.from_json(
        '{"sponge_pcts": [0, 100], "prune_pcts": [20], "seeds": [0],'
        ' "model": {"hidden_dims": [8]}, "train": {"epochs": 2}}')
    assert spec.cells_per_seed() == 2 * (1 + 2)
    records = sl.run_grid(spec, small_data())
    assert len(records) == 6
    text = sl.records_to_csv(records)
    assert text.splitlines()[0].startswith("dataset,sponge_pct,prune_type")
    assert sl.records_to_csv(sl.records_from_csv(text)) == text
    svg = tmp_path / "t.svg"
    sl.emit_trend_svg(records, "energy_ratio", "sponge_pct", svg)
    assert svg.read_text().count("<polyline") == 2


def test_errors_map_to_python_exceptions(tmp_path):
    with pytest.raises(ValueError):
        sl.weight_prune(sl.MlpModel.init(sl.MlpConfig(3, [4], 2), 0), 1.5)
    with pytest.raises(sl.ValidationError):
        sl.GridSpec.from_json('{"bogus": 1}')
    with pytest.raises(OSError):
        sl.MlpModel.load(tmp_path / "missing.json")
    with pytest.raises(ValueError):
        sl.Dataset(np.zeros((3, 2)), [0, 1])
    assert sl.window_count(10, 4, 2) == 4
