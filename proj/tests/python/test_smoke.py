import math

import numpy as np
import pytest

import vmclass


def test_block_count_table():
    expected = {4: 2, 8: 2, 16: 3, 32: 4, 64: 5, 128: 6, 256: 7}
    assert {w: vmclass.block_count(w) for w in expected} == expected
    with pytest.raises(vmclass.ShapeError):
        vmclass.block_count(12)


def test_fft_matches_numpy():
    rng = np.random.default_rng(0)
    x = rng.normal(size=64) + 1j * rng.normal(size=64)
    np.testing.assert_allclose(vmclass.fft(x), np.fft.fft(x), atol=1e-9)
    np.testing.assert_allclose(vmclass.magnitude_spectrum(x.real), np.abs(np.fft.fft(x.real)), atol=1e-9)


def test_synthesize_shapes():
    traces = vmclass.synthesize(seed=3, length=64)
    assert len(traces) == 8
    assert traces[0]["vm_id"] == "web-00"
    assert traces[0]["samples"].shape == (64, 16)
    assert len(vmclass.metric_names()) == 16


def test_model_forward_and_round_trip(tmp_path):
    model = vmclass.Model(8, "deepfft", seed=1)
    assert model.blocks == 2
    batch = np.random.default_rng(1).normal(size=(5, 8, 16))
    logits = model.forward(batch)
    assert logits.shape == (5, 2)
    proba = model.predict_proba(batch)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)
    model.save(tmp_path / "m.dvmw")
    loaded = vmclass.Model.load(tmp_path / "m.dvmw")
    np.testing.assert_allclose(loaded.forward(batch), logits, rtol=1e-5, atol=1e-6)
    with pytest.raises(vmclass.ShapeError):
        model.forward(np.zeros((2, 4, 16)))


def test_train_short_run():
    traces = vmclass.synthesize(seed=2, length=400, vms_per_class=2)
    model, history, report = vmclass.train(traces, window=4, epochs=5, seed=1)
    assert len(history) == 5
    assert all(math.isfinite(h["train_loss"]) for h in history)
    assert 0.0 <= report["accuracy"] <= 1.0
    assert report["error_percent"] == pytest.approx(100.0 * (1.0 - report["accuracy"]))
    sql = traces[-1]["samples"][:8].reshape(2, 4, 16)
    assert model.predict_proba(sql).shape == (2, 2)


def test_corrupt_weights(tmp_path):
    path = tmp_path / "bad.dvmw"
    path.write_bytes(b"DVMW\x01")
    with pytest.raises(vmclass.FormatError):
        vmclass.Model.load(path)
