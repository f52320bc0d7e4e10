import json
import math

import numpy as np
import pytest

import lazydit


def test_linalg():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(lazydit.matmul(a, b), [[2.0, 1.0], [4.0, 3.0]])
    assert lazydit.frobenius_norm(np.array([[3.0, 4.0]])) == 5.0
    assert lazydit.spectral_norm(np.diag([2.0, 0.5])) == pytest.approx(2.0)
    assert lazydit.cosine_similarity(np.eye(2), b) == 0.0
    with pytest.raises(lazydit.ShapeError):
        lazydit.matmul(a, np.ones((3, 3)))
    with pytest.raises(lazydit.Error):
        lazydit.cosine_similarity(np.zeros((2, 2)), a)


def test_scheduler():
    s = lazydit.build_schedule(1, 0.02, 0.02)
    assert s.alpha[1] == pytest.approx(math.sqrt(0.98))
    z = np.random.default_rng(0).normal(size=(3, 4))
    s = lazydit.build_schedule(100)
    np.testing.assert_array_equal(lazydit.ddim_step(z, z * 2, 40, 40, s), z)
    np.testing.assert_array_equal(lazydit.cfg_combine(z, z, 3.0), z)
    assert lazydit.lazy_score(np.eye(2), [2.0, -1.0]) == pytest.approx(1 / (1 + math.exp(-1)))


def test_zero_skip_matches_dense():
    cfg = lazydit.ModelConfig()
    cfg.layers, cfg.patches, cfg.hidden, cfg.train_steps, cfg.num_classes = 2, 4, 6, 100, 3
    cfg.weight_clip = 0.5
    w = lazydit.init_model(cfg, 1)
    sched = lazydit.build_schedule(100)
    plan = lazydit.uniform_plan(100, 8, 1.5)
    rng = np.random.default_rng(1)
    z = [rng.normal(size=(4, 6)) for _ in range(2)]
    dense = lazydit.sample_dense(w, sched, plan, z, [0, 2])
    lazy = lazydit.sample_lazy(w, lazydit.PredictorBank(2, 6), sched, plan, z, [0, 2], force_score=0.0)
    for a, b in zip(dense, lazy["latents"]):
        np.testing.assert_array_equal(a, b)
    assert lazy["gamma_attn"] == 0.0
    forced = lazydit.sample_lazy(w, lazydit.PredictorBank(2, 6), sched, plan, z, [0, 2], force_score=1.0)
    assert forced["gamma_feed"] == pytest.approx(7 / 8)
    assert forced["heatmap_csv"].startswith("layer,kind,step,skip_rate\n")
    assert w.forward(z[0], 5, lazydit.NULL_CLASS).shape == (4, 6)


def test_macs():
    assert 5.61 <= lazydit.mac_count("xl2-256", 50, 0.0) <= 5.83
    assert 22.39 <= lazydit.mac_count("xl2-512", 50, 0.0) <= 23.31
    assert 2.81 <= lazydit.mac_count("xl2-256", 50, 0.5, overhead=True) <= 2.93


def test_verify_and_train():
    report = json.loads(lazydit.verify("scaling", trials=50))
    assert report["pass"] is True
    cfg = json.loads(lazydit.default_config())
    cfg["train"]["steps"] = 2
    cfg["train"]["eval_batch"] = 2
    out = lazydit.train(json.dumps(cfg))
    assert out["loss_trace_csv"].count("\n") == 3
    assert 0.0 <= out["gamma_attn"] <= 1.0
    with pytest.raises(lazydit.ConfigError):
        lazydit.train('{"bogus": 1}')


def test_cli():
    code, out, _ = lazydit.cli(["macs", "--preset", "xl2-256", "--steps", "50"])
    assert code == 0 and out.startswith("5.7")
    code, _, _ = lazydit.cli(["nope"])
    assert code == 2
