import json

import numpy as np
import pytest

import cift


def test_affinity_rows_are_stochastic():
    rng = np.random.default_rng(0)
    a = cift.affinity(rng.normal(size=(6, 4)), rng.normal(size=(9, 4)), 0.2, 3)
    assert a.shape == (6, 9)
    np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)
    assert ((a > 0).sum(axis=1) <= 3).all()


def test_metrics_agree_with_numpy():
    labels = [0, 0, 1, 1]
    ideal = np.array([[0.5, 0.5, 0, 0], [0.5, 0.5, 0, 0], [0, 0, 0.5, 0.5], [0, 0, 0.5, 0.5]])
    assert cift.affinity_quality(ideal, labels) == 1.0
    assert cift.affinity_error_ratio(ideal, labels, 2) == 0.0
    dist = np.array([[0.1, 0.3, 0.2]])
    r = cift.cmc_map(dist, [1], [1, 0, 1])
    assert r["map"] == pytest.approx((1 + 2 / 2) / 2)
    assert r["cmc"] == [1.0, 1.0, 1.0]


def test_cross_entropy_matches_numpy():
    rng = np.random.default_rng(1)
    logits = rng.normal(size=(5, 3))
    labels = [0, 2, 1, 1, 0]
    log_p = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    assert cift.cross_entropy(logits, labels) == pytest.approx(-log_p[range(5), labels].mean(), rel=1e-12)


def test_null_intervention_effect_is_zero():
    y = np.arange(6.0).reshape(2, 3)
    assert (cift.tie(y, y) == 0).all()
    x = cift.sample_intervened(np.zeros(3), np.ones(3), 4000, seed=2)
    assert abs(x.mean()) < 0.05
    with pytest.raises(cift.ParameterError):
        cift.sample_intervened(np.zeros(3), np.array([1.0, 0.0, 1.0]), 2)


def test_dataset_and_surface():
    ds = cift.gen_dataset(num_identities=3, per_id_per_modality=2, dim=4, seed=5)
    assert ds["features"].shape == (12, 4)
    assert sorted(set(ds["modalities"])) == [0, 1]
    cells = cift.qy_surface([0.0, 1.0], [0.0, 1.0], repeats=2, seed=1)
    assert len(cells) == 4
    assert cift.spearman([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)


def test_short_training_run(tmp_path):
    cfg = {"seed": 1, "train": {"epochs": 1, "steps_per_epoch": 3, "decay_epochs": [], "warmup_epochs": 0}}
    out = cift.run_experiment(json.dumps(cfg), str(tmp_path))
    assert len(out["losses"]) == 3
    assert all(np.isfinite(step["total"]) for step in out["losses"])
    assert 0.0 < out["vis2ir"]["map"] <= 1.0
    assert out["model"][:8] == b"CIFTMDL1"
    assert (tmp_path / "model.bin").read_bytes() == out["model"]
    with pytest.raises(cift.ConfigError):
        cift.run_experiment('{"bogus": 1}')
