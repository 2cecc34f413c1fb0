import itertools
import json

import pytest

import fstx


def additive_table(weights):
    n = len(weights)
    return [sum(w for i, w in enumerate(weights) if word >> i & 1) for word in range(1 << n)]


def test_additive_game_exact_and_sampled():
    w = [0.5, -1.0, 2.0, 0.25]
    table = additive_table(w)
    assert fstx.exact_shapley(4, table) == pytest.approx(w, abs=1e-12)
    assert fstx.sampled_shapley(4, table, samples=3, seed=9) == pytest.approx(w, abs=1e-12)


def test_callable_game_efficiency():
    # Unanimity game on players 0 and 2.
    phi = fstx.shapley_of(3, lambda word: 1.0 if word & 0b101 == 0b101 else 0.0)
    assert phi == pytest.approx([0.5, 0.0, 0.5])
    sampled = fstx.shapley_of(3, lambda word: float(bin(word).count("1")) ** 2, samples=50, seed=1)
    assert sum(sampled) == pytest.approx(9.0)


def test_sampling_is_seeded():
    table = [float((word * 2654435761) % 97) for word in range(1 << 6)]
    a = fstx.sampled_shapley(6, table, samples=20, seed=4)
    assert a == fstx.sampled_shapley(6, table, samples=20, seed=4)
    assert a != fstx.sampled_shapley(6, table, samples=20, seed=5)


def test_axioms():
    r = fstx.verify_axioms(5, 6, 3)
    assert r["games"] == 5
    assert r["worst"] <= 1e-9


def test_metric_examples():
    assert fstx.relevance_mask([0.9, 0.1, 0.2, 0.4], [0.3, 0.8, 0.1, 0.2], 2) == [1, 1, 0, 0]
    assert fstx.q_metric([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0
    assert fstx.top_fraction_mask([-1, 5, 0, 2], 0.5) == [0, 1, 0, 1]
    assert fstx.delta_stability([1, 0], {"c23": [0, 1], "c40": [1, 0]}) == 0.5
    assert [fstx.schedule_count(p, 16) for p in (60, 95)] == [10, 15]
    r = fstx.q_mean([1, 2, 3, 4], [4, 3, 2, 1], [0, 0, 0, 0])
    assert r["kept_counts"] == [2, 3]


def test_errors_map_to_python():
    with pytest.raises(fstx.ParameterError):
        fstx.relevance_mask([1, 2], [1, 2], 0)
    with pytest.raises(fstx.FstxError):
        fstx.q_metric([1, 2, 3], [1, 0])
    with pytest.raises(fstx.ConfigError):
        fstx.config_hash({"no_such_key": 1})


def test_config_round_trip():
    cfg = fstx.default_config()
    assert cfg["loss_weights"]["lambda_inter"] == 0.1
    assert fstx.config_hash(cfg) == fstx.config_hash(json.loads(json.dumps(cfg)))
    cfg["shapley"]["samples"] = 7
    assert fstx.config_hash(cfg) != fstx.config_hash(fstx.default_config())


def tiny_config():
    cfg = fstx.default_config()
    cfg["world"].update(n_identities=6, fake_identities=4, clips_per_identity=2, train_clips=1, frames_per_clip=1)
    for key in ("detector", "encoders"):
        cfg[key]["epochs"] = 5
    cfg["fst"]["epochs"] = 3
    cfg["seeds"] = [1, 2]
    cfg["shapley"].update(grid=4, samples=8)
    cfg["test_images"] = 3
    cfg["n_pair_identities"] = 2
    return cfg


def test_tiny_experiment_is_deterministic(tmp_path):
    a = fstx.run_experiment("hyp2", tiny_config(), tmp_path / "a")
    b = fstx.run_experiment("hyp2", tiny_config(), tmp_path / "b")
    assert a == b
    assert a["checks"]["real_counts_equal"]
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()
    with pytest.raises(fstx.ParameterError):
        fstx.run_experiment("hyp9", tiny_config())
