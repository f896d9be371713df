import math

import numpy as np
import pytest

import mmlab


def test_primitives():
    assert mmlab.percentile(list(range(1, 11)), 70) == 7
    p = mmlab.sampling_distribution([1.0, 0.0], 1.0)
    assert p[0] == pytest.approx(math.e / (math.e + 1), rel=1e-12)
    assert mmlab.threshold_weights([0.5, 1.0, 2.0], 1.0) == [1.0, 1.0, 0.0]
    assert mmlab.adjust_lambda(0.3, 1.0) == pytest.approx(0.7)
    assert mmlab.corrupted_count(20, 50) == 10
    loss = mmlab.softmax_ce(np.zeros((1, 2)), np.array([[1.0, 0.0]]))
    assert loss[0] == pytest.approx(math.log(2))


def test_split_shapes_and_noise_rate():
    split = mmlab.generate_split("default", ["level=20", "train_per_class=40", "val_per_class=10"])
    assert split["train_features"].shape == (400, 20)
    assert split["val_features"].shape == (100, 20)
    assert int((split["train_provenance"] != 0).sum()) == 80
    assert int((split["val_provenance"] != 0).sum()) == 0


def test_train_is_deterministic():
    args = ("quick", ["max_epochs=2"])
    a, b = mmlab.train(*args), mmlab.train(*args)
    assert a == b
    assert 0.0 <= a["final"] <= a["peak"] <= 1.0


def test_sweep_and_table():
    text = mmlab.sweep_csv("quick", ["max_epochs=1"])
    rows = mmlab.read_trials(text)
    assert len(rows) == 8
    assert {r["method"] for r in rows} == {"vanilla", "mentormix"}
    assert "/" in mmlab.render_table(text)


def test_errors_map_to_python():
    with pytest.raises(mmlab.ConfigError):
        mmlab.config("default", ["nonsense=1"])
    with pytest.raises(ValueError):
        mmlab.train("default", ["level=25"])
    assert mmlab.config("paper_grid")["sweep"]["grid"]["mentormix"]["alpha"] == [0.4, 1.0, 2.0]


def test_selftest_passes():
    results = mmlab.selftest()
    assert results and all(ok for _, ok, _ in results)
