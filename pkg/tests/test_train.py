import math
import sys

import numpy as np
import pytest

from dnfcount.nn import autodiff as ad
from dnfcount.nn.checkpoint import dumps_model, load_model, loads_model, save_model
from dnfcount.nn.model import ModelConfig, init_params
from dnfcount.nn.train import (
    AdamState,
    NonFiniteLoss,
    TrainConfig,
    TrainingRecord,
    adam_step,
    clip_by_global_norm,
    mean_loss,
    train,
)

from _util import random_formula

CFG = ModelConfig(dim=8, iterations=2)


def records(seed=0, count=12):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        f = random_formula(rng, 4, 3)
        out.append(TrainingRecord(f, rng.random(4), math.log(rng.uniform(0.1, 0.9)), 0.0486285, f"r{i}"))
    return out


def test_zero_gradients_leave_params_unchanged():
    params = {"a": np.array([1.0, -2.0])}
    state = AdamState()
    adam_step(params, {"a": np.zeros(2)}, state, TrainConfig(lr=0.1))
    assert params["a"].tolist() == [1.0, -2.0]


def test_clipping_scales_before_moments():
    g = np.array([0.0, 2.0])
    clipped, norm = clip_by_global_norm({"a": g}, 0.5)
    assert norm == 2.0
    assert clipped["a"].tolist() == [0.0, 0.5]
    state = AdamState()
    cfg = TrainConfig(lr=0.1, clip=0.5)
    adam_step({"a": np.zeros(2)}, {"a": g}, state, cfg)
    assert state.m["a"] == pytest.approx((1 - cfg.beta1) * 0.25 * g)
    assert state.v["a"] == pytest.approx((1 - cfg.beta2) * (0.25 * g) ** 2)


def test_adam_updates_tensors_in_place():
    p = ad.parameter(np.array([1.0]))
    adam_step({"p": p}, {"p": np.array([1.0])}, AdamState(), TrainConfig(lr=0.1))
    assert p.data[0] == pytest.approx(0.9)


def test_adam_converges_on_quadratic():
    x = {"x": np.array([10.0])}
    state = AdamState()
    cfg = TrainConfig(lr=0.05, clip=0.5)
    for _ in range(5000):
        adam_step(x, {"x": 2.0 * (x["x"] - 3.0)}, state, cfg)
    assert abs(x["x"][0] - 3.0) < 1e-3


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(clip=-1)


def test_first_epoch_improves_loss():
    recs = records()
    before = mean_loss(init_params(CFG, 0), CFG, recs)
    res = train(recs, CFG, TrainConfig(lr=1e-3, epochs=1, batch_size=4, seed=0))
    assert res.steps == 3
    assert mean_loss(res.params, CFG, recs) < before
    assert len(res.epoch_losses) == 1 and len(res.step_losses) == 3


def test_training_is_deterministic():
    recs = records(1)
    tc = TrainConfig(lr=1e-3, epochs=2, batch_size=5, seed=3)
    a = train(recs, CFG, tc)
    b = train(recs, CFG, tc)
    assert dumps_model(a.params, CFG) == dumps_model(b.params, CFG)
    assert a.epoch_losses == b.epoch_losses


def test_max_steps_and_callback():
    seen = []
    res = train(records(), CFG, TrainConfig(lr=1e-3, epochs=5, batch_size=4, max_steps=5),
                on_epoch=lambda e, loss, p: seen.append(e))
    assert res.steps == 5
    assert seen == [0, 1]


def test_training_errors():
    with pytest.raises(ValueError):
        train([], CFG, TrainConfig())
    bad = records(count=2)
    bad[1].label_mean = float("nan")
    with pytest.raises(ValueError, match="r1"):
        train(bad, CFG, TrainConfig())


def test_non_finite_loss_names_records(monkeypatch):
    tr = sys.modules[train.__module__]
    monkeypatch.setattr(tr, "compute_gradients", lambda *a, **k: (float("inf"), {}))
    with pytest.raises(NonFiniteLoss, match=r"'r\d'"):
        train(records(count=3), CFG, TrainConfig(batch_size=3))


def test_checkpoint_round_trip(tmp_path):
    params = init_params(CFG, 9)
    save_model(tmp_path / "m.json", params, CFG, {"note": 1})
    loaded, cfg, meta = load_model(tmp_path / "m.json")
    assert cfg == CFG and meta == {"note": 1}
    for k in params:
        assert np.array_equal(params[k].data, loaded[k].data)
    assert dumps_model(loaded, cfg, meta) == (tmp_path / "m.json").read_text()


def test_checkpoint_validation():
    text = dumps_model(init_params(CFG, 0), CFG)
    with pytest.raises(ValueError):
        loads_model(text.replace('"dnfcount-model"', '"other"'))
    import json

    doc = json.loads(text)
    doc["config"]["dim"] = 9
    with pytest.raises(ValueError):
        loads_model(json.dumps(doc))
