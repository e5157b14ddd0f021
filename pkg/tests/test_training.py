import numpy as np
import pytest

from moets.data import prepare
from moets.errors import ConfigError, ContractError, DivergenceError
from moets.experts import Expert, ExpertConfig
from moets.gating import GatingConfig, build_moe
from moets.synthetic import RegimeSpec, regime_switching, to_series
from moets.tensor import Tape, Tensor, backward, precision
from moets.training import (
    TrainConfig,
    Trainer,
    collect,
    combined_loss,
    evaluate,
    mae,
    mse,
    recompute_mixture,
    train,
    validation_mse,
)

CFG = ExpertConfig(lookback=24, horizon=8, variates=2, kernel=5, patch_len=8, stride=4, d_model=8,
                   n_heads=2, n_layers=1, d_ff=16, mingru_hidden=8, slstm_hidden=8)
GATE = GatingConfig(4, d_gate=8, heads=2, k=3)
KINDS = ["elm", "patchtst", "mingru", "slstm"]


@pytest.fixture(scope="module")
def data():
    values, _ = regime_switching(RegimeSpec(length=240, segment=40, period=12))
    return prepare(to_series(values), "ratio-70-10-20", 24, 8)


def small_moe(seed=0):
    return build_moe(KINDS, CFG, GATE, seed)


def test_loss_examples():
    y = np.array([0.0, 0.0])
    assert combined_loss(y, np.array([1.0, -1.0])) == 1.0
    assert combined_loss(np.array([0.0, 2.0]), np.array([1.0, 1.0])) == 1.0
    assert mse(y, y) == 0.0 and mae(y, y) == 0.0


def test_loss_endpoints_and_homogeneity():
    rng = np.random.default_rng(0)
    y, p = rng.normal(size=(4, 8, 2)), rng.normal(size=(4, 8, 2))
    assert combined_loss(y, p, 1.0) == mse(y, p)
    assert combined_loss(y, p, 0.0) == mae(y, p)
    # the squared term scales by c^2, the absolute term by |c|
    c = 3.0
    np.testing.assert_allclose(combined_loss(c * y, c * p, 1.0), c * c * mse(y, p), rtol=1e-12)
    np.testing.assert_allclose(combined_loss(c * y, c * p, 0.0), c * mae(y, p), rtol=1e-12)
    with precision("float64"):
        t = combined_loss(y, Tensor(p), 0.3).item()
    np.testing.assert_allclose(t, combined_loss(y, p, 0.3), rtol=1e-12)


def test_loss_contracts():
    with pytest.raises(ContractError):
        mse(np.zeros(3), np.zeros(4))
    with pytest.raises(ConfigError):
        combined_loss(np.zeros(2), np.zeros(2), 1.5)


def test_loss_gradient_direction():
    with precision("float64"):
        p = Tensor(np.array([1.0, -1.0]))
        p.requires_grad = True
        with Tape() as tape:
            loss = combined_loss(np.zeros(2), p, 0.5)
        backward(tape, loss)
    # d/dp of 0.5 * mean(p^2) + 0.5 * mean(|p|) = 0.5 * p + 0.25 * sign(p)
    np.testing.assert_allclose(p.grad, [0.75, -0.75])


def test_training_is_bit_identical(data):
    cfg = TrainConfig(lr=1e-3, epochs=2, batch=16, patience=5)

    def run():
        model = small_moe()
        result = train(model, data.windows("train", 2), data.windows("val", 2), cfg)
        return evaluate(model, data.windows("test", 2)), result

    (a, ra), (b, rb) = run(), run()
    assert a.mse == b.mse and a.mae == b.mae
    assert ra.history == rb.history


def test_early_stopping_with_frozen_model(data):
    model = Expert("elm", CFG)
    result = train(model, data.windows("train", 4), data.windows("val", 4),
                   TrainConfig(lr=0.0, epochs=10, patience=1))
    assert result.epochs_run == 2 and result.best_epoch == 1


def test_best_weights_never_worse_than_seen(data):
    model = Expert("patchtst", CFG)
    val = data.windows("val", 2)
    result = train(model, data.windows("train", 2), val, TrainConfig(lr=3e-3, epochs=6, patience=2))
    observed = [h["val_mse"] for h in result.history]
    assert validation_mse(model, val) <= min(observed) + 1e-12
    assert result.best_val == min(observed)


def test_experts_then_gate_mode(data):
    model = small_moe()
    result = train(model, data.windows("train", 4), data.windows("val", 4),
                   TrainConfig(lr=1e-3, epochs=2, patience=2, mode="experts-then-gate", finetune_lr=1e-4))
    assert result.epochs_run >= 1
    # the warm start competes as epoch 0
    assert result.history[0]["epoch"] == 0
    assert result.best_val == min(h["val_mse"] for h in result.history)
    with pytest.raises(ConfigError):
        TrainConfig(mode="gate-first")


def test_evaluate_is_side_effect_free(data):
    model = small_moe()
    model.train()
    before = {k: v.copy() for k, v in model.state_dict().items()}
    test = data.windows("test")
    a = evaluate(model, test)
    b = evaluate(model, test)
    assert a.mse == b.mse
    after = model.state_dict()
    assert all(np.array_equal(before[k], after[k]) for k in before)


def test_report_contents(data):
    model = small_moe()
    test = data.windows("test")
    report = evaluate(model, test)
    assert report.windows == len(test)
    assert report.step_mse.shape == (8,)
    np.testing.assert_allclose(report.step_mse.mean(), report.mse, rtol=1e-9)
    assert set(report.expert_metrics) == set(KINDS)
    np.testing.assert_allclose(sum(report.gate_means.values()), 1.0, atol=1e-6)
    y, pred, experts, weights = collect(model, test)
    np.testing.assert_allclose(recompute_mixture(experts, weights), pred, atol=1e-6)


def test_evaluate_rejects_mismatched_data(data):
    other = ExpertConfig(lookback=16, horizon=8, variates=2, kernel=5)
    with pytest.raises(ContractError):
        evaluate(Expert("elm", other), data.windows("test"))


def test_divergence_is_reported():
    model = Expert("elm", CFG)
    trainer = Trainer(model, TrainConfig(lr=1e-3))
    x = np.zeros((2, 24, 2), dtype=np.float32)
    y = np.full((2, 8, 2), np.inf, dtype=np.float32)
    with pytest.raises(DivergenceError) as info:
        trainer.step(x, y)
    assert info.value.exit_code == 3
