"""Model tests: architecture construction, parameter bookkeeping, forward
modes, and the fake-quantization behavior of the weight path."""

import numpy as np
import pytest

from robustq.engine import Tape, Tensor, backward, grad_for
from robustq.model import (ArchConfig, Model, accuracy, build_model,
                           cross_entropy, is_trainable, wrap_params)

DESK = ArchConfig(bits_w=4, bits_a=4)


def test_desk_param_count():
    model, params = build_model(DESK, seed=0)
    assert model.num_trainable(params) == 19810


def test_param_names_and_shapes():
    model, params = build_model(DESK, seed=0)
    assert params["stem.conv.w"].shape == (8, 1, 3, 3)
    assert params["head.w"].shape == (32, 10)
    assert params["head.b"].shape == (10,)
    assert params["s1.b0.proj.conv.w"].shape == (16, 8, 1, 1)
    for name, arr in params.items():
        assert arr.dtype == np.float32, name
    # running stats exist and are excluded from the trainable set
    assert "s0.b0.bn1.rmean" in params
    assert not is_trainable("s0.b0.bn1.rmean")
    assert is_trainable("s0.b0.bn1.gamma")


def test_init_is_seeded():
    _, a = build_model(DESK, seed=4)
    _, b = build_model(DESK, seed=4)
    _, c = build_model(DESK, seed=5)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert any(not np.array_equal(a[k], c[k]) for k in a)


def test_forward_shapes_and_determinism():
    model, params = build_model(DESK, seed=1)
    pt = wrap_params(params, requires_grad=False)
    x = np.random.default_rng(0).uniform(0, 1, (5, 1, 28, 28)).astype(np.float32)
    out1 = model.forward(None, pt, x, mode="eval")
    out2 = model.forward(None, pt, x, mode="eval")
    assert out1.logits.data.shape == (5, 10)
    assert out1.features.data.shape == (5, 32)
    np.testing.assert_array_equal(out1.logits.data, out2.logits.data)


def test_three_channel_input():
    arch = ArchConfig(in_channels=3, widths=(4, 8), bits_w=32, bits_a=32)
    model, params = build_model(arch, seed=2)
    pt = wrap_params(params, requires_grad=False)
    x = np.random.default_rng(1).uniform(0, 1, (2, 3, 32, 32)).astype(np.float32)
    out = model.forward(None, pt, x, mode="eval")
    assert out.logits.data.shape == (2, 10)
    assert out.features.data.shape == (2, 8)


def test_train_mode_updates_running_stats_only_when_asked():
    model, params = build_model(DESK, seed=3)
    x = np.random.default_rng(2).uniform(0, 1, (8, 1, 28, 28)).astype(np.float32)
    before = params["stem.bn.rmean"].copy()

    pt = wrap_params(params)
    model.forward(None, pt, x, mode="train", update_running=False)
    np.testing.assert_array_equal(params["stem.bn.rmean"], before)

    model.forward(None, pt, x, mode="train", update_running=True)
    assert not np.array_equal(params["stem.bn.rmean"], before)


def test_eval_mode_never_touches_stats():
    model, params = build_model(DESK, seed=3)
    x = np.random.default_rng(3).uniform(0, 1, (8, 1, 28, 28)).astype(np.float32)
    before = {k: v.copy() for k, v in params.items()}
    model.forward(None, wrap_params(params, False), x, mode="eval")
    assert all(np.array_equal(before[k], params[k]) for k in params)


def test_fake_quant_weight_invariance():
    """Starting from grid-centered weights, a nudge smaller than half a grid
    step leaves eval logits unchanged: the conv consumes the quantized
    weight, not the latent."""
    from robustq.quantize import quantize_weight_array

    arch = ArchConfig(bits_w=2, bits_a=32)
    model, params = build_model(arch, seed=5)
    params["s0.b0.conv1.w"] = quantize_weight_array(params["s0.b0.conv1.w"], 2)
    x = np.random.default_rng(4).uniform(0, 1, (3, 1, 28, 28)).astype(np.float32)
    base = model.forward(None, wrap_params(params, False), x, mode="eval").logits.data

    step = 2.0 / 3.0  # 2-bit weight grid spacing
    params["s0.b0.conv1.w"] = params["s0.b0.conv1.w"] + np.float32(0.2 * step)
    moved = model.forward(None, wrap_params(params, False), x, mode="eval").logits.data
    np.testing.assert_array_equal(base, moved)


def test_quantized_aware_gradients_flow_to_latents():
    model, params = build_model(DESK, seed=6)
    pt = wrap_params(params)
    x = np.random.default_rng(5).uniform(0, 1, (4, 1, 28, 28)).astype(np.float32)
    y = np.array([0, 1, 2, 3])
    tape = Tape()
    out = model.forward(tape, pt, x, mode="train", update_running=False)
    grads = backward(tape, cross_entropy(tape, out.logits, y))
    g = grad_for(grads, pt["s0.b0.conv1.w"])
    assert g.shape == params["s0.b0.conv1.w"].shape
    assert np.isfinite(g).all() and np.abs(g).max() > 0


def test_binary_activation_mode_runs():
    arch = ArchConfig(bits_w=4, bits_a=1)
    model, params = build_model(arch, seed=7)
    x = np.random.default_rng(6).uniform(0, 1, (2, 1, 28, 28)).astype(np.float32)
    out = model.forward(None, wrap_params(params, False), x, mode="eval")
    assert np.isfinite(out.logits.data).all()


def test_quantize_first_last_toggle():
    a32 = ArchConfig(bits_w=2, bits_a=32, quantize_first_last=False)
    aql = ArchConfig(bits_w=2, bits_a=32, quantize_first_last=True)
    m1, p1 = build_model(a32, seed=8)
    m2, p2 = build_model(aql, seed=8)
    assert all(np.array_equal(p1[k], p2[k]) for k in p1)  # same init
    x = np.random.default_rng(7).uniform(0, 1, (2, 1, 28, 28)).astype(np.float32)
    out1 = m1.forward(None, wrap_params(p1, False), x, mode="eval").logits.data
    out2 = m2.forward(None, wrap_params(p2, False), x, mode="eval").logits.data
    assert not np.array_equal(out1, out2)  # stem/head quantization changes the map


def test_arch_config_round_trip():
    d = DESK.to_dict()
    back = ArchConfig.from_dict(d)
    assert back == DESK
    assert back.to_dict() == d


def test_arch_validation_at_build_time():
    with pytest.raises(ValueError):
        build_model(ArchConfig(widths=()), seed=0)
    with pytest.raises(ValueError):
        build_model(ArchConfig(bits_w=0), seed=0)
    with pytest.raises(ValueError):
        build_model(ArchConfig(blocks_per_stage=0), seed=0)


def test_accuracy_and_cross_entropy_helpers():
    logits = np.array([[2.0, 1.0], [0.0, 3.0], [1.0, 0.0]])
    labels = np.array([0, 1, 1])
    assert accuracy(logits, labels) == pytest.approx(2 / 3)
    tape = Tape()
    loss = cross_entropy(tape, Tensor(logits), labels)
    assert loss.data.shape == ()


def test_mode_validation():
    model, params = build_model(DESK, seed=9)
    x = np.zeros((1, 1, 28, 28), np.float32)
    with pytest.raises(ValueError):
        model.forward(None, wrap_params(params, False), x, mode="test")
