import math

import numpy as np
import pytest
import torch

from laneid.errors import ConfigError, ShapeError
from laneid.model import (
    LaneNet,
    ModelConfig,
    RecurrentState,
    build_model,
    convlstm_cell,
    forward_frame,
    forward_sequence,
    image_to_tensor,
    init_params,
    lstm_cell,
    parameter_count,
    reset_state,
)
from laneid.train import model_grad_check

VARIANTS = ["basic", "stdlstm", "convlstm"]


def _images(config, count, seed=0):
    g = torch.Generator().manual_seed(seed)
    return [torch.rand((3, config.height, config.width), generator=g, dtype=torch.float64) for _ in range(count)]


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _convlstm_oracle(x, h, c, weight, bias):
    stacked = np.concatenate([x, h], axis=0)
    padded = np.pad(stacked, ((0, 0), (1, 1), (1, 1)))
    hidden, rows, cols = h.shape
    pre = np.zeros((4 * hidden, rows, cols))
    for o in range(4 * hidden):
        for i in range(rows):
            for j in range(cols):
                pre[o, i, j] = np.sum(padded[:, i:i + 3, j:j + 3] * weight[o]) + bias[o]
    gi, gf, gg, go = np.split(pre, 4, axis=0)
    c_new = _sigmoid(gf) * c + _sigmoid(gi) * np.tanh(gg)
    h_new = _sigmoid(go) * np.tanh(c_new)
    return h_new, c_new


class TestCells:
    def test_zero_weights_zero_cell(self):
        x = torch.rand((2, 3, 4), dtype=torch.float64)
        h = torch.rand((3, 3, 4), dtype=torch.float64)
        c = torch.zeros((3, 3, 4), dtype=torch.float64)
        w = torch.zeros((12, 5, 3, 3), dtype=torch.float64)
        h2, c2 = convlstm_cell(x, h, c, w, torch.zeros(12, dtype=torch.float64))
        assert torch.count_nonzero(h2) == 0
        assert torch.count_nonzero(c2) == 0

    def test_forget_bias_keeps_cell(self):
        x = torch.zeros((1, 2, 2), dtype=torch.float64)
        h = torch.zeros((1, 2, 2), dtype=torch.float64)
        c = torch.tensor([[[1.0, -2.0], [0.5, 3.0]]], dtype=torch.float64)
        w = torch.zeros((4, 2, 3, 3), dtype=torch.float64)
        b = torch.tensor([0.0, 10.0, 0.0, 0.0], dtype=torch.float64)
        _, c2 = convlstm_cell(x, h, c, w, b)
        assert torch.allclose(c2, c / (1 + math.exp(-10.0)), atol=1e-15)
        assert float((c2 - 0.99995 * c).abs().max()) < 1e-4

    def test_matches_loop_oracle(self):
        g = torch.Generator().manual_seed(2)
        x = torch.rand((2, 3, 4), generator=g, dtype=torch.float64) * 2 - 1
        h = torch.rand((3, 3, 4), generator=g, dtype=torch.float64) * 2 - 1
        c = torch.rand((3, 3, 4), generator=g, dtype=torch.float64) * 2 - 1
        w = (torch.rand((12, 5, 3, 3), generator=g, dtype=torch.float64) * 2 - 1) * 0.3
        b = torch.rand(12, generator=g, dtype=torch.float64) * 2 - 1
        h2, c2 = convlstm_cell(x, h, c, w, b)
        h_ref, c_ref = _convlstm_oracle(x.numpy(), h.numpy(), c.numpy(), w.numpy(), b.numpy())
        np.testing.assert_allclose(h2.numpy(), h_ref, atol=1e-12, rtol=0)
        np.testing.assert_allclose(c2.numpy(), c_ref, atol=1e-12, rtol=0)

    def test_shape_mismatch(self):
        x = torch.zeros((2, 3, 4), dtype=torch.float64)
        h = torch.zeros((3, 3, 4), dtype=torch.float64)
        with pytest.raises(ShapeError):
            convlstm_cell(x, h, torch.zeros((3, 3, 5), dtype=torch.float64),
                          torch.zeros((12, 5, 3, 3), dtype=torch.float64), torch.zeros(12, dtype=torch.float64))
        with pytest.raises(ShapeError, match="weight shape"):
            convlstm_cell(x, h, h.clone(), torch.zeros((12, 4, 3, 3), dtype=torch.float64), torch.zeros(12, dtype=torch.float64))

    def test_lstm_cell_zero_weights(self):
        h, c = lstm_cell(
            torch.ones(3, dtype=torch.float64),
            torch.zeros(2, dtype=torch.float64),
            torch.ones(2, dtype=torch.float64),
            torch.zeros((8, 5), dtype=torch.float64),
            torch.zeros(8, dtype=torch.float64),
        )
        np.testing.assert_allclose(c.numpy(), [0.5, 0.5])
        np.testing.assert_allclose(h.numpy(), 0.5 * np.tanh([0.5, 0.5]))


class TestConfig:
    def test_defaults_valid(self):
        config = ModelConfig().validate()
        assert config.level_shape(2) == (64, 16, 32)

    @pytest.mark.parametrize("overrides", [
        {"channels": [4]},
        {"height": 17},
        {"variant": "gru"},
        {"activation": "tanh"},
        {"levels": 1, "channels": [4]},
    ])
    def test_invalid(self, overrides):
        with pytest.raises(ConfigError):
            ModelConfig.tiny(**overrides).validate()

    def test_round_trip_dict(self):
        config = ModelConfig.tiny("stdlstm", lstm_hidden=6)
        assert ModelConfig.from_dict(config.to_dict()) == config
        with pytest.raises(ConfigError):
            ModelConfig.from_dict({**config.to_dict(), "depth": 3})


class TestForward:
    @pytest.mark.parametrize("variant", VARIANTS)
    def test_outputs_are_distributions(self, variant):
        config = ModelConfig.tiny(variant)
        model = build_model(config, seed=3)
        outputs, _ = forward_sequence(model, _images(config, 3))
        for out in outputs:
            for p in (out.left_probs, out.right_probs, out.count_probs):
                assert p.shape == (8,)
                assert bool((p >= 0).all())
                assert abs(float(p.sum()) - 1.0) < 1e-9

    def test_basic_is_stateless(self):
        config = ModelConfig.tiny("basic")
        model = build_model(config, seed=1)
        image = _images(config, 1)[0]
        state = model.reset_state()
        out1, state1 = forward_frame(model, state, image)
        out2, state2 = forward_frame(model, state1, image)
        assert torch.equal(out1.left_probs, out2.left_probs)
        assert state2 is state and state2.sites == ()

    @pytest.mark.parametrize("variant", ["stdlstm", "convlstm"])
    def test_recurrent_state_matters(self, variant):
        config = ModelConfig.tiny(variant)
        model = build_model(config, seed=4)
        first, second = _images(config, 2, seed=9)
        threaded, _ = forward_sequence(model, [first, second])
        fresh, _ = forward_frame(model, model.reset_state(), second)
        assert not torch.equal(threaded[1].left_probs, fresh.left_probs)

    def test_unrolled_equals_stepwise(self):
        config = ModelConfig.tiny("convlstm")
        model = build_model(config, seed=5)
        images = _images(config, 3)
        unrolled, final = forward_sequence(model, images)
        state = reset_state(config)
        for image, expected in zip(images, unrolled):
            out, state = model.forward_frame(state, image)
            assert torch.equal(out.count_probs, expected.count_probs)
        assert state.frame_index == final.frame_index == 3

    def test_reset_matches_fresh_model(self):
        config = ModelConfig.tiny("convlstm")
        image = _images(config, 1)[0]
        used = build_model(config, seed=6)
        forward_sequence(used, _images(config, 2, seed=1))
        out_used, _ = used.forward_frame(used.reset_state(), image)
        out_new, _ = build_model(config, seed=6).forward_frame(reset_state(config), image)
        assert torch.equal(out_used.right_probs, out_new.right_probs)

    def test_reset_state_shapes(self):
        config = ModelConfig.tiny("convlstm")
        state = reset_state(config)
        assert [tuple(h.shape) for h, _ in state.sites] == [(4, 16, 32), (8, 8, 16)]
        assert all(torch.count_nonzero(h) == 0 and torch.count_nonzero(c) == 0 for h, c in state.sites)
        assert state.frame_index == 0
        again = reset_state(config)
        assert all(torch.equal(a[0], b[0]) for a, b in zip(state.sites, again.sites))
        std = reset_state(ModelConfig.tiny("stdlstm"))
        assert [tuple(h.shape) for h, _ in std.sites] == [(4,)] * 3

    def test_mismatched_inputs_rejected(self):
        config = ModelConfig.tiny("convlstm")
        model = build_model(config)
        with pytest.raises(ShapeError, match="image shape"):
            model.forward_frame(model.reset_state(), torch.zeros((3, 8, 8), dtype=torch.float64))
        with pytest.raises(ShapeError, match="recurrent sites"):
            model.forward_frame(RecurrentState(), _images(config, 1)[0])


class TestInit:
    def test_deterministic_in_seed(self):
        config = ModelConfig.tiny("convlstm")
        a, b, c = init_params(config, 11), init_params(config, 11), init_params(config, 12)
        assert a.keys() == b.keys()
        assert all(torch.equal(a[k], b[k]) for k in a)
        assert any(not torch.equal(a[k], c[k]) for k in a if "weight" in k)

    def test_biases_zero(self):
        params = init_params(ModelConfig.tiny("stdlstm"), 0)
        assert all(torch.count_nonzero(p) == 0 for name, p in params.items() if name.endswith("bias"))

    def test_fan_in_scaled_std(self):
        params = init_params(ModelConfig(), 0)
        weight = params["encoder.2.weight"]
        assert tuple(weight.shape) == (64, 32, 3, 3)
        target = math.sqrt(2.0 / (32 * 9))
        assert abs(float(weight.std()) - target) < 0.2 * target

    def test_parameter_count(self):
        model = build_model(ModelConfig.tiny("basic"))
        assert parameter_count(model) == sum(p.numel() for p in init_params(ModelConfig.tiny("basic")).values())
        assert isinstance(model, LaneNet)


def test_image_to_tensor():
    image = np.zeros((2, 3, 3), dtype=np.uint8)
    image[1, 2] = (255, 0, 51)
    t = image_to_tensor(image)
    assert t.shape == (3, 2, 3)
    assert t.dtype == torch.float64
    assert float(t[0, 1, 2]) == 1.0 and float(t[2, 1, 2]) == 0.2
    with pytest.raises(ShapeError):
        image_to_tensor(np.zeros((4, 4), dtype=np.uint8))


@pytest.mark.parametrize("variant", VARIANTS)
def test_full_model_gradients(variant):
    assert model_grad_check(variant, frames=2, eps=1e-5, max_coords=40) < 1e-4
