"""
Lane ID Network Module
Encoder-decoder with long-range dense links, optional recurrent cells and
three classification heads (left ID, right ID, lane count).

Variants:
    basic     stateless
    stdlstm   one 1-D LSTM cell per head over the pooled head input
    convlstm  a ConvLSTM cell after the trunk convolution of every level
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from .conventions import MAX_LANES, Convention
from .errors import ConfigError, ShapeError
from .numerics import (
    DTYPE,
    Tensor,
    concat_channels,
    conv2d,
    elementwise,
    global_avg_pool,
    linear,
    softmax,
    upsample2x,
    zeros,
)


class Variant(str, Enum):
    BASIC = "basic"
    STD_LSTM = "stdlstm"
    CONV_LSTM = "convlstm"


HEADS = ("left", "right", "count")
ACTIVATIONS = ("relu", "softplus")


@dataclass
class ModelConfig:
    """Network shape"""
    variant: str = Variant.CONV_LSTM.value
    height: int = 64
    width: int = 128
    levels: int = 3
    channels: List[int] = field(default_factory=lambda: [16, 32, 64])
    head_hidden: int = 64
    num_classes: int = MAX_LANES
    activation: str = "relu"
    lstm_hidden: Optional[int] = None

    @classmethod
    def tiny(cls, variant: str = Variant.CONV_LSTM.value, **overrides) -> "ModelConfig":
        """16x32 input, two levels of 4/8 channels; used for gradient checks."""
        values = dict(variant=variant, height=16, width=32, levels=2, channels=[4, 8], head_hidden=8)
        values.update(overrides)
        return cls(**values)

    @property
    def kind(self) -> Variant:
        return Variant(self.variant)

    @property
    def head_input(self) -> int:
        if self.kind is Variant.STD_LSTM:
            return self.lstm_hidden or self.channels[0]
        return self.channels[0]

    def level_shape(self, level: int) -> Tuple[int, int, int]:
        scale = 2 ** level
        return (self.channels[level], self.height // scale, self.width // scale)

    def validate(self) -> "ModelConfig":
        try:
            Variant(self.variant)
        except ValueError:
            raise ConfigError(f"unknown model variant '{self.variant}' (expected one of {[v.value for v in Variant]})")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation '{self.activation}' (expected one of {ACTIVATIONS})")
        if self.levels < 2:
            raise ConfigError(f"levels must be >= 2, got {self.levels}")
        if len(self.channels) != self.levels:
            raise ConfigError(f"channels lists {len(self.channels)} entries for {self.levels} levels")
        if any(c < 1 for c in self.channels):
            raise ConfigError(f"channel counts must be positive, got {self.channels}")
        step = 2 ** (self.levels - 1)
        if self.height % step or self.width % step or self.height < step or self.width < step:
            raise ConfigError(f"input {self.height}x{self.width} is not divisible by 2^(levels-1) = {step}")
        if self.head_hidden < 1 or self.num_classes < 1:
            raise ConfigError("head_hidden and num_classes must be positive")
        if self.lstm_hidden is not None and self.lstm_hidden < 1:
            raise ConfigError(f"lstm_hidden must be positive, got {self.lstm_hidden}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**data).validate()


@dataclass(frozen=True)
class RecurrentState:
    """Hidden map/vector and memory cell per recurrent site"""
    sites: Tuple[Tuple[Tensor, Tensor], ...] = ()
    frame_index: int = 0


@dataclass
class ModelOutput:
    """Probability vectors for one frame"""
    left_probs: Tensor
    right_probs: Tensor
    count_probs: Tensor

    def for_convention(self, convention: Convention) -> Tensor:
        return self.left_probs if convention is Convention.LEFT else self.right_probs

    def mirrored(self) -> "ModelOutput":
        return ModelOutput(self.right_probs, self.left_probs, self.count_probs)

    def detach(self) -> "ModelOutput":
        return ModelOutput(self.left_probs.detach(), self.right_probs.detach(), self.count_probs.detach())

    def as_numpy(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(p.detach().cpu().numpy() for p in (self.left_probs, self.right_probs, self.count_probs))


# ---------------------------------------------------------------------------
# Recurrent cells. Gate blocks are stacked in the order i, f, g, o.
# ---------------------------------------------------------------------------

def _gates(pre: Tensor, c: Tensor) -> Tuple[Tensor, Tensor]:
    i, f, g, o = pre.chunk(4, dim=0)
    i = elementwise("sigmoid", i)
    f = elementwise("sigmoid", f)
    g = elementwise("tanh", g)
    o = elementwise("sigmoid", o)
    c_new = elementwise("add", elementwise("hadamard", f, c), elementwise("hadamard", i, g))
    h_new = elementwise("hadamard", o, elementwise("tanh", c_new))
    return h_new, c_new


def convlstm_cell(x: Tensor, h: Tensor, c: Tensor, weight: Tensor, bias: Tensor) -> Tuple[Tensor, Tensor]:
    """
    ConvLSTM step without peephole connections.

    weight is [4C, C_x + C, 3, 3] acting on the channel concatenation of x and h
    (equivalent to separate W_x* and W_h* kernels), bias is [4C].
    """
    if h.shape != c.shape:
        raise ShapeError(f"convlstm_cell: hidden shape {tuple(h.shape)} differs from cell shape {tuple(c.shape)}")
    if x.dim() != 3 or x.shape[1:] != h.shape[1:]:
        raise ShapeError(f"convlstm_cell: input spatial shape {tuple(x.shape[1:])} differs from state {tuple(h.shape[1:])}")
    expected = (4 * h.shape[0], x.shape[0] + h.shape[0], 3, 3)
    if tuple(weight.shape) != expected:
        raise ShapeError(f"convlstm_cell: weight shape {tuple(weight.shape)}, expected {expected}")
    pre = conv2d(concat_channels([x, h]), weight, stride=1, padding=1, bias=bias)
    return _gates(pre, c)


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, weight: Tensor, bias: Tensor) -> Tuple[Tensor, Tensor]:
    """Vector LSTM step; weight is [4H, X + H], bias [4H]."""
    if h.shape != c.shape or h.dim() != 1:
        raise ShapeError(f"lstm_cell: hidden {tuple(h.shape)} and cell {tuple(c.shape)} must be equal vectors")
    pre = linear(torch.cat([x, h]), weight, bias)
    return _gates(pre, c)


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------

def _uniform(shape: Sequence[int], fan_in: int, gain: float, generator: torch.Generator) -> nn.Parameter:
    bound = gain * math.sqrt(3.0 / fan_in)
    values = (torch.rand(tuple(shape), generator=generator, dtype=DTYPE) * 2.0 - 1.0) * bound
    return nn.Parameter(values)


class ConvBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, stride: int, generator: torch.Generator):
        super().__init__()
        self.stride = stride
        self.weight = _uniform((out_channels, in_channels, 3, 3), in_channels * 9, math.sqrt(2.0), generator)
        self.bias = nn.Parameter(torch.zeros(out_channels, dtype=DTYPE))

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, stride=self.stride, padding=1, bias=self.bias)


class ConvLSTMCell(nn.Module):
    def __init__(self, in_channels: int, hidden: int, generator: torch.Generator):
        super().__init__()
        fan_in = (in_channels + hidden) * 9
        self.weight = _uniform((4 * hidden, in_channels + hidden, 3, 3), fan_in, 1.0, generator)
        self.bias = nn.Parameter(torch.zeros(4 * hidden, dtype=DTYPE))

    def forward(self, x: Tensor, h: Tensor, c: Tensor) -> Tuple[Tensor, Tensor]:
        return convlstm_cell(x, h, c, self.weight, self.bias)


class LSTMCell(nn.Module):
    def __init__(self, in_features: int, hidden: int, generator: torch.Generator):
        super().__init__()
        self.weight = _uniform((4 * hidden, in_features + hidden), in_features + hidden, 1.0, generator)
        self.bias = nn.Parameter(torch.zeros(4 * hidden, dtype=DTYPE))

    def forward(self, x: Tensor, h: Tensor, c: Tensor) -> Tuple[Tensor, Tensor]:
        return lstm_cell(x, h, c, self.weight, self.bias)


class Head(nn.Module):
    """linear -> activation -> linear -> softmax"""

    def __init__(self, in_features: int, hidden: int, classes: int, activation: str, generator: torch.Generator):
        super().__init__()
        self.activation = activation
        self.fc1_weight = _uniform((hidden, in_features), in_features, 1.0, generator)
        self.fc1_bias = nn.Parameter(torch.zeros(hidden, dtype=DTYPE))
        self.fc2_weight = _uniform((classes, hidden), hidden, 1.0, generator)
        self.fc2_bias = nn.Parameter(torch.zeros(classes, dtype=DTYPE))

    def forward(self, x: Tensor) -> Tensor:
        hidden = elementwise(self.activation, linear(x, self.fc1_weight, self.fc1_bias))
        return softmax(linear(hidden, self.fc2_weight, self.fc2_bias))


class LaneNet(nn.Module):
    """The lane ID network; parameters are float64 and named by module path"""

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__()
        self.config = config.validate()
        generator = torch.Generator().manual_seed(int(seed))
        ch = config.channels
        kind = config.kind

        self.encoder = nn.ModuleList(
            ConvBlock(3 if i == 0 else ch[i - 1], ch[i], 1 if i == 0 else 2, generator)
            for i in range(config.levels)
        )
        if kind is Variant.CONV_LSTM:
            self.cells = nn.ModuleList(ConvLSTMCell(ch[i], ch[i], generator) for i in range(config.levels))
        # Decoder block j restores level L-2-j from the level below it.
        maps_per_level = 2 if kind is Variant.CONV_LSTM else 1
        self.decoder = nn.ModuleList(
            ConvBlock(maps_per_level * ch[i] + ch[i + 1], ch[i], 1, generator)
            for i in reversed(range(config.levels - 1))
        )
        if kind is Variant.STD_LSTM:
            self.head_cells = nn.ModuleDict(
                {name: LSTMCell(ch[0], config.head_input, generator) for name in HEADS}
            )
        self.heads = nn.ModuleDict(
            {name: Head(config.head_input, config.head_hidden, config.num_classes, config.activation, generator)
             for name in HEADS}
        )

    def parameter_set(self) -> Dict[str, nn.Parameter]:
        return dict(self.named_parameters())

    def reset_state(self) -> RecurrentState:
        return reset_state(self.config)

    def _check(self, state: RecurrentState, image: Tensor) -> None:
        expected = (3, self.config.height, self.config.width)
        if tuple(image.shape) != expected:
            raise ShapeError(f"image shape {tuple(image.shape)} does not match model input {expected}")
        shapes = _site_shapes(self.config)
        if len(state.sites) != len(shapes):
            raise ShapeError(f"state has {len(state.sites)} recurrent sites, model '{self.config.variant}' has {len(shapes)}")
        for k, ((h, c), shape) in enumerate(zip(state.sites, shapes)):
            if tuple(h.shape) != shape or tuple(c.shape) != shape:
                raise ShapeError(f"state site {k} has shape {tuple(h.shape)}/{tuple(c.shape)}, expected {shape}")

    def forward_frame(self, state: RecurrentState, image: Tensor) -> Tuple[ModelOutput, RecurrentState]:
        self._check(state, image)
        kind = self.config.kind
        act = self.config.activation
        new_sites: List[Tuple[Tensor, Tensor]] = []

        # Every map produced at a resolution is kept for the dense links.
        level_maps: List[List[Tensor]] = []
        x = image
        for level, block in enumerate(self.encoder):
            x = elementwise(act, block(x))
            maps = [x]
            if kind is Variant.CONV_LSTM:
                h, c = state.sites[level]
                h, c = self.cells[level](x, h, c)
                new_sites.append((h, c))
                maps.append(h)
                x = h
            level_maps.append(maps)

        d = x
        for j, block in enumerate(self.decoder):
            level = self.config.levels - 2 - j
            d = elementwise(act, block(concat_channels(level_maps[level] + [upsample2x(d)])))

        pooled = global_avg_pool(d)
        probs = {}
        for k, name in enumerate(HEADS):
            z = pooled
            if kind is Variant.STD_LSTM:
                h, c = state.sites[k]
                h, c = self.head_cells[name](z, h, c)
                new_sites.append((h, c))
                z = h
            probs[name] = self.heads[name](z)

        output = ModelOutput(probs["left"], probs["right"], probs["count"])
        if kind is Variant.BASIC:
            return output, state
        return output, RecurrentState(tuple(new_sites), state.frame_index + 1)

    def forward(self, state: RecurrentState, image: Tensor) -> Tuple[ModelOutput, RecurrentState]:
        return self.forward_frame(state, image)


def _site_shapes(config: ModelConfig) -> List[Tuple[int, ...]]:
    kind = config.kind
    if kind is Variant.CONV_LSTM:
        return [config.level_shape(i) for i in range(config.levels)]
    if kind is Variant.STD_LSTM:
        return [(config.head_input,)] * len(HEADS)
    return []


def reset_state(config: ModelConfig) -> RecurrentState:
    """All-zero hidden and cell tensors, frame index 0."""
    config.validate()
    return RecurrentState(tuple((zeros(s), zeros(s)) for s in _site_shapes(config)), 0)


def build_model(config: ModelConfig, seed: int = 0) -> LaneNet:
    return LaneNet(config, seed)


def init_params(config: ModelConfig, seed: int = 0) -> Dict[str, nn.Parameter]:
    """Fan-in scaled uniform weights and zero biases, deterministic in `seed`."""
    return build_model(config, seed).parameter_set()


def forward_frame(
    model: LaneNet, state: RecurrentState, image: Tensor
) -> Tuple[ModelOutput, RecurrentState]:
    return model.forward_frame(state, image)


def forward_sequence(
    model: LaneNet, images: Sequence[Tensor], state: Optional[RecurrentState] = None
) -> Tuple[List[ModelOutput], RecurrentState]:
    """Unroll over frames, threading the recurrent state."""
    state = model.reset_state() if state is None else state
    outputs = []
    for image in images:
        out, state = model.forward_frame(state, image)
        outputs.append(out)
    return outputs, state


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def image_to_tensor(image: np.ndarray) -> Tensor:
    """uint8 [H, W, 3] image -> float64 [3, H, W] in [0, 1]."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"expected an [H, W, 3] image, got shape {image.shape}")
    return torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1))).to(DTYPE) / 255.0
