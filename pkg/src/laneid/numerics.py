"""
Numerics Module
Float64 dense-tensor operations with reverse-mode gradients (torch autograd),
the Adam optimizer with decoupled weight decay and its step schedule, and a
central-difference gradient verifier.

Tensors are unbatched: images and feature maps are [C, H, W], vectors [N].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import torch
import torch.nn.functional as F

from .errors import GradientCheckError, NonFiniteError, ShapeError
from .logger import logger

DTYPE = torch.float64
Tensor = torch.Tensor
Parameter = torch.nn.Parameter
ParameterSet = Mapping[str, Parameter]


def tensor(values, shape: Optional[Sequence[int]] = None) -> Tensor:
    """Build a float64 tensor, optionally reshaped to `shape` (row-major)."""
    t = torch.as_tensor(values, dtype=DTYPE)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise ShapeError(f"shape {shape} has a non-positive dimension")
        if math.prod(shape) != t.numel():
            raise ShapeError(f"product of shape {shape} is {math.prod(shape)} but {t.numel()} values were given")
        t = t.reshape(shape)
    return t


def zeros(shape: Sequence[int]) -> Tensor:
    return torch.zeros(tuple(shape), dtype=DTYPE)


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        for dim, (x, y) in enumerate(zip(a.shape, b.shape)):
            if x != y:
                raise ShapeError(f"{op}: dimension {dim} differs ({x} vs {y}); shapes {tuple(a.shape)} and {tuple(b.shape)}")
        raise ShapeError(f"{op}: rank differs; shapes {tuple(a.shape)} and {tuple(b.shape)}")


def conv2d(
    input: Tensor,
    kernels: Tensor,
    stride: int = 1,
    padding: int = 0,
    bias: Optional[Tensor] = None,
) -> Tensor:
    """
    Cross-correlation of a [C_in, H, W] map with [C_out, C_in, k, k] kernels.

    Output size per spatial axis is floor((size + 2*padding - k) / stride) + 1.
    """
    if input.dim() != 3:
        raise ShapeError(f"conv2d input must be [C_in, H, W], got rank {input.dim()} shape {tuple(input.shape)}")
    if kernels.dim() != 4:
        raise ShapeError(f"conv2d kernels must be [C_out, C_in, k, k], got shape {tuple(kernels.shape)}")
    c_out, c_in, kh, kw = kernels.shape
    if kh != kw:
        raise ShapeError(f"conv2d kernel height {kh} differs from kernel width {kw}")
    if kh % 2 == 0:
        raise ShapeError(f"conv2d kernel size k={kh} must be odd")
    if input.shape[0] != c_in:
        raise ShapeError(f"conv2d C_in: input has {input.shape[0]} channels but kernels expect {c_in}")
    if stride < 1:
        raise ShapeError(f"conv2d stride must be >= 1, got {stride}")
    if padding < 0:
        raise ShapeError(f"conv2d padding must be >= 0, got {padding}")
    for axis, size in (("H", input.shape[1]), ("W", input.shape[2])):
        if size + 2 * padding - kh < 0:
            raise ShapeError(f"conv2d {axis}: size {size} with padding {padding} is smaller than kernel {kh}")
    if bias is not None and bias.shape != (c_out,):
        raise ShapeError(f"conv2d bias must have shape ({c_out},), got {tuple(bias.shape)}")
    return F.conv2d(input, kernels, bias, stride=stride, padding=padding)


_UNARY: Dict[str, Callable[[Tensor], Tensor]] = {
    "sigmoid": torch.sigmoid,
    "tanh": torch.tanh,
    "relu": torch.relu,
    "softplus": F.softplus,
}

_BINARY: Dict[str, Callable[[Tensor, Tensor], Tensor]] = {
    "hadamard": torch.mul,
    "add": torch.add,
}


def elementwise(op: str, *args: Tensor) -> Tensor:
    """Pointwise sigmoid | tanh | relu | softplus (unary) or hadamard | add (binary)."""
    if op in _UNARY:
        if len(args) != 1:
            raise ValueError(f"{op} takes one operand, got {len(args)}")
        return _UNARY[op](args[0])
    if op in _BINARY:
        if len(args) != 2:
            raise ValueError(f"{op} takes two operands, got {len(args)}")
        _same_shape(op, args[0], args[1])
        return _BINARY[op](args[0], args[1])
    raise ValueError(f"Unknown elementwise op '{op}'")


def linear(input: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """weight @ input + bias for a vector input."""
    if input.dim() != 1:
        raise ShapeError(f"linear input must be a vector, got shape {tuple(input.shape)}")
    if weight.dim() != 2:
        raise ShapeError(f"linear weight must be [m, n], got shape {tuple(weight.shape)}")
    m, n = weight.shape
    if input.shape[0] != n:
        raise ShapeError(f"linear n: input has {input.shape[0]} entries but weight expects {n}")
    if bias.shape != (m,):
        raise ShapeError(f"linear m: bias has shape {tuple(bias.shape)} but weight produces {m} outputs")
    return F.linear(input, weight, bias)


def softmax(logits: Tensor) -> Tensor:
    """Max-shifted softmax over a vector."""
    if logits.dim() != 1 or logits.shape[0] < 1:
        raise ShapeError(f"softmax expects a non-empty vector, got shape {tuple(logits.shape)}")
    return torch.softmax(logits, dim=0)


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling of a [C, H, W] map."""
    if x.dim() != 3:
        raise ShapeError(f"upsample2x expects [C, H, W], got shape {tuple(x.shape)}")
    return x.repeat_interleave(2, dim=1).repeat_interleave(2, dim=2)


def concat_channels(maps: Sequence[Tensor]) -> Tensor:
    if not maps:
        raise ShapeError("concat_channels needs at least one map")
    h, w = maps[0].shape[1:]
    for i, m in enumerate(maps):
        if m.dim() != 3 or m.shape[1:] != (h, w):
            raise ShapeError(f"concat_channels: map {i} has spatial shape {tuple(m.shape[1:])}, expected {(h, w)}")
    return torch.cat(list(maps), dim=0)


def global_avg_pool(x: Tensor) -> Tensor:
    if x.dim() != 3:
        raise ShapeError(f"global_avg_pool expects [C, H, W], got shape {tuple(x.shape)}")
    return x.mean(dim=(1, 2))


def named_grads(params: ParameterSet) -> Dict[str, Tensor]:
    """Accumulated gradients, zeros for parameters that received none."""
    return {
        name: (p.grad if p.grad is not None else torch.zeros_like(p))
        for name, p in params.items()
    }


@dataclass
class AdamState:
    """Per-parameter moments and hyperparameters of one optimisation stream"""
    m: Dict[str, Tensor] = field(default_factory=dict)
    v: Dict[str, Tensor] = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    lr: float = 1e-4
    weight_decay: float = 1e-4
    eps: float = 1e-8
    flagged: bool = False

    @classmethod
    def create(cls, params: ParameterSet, **hyper) -> "AdamState":
        return cls(
            m={name: torch.zeros_like(p, dtype=DTYPE) for name, p in params.items()},
            v={name: torch.zeros_like(p, dtype=DTYPE) for name, p in params.items()},
            **hyper,
        )


def adam_step(
    params: ParameterSet,
    grads: Optional[Mapping[str, Tensor]],
    state: AdamState,
    lr: Optional[float] = None,
) -> Tuple[ParameterSet, AdamState]:
    """
    One bias-corrected Adam update with decoupled weight decay, in place.

    value <- value - lr * m_hat / (sqrt(v_hat) + eps) - lr * weight_decay * value

    A non-finite gradient rejects the whole step before anything is modified
    and flags the state.
    """
    if state.t < 0:
        raise ValueError(f"Adam step counter must be non-negative, got {state.t}")
    if grads is None:
        grads = named_grads(params)
    step_lr = state.lr if lr is None else lr

    for name, p in params.items():
        if name not in grads:
            raise ShapeError(f"no gradient supplied for parameter '{name}'")
        g = grads[name]
        _same_shape(f"adam_step gradient of '{name}'", p, g)
        if name not in state.m:
            state.m[name] = torch.zeros_like(p, dtype=DTYPE)
            state.v[name] = torch.zeros_like(p, dtype=DTYPE)
        _same_shape(f"adam_step moment of '{name}'", p, state.m[name])
        if not bool(torch.isfinite(g).all()):
            state.flagged = True
            logger.error(f"Adam step {state.t + 1} rejected: non-finite gradient in '{name}'")
            raise NonFiniteError(f"non-finite gradient for parameter '{name}'")

    state.t += 1
    b1, b2 = state.beta1, state.beta2
    correction1 = 1.0 - b1 ** state.t
    correction2 = 1.0 - b2 ** state.t
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name]
            m, v = state.m[name], state.v[name]
            m.mul_(b1).add_(g, alpha=1.0 - b1)
            v.mul_(b2).addcmul_(g, g, value=1.0 - b2)
            update = (m / correction1) / ((v / correction2).sqrt() + state.eps)
            p.mul_(1.0 - step_lr * state.weight_decay)
            p.sub_(step_lr * update)
    return params, state


def lr_at(
    iteration: int,
    base: float,
    scale: float = 1.0,
    start: int = 150_000,
    every: int = 20_000,
) -> float:
    """
    Step schedule: `base` until `start`, halved at `start` and again every
    `every` iterations. `scale` shrinks both thresholds for short runs.
    """
    if iteration < 0:
        raise ValueError(f"iteration must be >= 0, got {iteration}")
    start_it = int(round(start * scale))
    every_it = max(1, int(round(every * scale)))
    if iteration < start_it:
        return base
    halvings = (iteration - start_it) // every_it + 1
    return base * 2.0 ** (-halvings)


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: Union[ParameterSet, Iterable[Tensor]],
    eps: float = 1e-5,
    analytic: Optional[Sequence[Tensor]] = None,
    max_coords: Optional[int] = None,
    seed: int = 0,
) -> float:
    """
    Compare analytic gradients against central differences.

    Args:
        loss_fn: Deterministic closure returning a scalar tensor
        params: Tensors (requires_grad) the loss depends on
        eps: Perturbation size
        analytic: Optional precomputed gradients replacing autograd's
        max_coords: Check at most this many seeded-random coordinates per tensor

    Returns:
        Maximum relative error |a - n| / max(|a|, |n|, 1e-8)
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if isinstance(params, Mapping):
        names = list(params.keys())
        tensors = list(params.values())
    else:
        tensors = list(params)
        names = [f"param{i}" for i in range(len(tensors))]

    if analytic is None:
        with torch.enable_grad():
            loss = loss_fn()
            if not bool(torch.isfinite(loss)):
                raise GradientCheckError(f"non-finite loss {float(loss)} at the base point")
            grads = torch.autograd.grad(loss, tensors, allow_unused=True)
        analytic = [g if g is not None else torch.zeros_like(t) for g, t in zip(grads, tensors)]
    if len(analytic) != len(tensors):
        raise GradientCheckError(f"{len(analytic)} analytic gradients for {len(tensors)} tensors")

    generator = torch.Generator().manual_seed(seed)
    worst = 0.0
    worst_at = ""
    with torch.no_grad():
        for name, t, a in zip(names, tensors, analytic):
            flat = t.data.view(-1)
            a_flat = a.detach().reshape(-1)
            n = flat.numel()
            if max_coords is not None and max_coords < n:
                coords = torch.randperm(n, generator=generator)[:max_coords].tolist()
            else:
                coords = range(n)
            for i in coords:
                original = float(flat[i])
                flat[i] = original + eps
                f_plus = float(loss_fn())
                flat[i] = original - eps
                f_minus = float(loss_fn())
                flat[i] = original
                if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                    raise GradientCheckError(f"non-finite loss while perturbing {name}[{i}]")
                numeric = (f_plus - f_minus) / (2.0 * eps)
                exact = float(a_flat[i])
                rel = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-8)
                if rel > worst:
                    worst = rel
                    worst_at = f"{name}[{i}] analytic={exact:.6e} numeric={numeric:.6e}"
    logger.debug(f"Gradient check max relative error {worst:.3e} at {worst_at or 'n/a'}")
    return worst
