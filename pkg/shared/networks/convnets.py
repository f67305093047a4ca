"""Convolutional regularizer field H_phi and scalar critic phi.

Both networks store their weights in a flat ParamVector with segments
"conv{i}.weight" (C_out, C_in, k, k) and "conv{i}.bias" (C_out,); the critic
adds "head.weight" (C_last,) and "head.bias" (1,). The architecture is read
back from those shapes, so any conforming vector can be applied.
"""

from typing import List, Tuple, Union

import numpy as np

from shared.autodiff.params import BoundParams, ParamLayout, ParamVector, as_bound
from shared.autodiff.tensor import ACTIVATIONS, Tensor, as_tensor, conv2d
from shared.exceptions import ValidationError
from shared.imaging.operators import Image
from shared.models.configs import CriticArch, RegularizerArch
from shared.models.enums import Activation
from shared.utils.seeding import derive_rng

Params = Union[ParamVector, BoundParams]

HEAD_WEIGHT = "head.weight"
HEAD_BIAS = "head.bias"


def conv_layers(layout: ParamLayout) -> List[Tuple[str, str]]:
    """(weight, bias) segment names of the convolution stack, in order"""
    layers = []
    i = 0
    while f"conv{i}.weight" in layout:
        w, b = f"conv{i}.weight", f"conv{i}.bias"
        if b not in layout:
            raise ValidationError(f"layout has {w} but no {b}")
        w_shape, b_shape = layout[w].shape, layout[b].shape
        if len(w_shape) != 4 or w_shape[2] != w_shape[3] or b_shape != (w_shape[0],):
            raise ValidationError(f"malformed convolution segment {w}: weight {w_shape}, bias {b_shape}")
        if layers and layout[layers[-1][0]].shape[0] != w_shape[1]:
            raise ValidationError(f"{w} expects {w_shape[1]} input channels")
        layers.append((w, b))
        i += 1
    return layers


def is_critic_layout(layout: ParamLayout) -> bool:
    return HEAD_WEIGHT in layout


def _regularizer_layout(arch: RegularizerArch) -> ParamLayout:
    shapes = []
    for i, (c_in, c_out) in enumerate(zip(arch.channels[:-1], arch.channels[1:])):
        shapes.append((f"conv{i}.weight", (c_out, c_in, arch.kernel, arch.kernel)))
        shapes.append((f"conv{i}.bias", (c_out,)))
    return ParamLayout.from_shapes(shapes)


def _critic_layout(arch: CriticArch) -> ParamLayout:
    shapes = []
    for i, (c_in, c_out) in enumerate(zip(arch.channels[:-1], arch.channels[1:])):
        shapes.append((f"conv{i}.weight", (c_out, c_in, arch.kernel, arch.kernel)))
        shapes.append((f"conv{i}.bias", (c_out,)))
    shapes.append((HEAD_WEIGHT, (arch.channels[-1],)))
    shapes.append((HEAD_BIAS, (1,)))
    return ParamLayout.from_shapes(shapes)


def layout_for(arch: Union[RegularizerArch, CriticArch]) -> ParamLayout:
    if isinstance(arch, RegularizerArch):
        return _regularizer_layout(arch)
    if isinstance(arch, CriticArch):
        return _critic_layout(arch)
    raise ValidationError(f"unknown architecture type {type(arch).__name__}")


def init_params(arch: Union[RegularizerArch, CriticArch], seed: int) -> ParamVector:
    """Weights uniform in ±1/sqrt(fan_in), biases zero.

    The last convolution of H_phi starts at zero so the untrained transport
    equation is the plain data-fidelity flow.
    """
    layout = layout_for(arch)
    tag = "critic" if isinstance(arch, CriticArch) else "regularizer"
    rng = derive_rng(seed, "init", tag)
    params = ParamVector.zeros(layout)
    layers = conv_layers(layout)
    for i, (w, _) in enumerate(layers):
        if isinstance(arch, RegularizerArch) and i == len(layers) - 1:
            continue
        shape = layout[w].shape
        scale = 1.0 / np.sqrt(shape[1] * shape[2] * shape[3])
        params = params.replace_segment(w, rng.uniform(-scale, scale, size=shape))
    if isinstance(arch, CriticArch):
        fan_in = layout[HEAD_WEIGHT].shape[0]
        scale = 1.0 / np.sqrt(fan_in)
        params = params.replace_segment(HEAD_WEIGHT, rng.uniform(-scale, scale, size=fan_in))
    return params


# ------------------------------------------------------------- graph forward

def _as_batch(x: Tensor, n_dims: int = 3) -> Tensor:
    if x.ndim == 2:
        x = x.reshape((1,) + x.shape)
    if x.ndim != n_dims:
        raise ValidationError(f"expected a (B, n, n) batch, got shape {x.shape}")
    return x


def hphi_tensor(params: Params, x, nonlinearity: Activation = Activation.TANH) -> Tensor:
    """H_phi on a (B, n, n) batch inside the gradient engine"""
    bound = as_bound(params)
    if is_critic_layout(bound.layout):
        raise ValidationError("parameter layout belongs to a critic, not a regularizer field")
    layers = conv_layers(bound.layout)
    if not layers or bound.layout[layers[0][0]].shape[1] != 1 or bound.layout[layers[-1][0]].shape[0] != 1:
        raise ValidationError("regularizer layout must map one channel to one channel")
    x = _as_batch(as_tensor(x))
    act = ACTIVATIONS[Activation(nonlinearity).value]
    batch, n = x.shape[0], x.shape[-1]
    h = x.reshape((batch, 1, n, n))
    for i, (w, b) in enumerate(layers):
        h = conv2d(h, bound[w], bound[b])
        if i < len(layers) - 1:
            h = act(h)
    return h.reshape((batch, n, n))


def critic_tensor(params: Params, x, nonlinearity: Activation = Activation.TANH) -> Tensor:
    """phi on a (B, n, n) batch: one score per image, shape (B,)"""
    bound = as_bound(params)
    if not is_critic_layout(bound.layout) or HEAD_BIAS not in bound.layout:
        raise ValidationError("parameter layout has no critic head")
    layers = conv_layers(bound.layout)
    x = _as_batch(as_tensor(x))
    act = ACTIVATIONS[Activation(nonlinearity).value]
    batch, n = x.shape[0], x.shape[-1]
    h = x.reshape((batch, 1, n, n))
    channels = 1
    for w, b in layers:
        h = act(conv2d(h, bound[w], bound[b]))
        channels = bound.layout[w].shape[0]
    if bound.layout[HEAD_WEIGHT].shape != (channels,):
        raise ValidationError(
            f"critic head expects {bound.layout[HEAD_WEIGHT].shape[0]} features, stack yields {channels}"
        )
    pooled = h.mean(axis=(2, 3))
    return pooled @ bound[HEAD_WEIGHT] + bound[HEAD_BIAS]


# -------------------------------------------------------------- value forward

def hphi_apply(params: ParamVector, x: Image, nonlinearity: Activation = Activation.TANH) -> Image:
    out = hphi_tensor(params, x.data[None], nonlinearity)
    return Image(out.data[0])


def critic_apply(params: ParamVector, x: Image, nonlinearity: Activation = Activation.TANH) -> float:
    return float(critic_tensor(params, x.data[None], nonlinearity).data[0])


def critic_scores(params: ParamVector, batch: np.ndarray, nonlinearity: Activation = Activation.TANH) -> np.ndarray:
    """Critic values of a (B, n, n) array without building a graph"""
    return critic_tensor(params, np.asarray(batch, dtype=np.float64), nonlinearity).data.copy()
