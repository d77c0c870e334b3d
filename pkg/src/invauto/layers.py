"""Invertible layers with tied parameters, and the mirrored-stack builder.

Each invertible layer has two roles: `forward` (encoder side) and `inverse`
(decoder side). Both roles read the same parameter storage, so a decoder is
never more than a view of its encoder's weights.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ConstructionError, DimensionError, ParameterError
from .tensor import Parameter, Tensor


class Layer:
    """Base class; subclasses define forward(), optionally inverse()."""

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def named_params(self):
        return []

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)


# -- tied (invertible) layers --------------------------------------------------


class TiedLinear(Layer):
    """Fully-connected layer whose decoder role applies the transpose of the
    same weight storage."""

    def __init__(self, weight):
        self.W = weight if isinstance(weight, Parameter) else Parameter(weight)
        if self.W.ndim != 2:
            raise DimensionError("TiedLinear weight must be 2-d")

    @classmethod
    def create(cls, out_features: int, in_features: int, rng: np.random.Generator):
        scale = 1.0 / np.sqrt(in_features)
        return cls(rng.standard_normal((out_features, in_features)) * scale)

    def forward(self, x: Tensor) -> Tensor:
        # row-major batches: y = x W^T  <=>  y^T = W x^T
        if x.shape[-1] != self.W.shape[1]:
            raise DimensionError(f"input {x.shape} vs weight {self.W.shape}")
        return T.matmul(x, self.W.T)

    def inverse(self, y: Tensor) -> Tensor:
        if y.shape[-1] != self.W.shape[0]:
            raise DimensionError(f"input {y.shape} vs weight^T {self.W.shape}")
        return T.matmul(y, self.W)

    def named_params(self):
        return [("W", self.W)]


class TiedConv(Layer):
    """Convolution whose decoder role is the transposed convolution with the
    same kernel storage."""

    def __init__(self, kernel, stride: int = 1, pad: int = 0, in_hw=None):
        self.kernel = kernel if isinstance(kernel, Parameter) else Parameter(kernel)
        if self.kernel.ndim != 4:
            raise DimensionError("TiedConv kernel must be (Co, Ci, K, K)")
        self.stride = stride
        self.pad = pad
        # fixed forward input extents; needed to invert stride-2 convs
        self.in_hw = tuple(in_hw) if in_hw is not None else None

    @classmethod
    def create(cls, out_channels: int, in_channels: int, k: int,
               rng: np.random.Generator, stride: int = 1, pad: int = 0, in_hw=None):
        scale = 1.0 / np.sqrt(in_channels * k * k)
        kern = rng.standard_normal((out_channels, in_channels, k, k)) * scale
        return cls(kern, stride=stride, pad=pad, in_hw=in_hw)

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.kernel, self.stride, self.pad)

    def inverse(self, y: Tensor) -> Tensor:
        return T.conv2d_transposed(y, self.kernel, self.stride, self.pad,
                                   out_hw=self.in_hw)

    def named_params(self):
        return [("kernel", self.kernel)]


class InvLeakyReLU(Layer):
    """Piecewise-linear bijection: y = x/alpha for x >= 0, else alpha*x.

    The inverse branches on the sign of y, which matches the sign of x for
    any alpha > 0.
    """

    def __init__(self, alpha: float = 2.0):
        if alpha <= 0:
            raise ParameterError(f"alpha must be positive, got {alpha}")
        self.alpha = float(alpha)

    def forward(self, x: Tensor) -> Tensor:
        return T.inv_leaky_relu(x, self.alpha)

    def inverse(self, y: Tensor) -> Tensor:
        return T.inv_leaky_relu_inverse(y, self.alpha)


class BiasLayer(Layer):
    """Bias as a standalone layer; the decoder role subtracts the same storage."""

    def __init__(self, bias):
        self.b = bias if isinstance(bias, Parameter) else Parameter(bias)

    @classmethod
    def create(cls, shape):
        return cls(np.zeros(shape))

    def forward(self, x: Tensor) -> Tensor:
        return x + self.b

    def inverse(self, y: Tensor) -> Tensor:
        return y - self.b

    def named_params(self):
        return [("b", self.b)]


class InvResBlock(Layer):
    """Residual block sigma((W2.W1 + I) x) with a parameter-free skip.

    W1 parametrizes a convolution, W2 a transposed convolution; the decoder
    role applies the exact transpose (W1^T W2^T + I) after sigma^{-1}.
    Kernels must preserve spatial extents (stride 1, same padding).
    """

    def __init__(self, w1, w2, alpha: float = 2.0):
        self.W1 = w1 if isinstance(w1, Parameter) else Parameter(w1)
        self.W2 = w2 if isinstance(w2, Parameter) else Parameter(w2)
        if self.W1.shape[-1] % 2 == 0 or self.W2.shape[-1] % 2 == 0:
            raise DimensionError("InvResBlock kernels must be odd-sized")
        self.act = InvLeakyReLU(alpha)
        self.pad1 = self.W1.shape[-1] // 2
        self.pad2 = self.W2.shape[-1] // 2

    @classmethod
    def create(cls, channels: int, k: int, rng: np.random.Generator,
               alpha: float = 2.0, scale: float | None = None):
        if scale is None:
            scale = 1.0 / np.sqrt(channels * k * k)
        w1 = rng.standard_normal((channels, channels, k, k)) * scale
        w2 = rng.standard_normal((channels, channels, k, k)) * scale
        return cls(w1, w2, alpha)

    def forward(self, x: Tensor) -> Tensor:
        t = T.conv2d(x, self.W1, 1, self.pad1)
        t = T.conv2d_transposed(t, self.W2, 1, self.pad2)
        return self.act.forward(t + x)

    def inverse(self, y: Tensor) -> Tensor:
        t = self.act.inverse(y)
        r = T.conv2d(t, self.W2, 1, self.pad2)
        r = T.conv2d_transposed(r, self.W1, 1, self.pad1)
        return r + t

    def named_params(self):
        return [("W1", self.W1), ("W2", self.W2)]


# -- plain (untied) layers for baselines and generator heads -------------------


class Linear(Layer):
    def __init__(self, weight):
        self.W = weight if isinstance(weight, Parameter) else Parameter(weight)

    @classmethod
    def create(cls, out_features: int, in_features: int, rng: np.random.Generator):
        scale = 1.0 / np.sqrt(in_features)
        return cls(rng.standard_normal((out_features, in_features)) * scale)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.W.shape[1]:
            raise DimensionError(f"input {x.shape} vs weight {self.W.shape}")
        return T.matmul(x, self.W.T)

    def named_params(self):
        return [("W", self.W)]


class Conv(Layer):
    def __init__(self, kernel, stride: int = 1, pad: int = 0):
        self.kernel = kernel if isinstance(kernel, Parameter) else Parameter(kernel)
        self.stride = stride
        self.pad = pad

    @classmethod
    def create(cls, out_channels: int, in_channels: int, k: int,
               rng: np.random.Generator, stride: int = 1, pad: int = 0):
        scale = 1.0 / np.sqrt(in_channels * k * k)
        kern = rng.standard_normal((out_channels, in_channels, k, k)) * scale
        return cls(kern, stride=stride, pad=pad)

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.kernel, self.stride, self.pad)

    def named_params(self):
        return [("kernel", self.kernel)]


class ConvTransposed(Layer):
    """Up-sampling layer with its own kernel storage.

    The kernel is laid out as the kernel of the notional forward convolution
    whose transpose this layer realizes: (in_channels, out_channels, K, K)
    seen from this layer's perspective is (Co, Ci, K, K) of that conv.
    """

    def __init__(self, kernel, stride: int = 1, pad: int = 0, out_hw=None):
        self.kernel = kernel if isinstance(kernel, Parameter) else Parameter(kernel)
        self.stride = stride
        self.pad = pad
        self.out_hw = tuple(out_hw) if out_hw is not None else None

    @classmethod
    def create(cls, in_channels: int, out_channels: int, k: int,
               rng: np.random.Generator, stride: int = 1, pad: int = 0, out_hw=None):
        scale = 1.0 / np.sqrt(in_channels * k * k)
        kern = rng.standard_normal((in_channels, out_channels, k, k)) * scale
        return cls(kern, stride=stride, pad=pad, out_hw=out_hw)

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d_transposed(x, self.kernel, self.stride, self.pad,
                                   out_hw=self.out_hw)

    def named_params(self):
        return [("kernel", self.kernel)]


class ResBlock(Layer):
    """Untied counterpart of InvResBlock: sigma((W2.W1 + I) x) with its own
    kernel storages and a conventional LeakyReLU."""

    def __init__(self, w1, w2, slope: float = 0.2):
        self.W1 = w1 if isinstance(w1, Parameter) else Parameter(w1)
        self.W2 = w2 if isinstance(w2, Parameter) else Parameter(w2)
        self.slope = slope
        self.pad1 = self.W1.shape[-1] // 2
        self.pad2 = self.W2.shape[-1] // 2

    @classmethod
    def create(cls, channels: int, k: int, rng: np.random.Generator,
               slope: float = 0.2, scale: float | None = None):
        if scale is None:
            scale = 1.0 / np.sqrt(channels * k * k)
        w1 = rng.standard_normal((channels, channels, k, k)) * scale
        w2 = rng.standard_normal((channels, channels, k, k)) * scale
        return cls(w1, w2, slope)

    def forward(self, x: Tensor) -> Tensor:
        t = T.conv2d(x, self.W1, 1, self.pad1)
        t = T.conv2d_transposed(t, self.W2, 1, self.pad2)
        return T.leaky_relu(t + x, self.slope)

    def named_params(self):
        return [("W1", self.W1), ("W2", self.W2)]


class LeakyReLU(Layer):
    def __init__(self, slope: float = 0.2):
        self.slope = slope

    def forward(self, x: Tensor) -> Tensor:
        return T.leaky_relu(x, self.slope)


class Tanh(Layer):
    def forward(self, x: Tensor) -> Tensor:
        return x.tanh()


class InstanceNorm(Layer):
    """Per-sample, per-channel normalization over spatial extents (no affine)."""

    def __init__(self, eps: float = 1e-5):
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim not in (3, 4):
            raise DimensionError("InstanceNorm expects (N,C,H,W) or (C,H,W)")
        axes = (-2, -1)
        mu = x.mean(axis=axes, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=axes, keepdims=True)
        return centered * ((var + self.eps) ** -0.5)


# -- stacks and networks -------------------------------------------------------


class Stack:
    """Ordered layers applied first-to-last."""

    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    __call__ = forward

    def named_parameters(self, prefix: str = ""):
        out = []
        for i, layer in enumerate(self.layers):
            for name, p in layer.named_params():
                out.append((f"{prefix}layer{i}.{name}", p))
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]


class InverseStack:
    """The mirrored decoder of a tied stack: same layers, reversed order,
    inverse role, shared parameter storage."""

    def __init__(self, source: Stack):
        self.source = source

    @property
    def layers(self):
        return list(reversed(self.source.layers))

    def forward(self, y: Tensor) -> Tensor:
        for layer in self.layers:
            y = layer.inverse(y)
        return y

    __call__ = forward

    def named_parameters(self, prefix: str = ""):
        # tied: all storage belongs to the source stack
        return []

    def parameters(self):
        return []


class Network:
    """An encoder stack plus its decoder; `tied` marks a mirrored decoder."""

    def __init__(self, encoder: Stack, decoder, tied: bool):
        self.encoder = encoder
        self.decoder = decoder
        self.tied = tied

    def forward(self, x: Tensor) -> Tensor:
        return self.decoder(self.encoder(x))

    __call__ = forward

    def named_parameters(self, prefix: str = ""):
        out = list(self.encoder.named_parameters(prefix + "encoder."))
        out += self.decoder.named_parameters(prefix + "decoder.")
        return out

    def parameters(self):
        return unique_parameters(p for _, p in self.named_parameters())


def build_inverted_stack(layers) -> Network:
    """Mirror an encoder layer list into a parameter-sharing inverted decoder."""
    layers = list(layers)
    for layer in layers:
        if not hasattr(layer, "inverse"):
            raise ConstructionError(
                f"{type(layer).__name__} has no inverse; cannot build a tied stack")
    encoder = Stack(layers)
    return Network(encoder, InverseStack(encoder), tied=True)


def unique_parameters(params):
    seen = set()
    out = []
    for p in params:
        if id(p) not in seen:
            seen.add(id(p))
            out.append(p)
    return out


def parameter_count(obj) -> int:
    """Number of trainable scalars, counting each shared storage once."""
    if isinstance(obj, Parameter):
        return obj.size
    if hasattr(obj, "parameters"):
        return sum(p.size for p in unique_parameters(obj.parameters()))
    return sum(p.size for p in unique_parameters(obj))
