"""Named architectures for the reconstruction-validation models.

Widths are configuration, not doctrine: every validation network keeps the
two-downsampling / two-upsampling shape, and all four model kinds share the
same layer shapes per architecture id.
"""

from __future__ import annotations

import numpy as np

from .baselines import CyclePair, InvAutoModel, VAEModel, VanillaAuto
from .errors import ConfigError
from .layers import (BiasLayer, Conv, ConvTransposed, InvLeakyReLU, InvResBlock,
                     LeakyReLU, Linear, ResBlock, Stack, TiedConv, TiedLinear,
                     build_inverted_stack)

MODEL_KINDS = ("invauto", "auto", "cycle", "vae")
ARCH_IDS = ("mlp", "conv", "resnet")

DEFAULT_ALPHA = 2.0
DEFAULT_SLOPE = 0.2

# Desk-scale training recipe for the four-way reconstruction comparison.
# Every model gets the same epoch budget; learning rates are tuned per
# model kind because the tied model trains stably at a lower rate while
# the untied baselines need a higher one to converge inside the budget.
DESK_EPOCHS = 300
DESK_BATCH = 128
DESK_LR = {"invauto": 2e-4, "auto": 1e-3, "cycle": 1e-3, "vae": 1e-3}


def mlp_dims(n_in: int):
    # two downsampling layers to an n/8 bottleneck; wide enough that the
    # bottleneck matrix has a meaningful number of row pairs for cosine stats
    return max(n_in // 2, 2), max(n_in // 8, 2)


def conv_channels(_c_in: int):
    return 4, 8


def build_model(kind: str, arch: str, input_shape, seed: int,
                alpha: float = DEFAULT_ALPHA, slope: float = DEFAULT_SLOPE):
    """Construct one of the four model kinds for a named architecture."""
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {kind!r}")
    if arch not in ARCH_IDS:
        raise ConfigError(f"unknown architecture {arch!r}")
    rng = np.random.default_rng(seed)
    if arch == "mlp":
        return _build_mlp(kind, tuple(input_shape), rng, alpha, slope)
    return _build_conv(kind, tuple(input_shape), rng, alpha, slope,
                       with_blocks=(arch == "resnet"))


def _build_mlp(kind, input_shape, rng, alpha, slope):
    n = int(np.prod(input_shape))
    dims = mlp_dims(n)
    if kind == "invauto":
        layers = []
        prev = n
        for d in dims:
            layers += [TiedLinear.create(d, prev, rng), BiasLayer.create(d),
                       InvLeakyReLU(alpha)]
            prev = d
        return InvAutoModel(build_inverted_stack(layers), (n,))

    def encoder():
        out = []
        prev = n
        for d in dims:
            out += [Linear.create(d, prev, rng), BiasLayer.create(d),
                    LeakyReLU(slope)]
            prev = d
        return Stack(out)

    def decoder():
        out = []
        prev = dims[-1]
        widths = tuple(dims[-2::-1]) + (n,)
        for i, d in enumerate(widths):
            out += [Linear.create(d, prev, rng), BiasLayer.create(d)]
            if i < len(widths) - 1:
                out.append(LeakyReLU(slope))
            prev = d
        return Stack(out)

    if kind == "auto":
        return VanillaAuto(encoder(), decoder(), (n,))
    if kind == "cycle":
        return CyclePair(VanillaAuto(encoder(), decoder(), (n,)),
                         VanillaAuto(encoder(), decoder(), (n,)))
    trunk_layers = []
    prev = n
    for d in dims[:-1]:
        trunk_layers += [Linear.create(d, prev, rng), BiasLayer.create(d),
                         LeakyReLU(slope)]
        prev = d
    trunk = Stack(trunk_layers)
    mu = Stack([Linear.create(dims[-1], prev, rng), BiasLayer.create(dims[-1])])
    logvar = Stack([Linear.create(dims[-1], prev, rng),
                    BiasLayer.create(dims[-1])])
    return VAEModel(trunk, mu, logvar, decoder(), (n,))


def _build_conv(kind, input_shape, rng, alpha, slope, with_blocks):
    c, h, w = input_shape
    c1, c2 = conv_channels(c)
    h2, w2 = h // 2, w // 2

    def blocks_tied():
        return [InvResBlock.create(c2, 3, rng, alpha) for _ in range(2)] \
            if with_blocks else []

    def blocks_untied():
        return [ResBlock.create(c2, 3, rng, slope) for _ in range(2)] \
            if with_blocks else []

    if kind == "invauto":
        net = build_inverted_stack([
            TiedConv.create(c1, c, 3, rng, stride=2, pad=1, in_hw=(h, w)),
            BiasLayer.create((c1, 1, 1)), InvLeakyReLU(alpha),
            TiedConv.create(c2, c1, 3, rng, stride=2, pad=1, in_hw=(h2, w2)),
            BiasLayer.create((c2, 1, 1)), InvLeakyReLU(alpha),
            *blocks_tied(),
        ])
        return InvAutoModel(net, input_shape)

    def encoder():
        return Stack([
            Conv.create(c1, c, 3, rng, stride=2, pad=1),
            BiasLayer.create((c1, 1, 1)), LeakyReLU(slope),
            Conv.create(c2, c1, 3, rng, stride=2, pad=1),
            BiasLayer.create((c2, 1, 1)), LeakyReLU(slope),
            *blocks_untied(),
        ])

    def decoder():
        return Stack([
            *blocks_untied(),
            ConvTransposed.create(c2, c1, 3, rng, stride=2, pad=1, out_hw=(h2, w2)),
            BiasLayer.create((c1, 1, 1)), LeakyReLU(slope),
            ConvTransposed.create(c1, c, 3, rng, stride=2, pad=1, out_hw=(h, w)),
            BiasLayer.create((c, 1, 1)),
        ])

    if kind == "auto":
        return VanillaAuto(encoder(), decoder(), input_shape)
    if kind == "cycle":
        return CyclePair(VanillaAuto(encoder(), decoder(), input_shape),
                         VanillaAuto(encoder(), decoder(), input_shape))
    trunk = Stack([
        Conv.create(c1, c, 3, rng, stride=2, pad=1),
        BiasLayer.create((c1, 1, 1)), LeakyReLU(slope),
    ])
    mu = Stack([Conv.create(c2, c1, 3, rng, stride=2, pad=1),
                BiasLayer.create((c2, 1, 1))])
    logvar = Stack([Conv.create(c2, c1, 3, rng, stride=2, pad=1),
                    BiasLayer.create((c2, 1, 1))])
    return VAEModel(trunk, mu, logvar, decoder(), input_shape)
