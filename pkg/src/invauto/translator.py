"""Domain translator: two generators sharing one invertible core, plus
PatchGAN-style discriminators and the evaluation protocols.

Gen_B = Dec_B . E . Enc_A translates A -> B; Gen_A = Dec_A . D . Enc_B
translates B -> A, where (E, D) is a tied invertible core so the two feature
mappings are transposes of each other by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .baselines import VanillaAuto
from .errors import ConfigError, ConstructionError, ContractError, DimensionError
from .layers import (BiasLayer, Conv, ConvTransposed, InstanceNorm, InvResBlock,
                     LeakyReLU, Network, Stack, Tanh, build_inverted_stack,
                     unique_parameters)
from .tensor import Tensor


@dataclass
class GeneratorConfig:
    image_size: int = 32
    in_channels: int = 3
    channels: tuple = (16, 32, 64)     # head schedule; len-1 down/up-samplings
    n_blocks: int = 6                  # total invertible residual blocks
    alpha: float = 2.0
    slope: float = 0.2
    dis_channels: tuple = (16, 32, 64)
    # instance norm in the generator heads discards per-image intensity;
    # low-capacity configs reconstruct better without it
    head_norm: bool = True

    def __post_init__(self):
        if self.n_blocks % 2 != 0:
            raise ConstructionError("n_blocks must be even (symmetric schedule)")
        if len(self.channels) < 2:
            raise ConstructionError("channel schedule needs at least two stages")
        if self.image_size % (2 ** (len(self.channels) - 1)) != 0:
            raise ConstructionError("image size must be divisible by the "
                                    "total down-sampling factor")


NAMED_CONFIGS = {
    "tiny": GeneratorConfig(image_size=16, channels=(4, 8, 8), n_blocks=2,
                            dis_channels=(4, 8)),
    "desk": GeneratorConfig(image_size=32, channels=(8, 16, 32), n_blocks=2,
                            dis_channels=(8, 16)),
    "full128": GeneratorConfig(image_size=128, channels=(64, 128, 256),
                              n_blocks=18, dis_channels=(64, 128, 256, 512)),
    "full512": GeneratorConfig(image_size=512, channels=(64, 128, 256, 512),
                              n_blocks=18, dis_channels=(64, 128, 256, 512)),
}


def generator_config(name: str) -> GeneratorConfig:
    try:
        return NAMED_CONFIGS[name]
    except KeyError:
        raise ConfigError(f"unknown translator config {name!r}") from None


class TranslatorModel:
    """Enc/Dec heads are untied per domain; the feature-level core is a tied
    invertible autoencoder, so E (A->B features) and D (B->A features) share
    every parameter."""

    def __init__(self, enc_a: Stack, enc_b: Stack, core: Network,
                 dec_a: Stack, dec_b: Stack, dis_a: Stack, dis_b: Stack,
                 config: GeneratorConfig):
        self.enc_a, self.enc_b = enc_a, enc_b
        self.core = core
        self.dec_a, self.dec_b = dec_a, dec_b
        self.dis_a, self.dis_b = dis_a, dis_b
        self.config = config

    def gen_B(self, x_a: Tensor) -> Tensor:
        return self.dec_b(self.core.encoder(self.enc_a(x_a)))

    def gen_A(self, x_b: Tensor) -> Tensor:
        return self.dec_a(self.core.decoder(self.enc_b(x_b)))

    def named_parameters(self):
        out = []
        for prefix, part in (("enc_a.", self.enc_a), ("enc_b.", self.enc_b),
                             ("core.", self.core), ("dec_a.", self.dec_a),
                             ("dec_b.", self.dec_b), ("dis_a.", self.dis_a),
                             ("dis_b.", self.dis_b)):
            out += part.named_parameters(prefix)
        return out

    def generator_parameters(self):
        parts = [self.enc_a, self.enc_b, self.core, self.dec_a, self.dec_b]
        return unique_parameters(p for part in parts for p in part.parameters())

    def discriminator_parameters(self):
        return unique_parameters(self.dis_a.parameters() + self.dis_b.parameters())

    def parameters(self):
        return unique_parameters(p for _, p in self.named_parameters())


def _norm(cfg: GeneratorConfig):
    return [InstanceNorm()] if cfg.head_norm else []


def _head_encoder(cfg: GeneratorConfig, rng) -> Stack:
    layers = [Conv.create(cfg.channels[0], cfg.in_channels, 7, rng, stride=1, pad=3),
              *_norm(cfg), LeakyReLU(cfg.slope)]
    for cin, cout in zip(cfg.channels, cfg.channels[1:]):
        layers += [Conv.create(cout, cin, 3, rng, stride=2, pad=1),
                   *_norm(cfg), LeakyReLU(cfg.slope)]
    return Stack(layers)


def _head_decoder(cfg: GeneratorConfig, rng) -> Stack:
    size = cfg.image_size
    sizes = [size // 2 ** i for i in range(len(cfg.channels))]
    layers = []
    for i in range(len(cfg.channels) - 1, 0, -1):
        layers += [ConvTransposed.create(cfg.channels[i], cfg.channels[i - 1], 3,
                                         rng, stride=2, pad=1,
                                         out_hw=(sizes[i - 1], sizes[i - 1])),
                   *_norm(cfg), LeakyReLU(cfg.slope)]
    layers += [Conv.create(cfg.in_channels, cfg.channels[0], 7, rng, stride=1, pad=3),
               Tanh()]
    return Stack(layers)


def _discriminator(cfg: GeneratorConfig, rng) -> Stack:
    chans = cfg.dis_channels
    layers = [Conv.create(chans[0], cfg.in_channels, 4, rng, stride=2, pad=1),
              LeakyReLU(cfg.slope)]
    for i, (cin, cout) in enumerate(zip(chans, chans[1:])):
        stride = 2 if i < len(chans) - 2 else 1
        layers += [Conv.create(cout, cin, 4, rng, stride=stride, pad=1),
                   InstanceNorm(), LeakyReLU(cfg.slope)]
    layers.append(Conv.create(1, chans[-1], 4, rng, stride=1, pad=1))
    return Stack(layers)


def build_translator(cfg: GeneratorConfig, seed: int = 0) -> TranslatorModel:
    rng = np.random.default_rng(seed)
    feat = cfg.channels[-1]
    # near-identity init keeps the deep tied core stable at the start
    core = build_inverted_stack(
        [InvResBlock.create(feat, 3, rng, cfg.alpha, scale=0.05 / np.sqrt(feat))
         for _ in range(cfg.n_blocks // 2)])
    return TranslatorModel(
        enc_a=_head_encoder(cfg, rng), enc_b=_head_encoder(cfg, rng),
        core=core,
        dec_a=_head_decoder(cfg, rng), dec_b=_head_decoder(cfg, rng),
        dis_a=_discriminator(cfg, rng), dis_b=_discriminator(cfg, rng),
        config=cfg)


def translate(model: TranslatorModel, image: np.ndarray, direction: str) -> np.ndarray:
    """Convert one image or a batch; direction is 'AB' or 'BA'."""
    if direction not in ("AB", "BA"):
        raise ContractError(f"direction must be 'AB' or 'BA', got {direction!r}")
    arr = np.asarray(image)
    expected = (model.config.in_channels, model.config.image_size,
                model.config.image_size)
    if arr.shape[-3:] != expected:
        raise DimensionError(f"image shape {arr.shape} does not match {expected}")
    gen = model.gen_B if direction == "AB" else model.gen_A
    return gen(Tensor(arr)).data


def evaluate_l1_paired(model: TranslatorModel, pairs, direction: str,
                       batch_size: int = 16) -> float:
    """Mean absolute error against aligned ground truth, reported on the
    [0, 1] scale (inputs live in [-1, 1])."""
    a_imgs, b_imgs = pairs
    if len(a_imgs) != len(b_imgs):
        raise ContractError("paired evaluation requires aligned counts")
    src, tgt = (a_imgs, b_imgs) if direction == "AB" else (b_imgs, a_imgs)
    total = 0.0
    for start in range(0, len(src), batch_size):
        out = translate(model, src[start:start + batch_size], direction)
        total += np.abs(out - tgt[start:start + batch_size]).mean() \
            * (len(out) / len(src))
    return total / 2.0


def cycle_roundtrip_l1(model: TranslatorModel, images: np.ndarray,
                       direction: str = "AB", batch_size: int = 16) -> float:
    """Mean |x - back(x)| on the [0, 1] scale for A->B->A (or B->A->B)."""
    fwd, back = ("AB", "BA") if direction == "AB" else ("BA", "AB")
    total = 0.0
    for start in range(0, len(images), batch_size):
        batch = images[start:start + batch_size]
        rt = translate(model, translate(model, batch, fwd), back)
        total += np.abs(rt - batch).mean() * (len(batch) / len(images))
    return total / 2.0


# -- autoencoder-proxy scoring ----------------------------------------------------


@dataclass
class ProxyScorer:
    """Two domain-specialized autoencoders used to score converted images;
    each is trained to reconstruct its own domain."""

    omega_a: VanillaAuto
    omega_b: VanillaAuto
    trained: bool = False


def train_proxy_scorer(data_a: np.ndarray, data_b: np.ndarray, input_shape,
                       cfg, seed: int = 0) -> ProxyScorer:
    """Fit the two domain autoencoders, each on its own domain only."""
    from .configs import build_model
    from .training import train_reconstruction
    omega_a = build_model("auto", "conv", input_shape, seed)
    omega_b = build_model("auto", "conv", input_shape, seed + 1)
    train_reconstruction(omega_a, data_a, data_a[:1], cfg)
    train_reconstruction(omega_b, data_b, data_b[:1], cfg)
    return ProxyScorer(omega_a, omega_b, trained=True)


def evaluate_autoencoder_proxy(scorer: ProxyScorer, converted: np.ndarray,
                               target_domain: str, batch_size: int = 64) -> float:
    """Mean l1 reconstruction error of the target domain's autoencoder on a
    converted batch, reported on the [0, 1] scale. High scores mean the
    conversions do not resemble the target domain."""
    if not scorer.trained:
        raise ContractError("proxy scorer must be trained before scoring")
    if target_domain not in ("A", "B"):
        raise ContractError(f"target_domain must be 'A' or 'B', got {target_domain!r}")
    omega = scorer.omega_a if target_domain == "A" else scorer.omega_b
    total = 0.0
    for start in range(0, len(converted), batch_size):
        batch = converted[start:start + batch_size]
        recon = omega.reconstruct(Tensor(batch)).data
        total += np.abs(recon - batch).mean() * (len(batch) / len(converted))
    return total / 2.0
