"""The four reconstruction models compared by the orthonormality diagnostics:
tied-weight InvAuto, vanilla autoencoder, autoencoder pair with cycle
consistency, and a variational autoencoder.

All four expose identical encoder/decoder layer shapes for a given
architecture so their materialized E and D are comparable.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .layers import Network, Stack, unique_parameters
from .tensor import Tensor


class ReconstructionModel:
    """Common surface: reconstruct(x), loss(x, rng), encoder/decoder stacks."""

    kind = "base"

    def reconstruct(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def loss(self, x: Tensor, rng=None) -> Tensor:
        raise NotImplementedError

    def parameters(self):
        return unique_parameters(p for _, p in self.named_parameters())

    def named_parameters(self):
        raise NotImplementedError


class InvAutoModel(ReconstructionModel):
    kind = "invauto"

    def __init__(self, network: Network, input_shape):
        self.network = network
        self.input_shape = tuple(input_shape)

    def reconstruct(self, x: Tensor) -> Tensor:
        return self.network(x)

    def loss(self, x: Tensor, rng=None) -> Tensor:
        return auto_loss(self, x)

    def named_parameters(self):
        return self.network.named_parameters()

    @property
    def encoder_stack(self):
        return self.network.encoder

    @property
    def diag_network(self):
        return self.network


class VanillaAuto(ReconstructionModel):
    kind = "auto"

    def __init__(self, encoder: Stack, decoder: Stack, input_shape):
        self.network = Network(encoder, decoder, tied=False)
        self.input_shape = tuple(input_shape)

    def reconstruct(self, x: Tensor) -> Tensor:
        return self.network(x)

    def loss(self, x: Tensor, rng=None) -> Tensor:
        return auto_loss(self, x)

    def named_parameters(self):
        return self.network.named_parameters()

    @property
    def encoder_stack(self):
        return self.network.encoder

    @property
    def diag_network(self):
        return self.network


class CyclePair(ReconstructionModel):
    """Two untied autoencoders trained with composed-reconstruction terms.

    At validation scale both roles see the same data, so the pair acts as an
    autoencoder variant; diagnostics read the first model.
    """

    kind = "cycle"

    def __init__(self, first: VanillaAuto, second: VanillaAuto):
        self.first = first
        self.second = second
        self.input_shape = first.input_shape

    def reconstruct(self, x: Tensor) -> Tensor:
        return self.first.reconstruct(x)

    def loss(self, x: Tensor, rng=None) -> Tensor:
        composed = cycle_pair_loss(self, x, x)
        recon = auto_loss(self.first, x) + auto_loss(self.second, x)
        return composed + recon

    def named_parameters(self):
        out = [("first." + n, p) for n, p in self.first.named_parameters()]
        out += [("second." + n, p) for n, p in self.second.named_parameters()]
        return out

    @property
    def encoder_stack(self):
        return self.first.network.encoder

    @property
    def diag_network(self):
        return self.first.network


class VAEModel(ReconstructionModel):
    kind = "vae"

    def __init__(self, trunk: Stack, mu_head: Stack, logvar_head: Stack,
                 decoder: Stack, input_shape, beta: float = 1.0):
        self.trunk = trunk
        self.mu_head = mu_head
        self.logvar_head = logvar_head
        self.decoder = decoder
        self.input_shape = tuple(input_shape)
        self.beta = beta

    def encode(self, x: Tensor):
        h = self.trunk(x)
        return self.mu_head(h), self.logvar_head(h)

    def reconstruct(self, x: Tensor) -> Tensor:
        # deterministic mu-path decoding
        mu, _ = self.encode(x)
        return self.decoder(mu)

    def loss(self, x: Tensor, rng=None) -> Tensor:
        return vae_loss(self, x, rng)

    def named_parameters(self):
        out = [("trunk." + n, p) for n, p in self.trunk.named_parameters()]
        out += [("mu." + n, p) for n, p in self.mu_head.named_parameters()]
        out += [("logvar." + n, p) for n, p in self.logvar_head.named_parameters()]
        out += [("decoder." + n, p) for n, p in self.decoder.named_parameters()]
        return out

    @property
    def encoder_stack(self):
        # the mu path only: deterministic linearization
        return Stack(self.trunk.layers + self.mu_head.layers)

    @property
    def diag_network(self):
        return Network(self.encoder_stack, self.decoder, tied=False)


# -- losses ---------------------------------------------------------------------


def _check_same_shape(a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")


def mse(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b)
    d = a - b
    return (d * d).mean()


def auto_loss(model, x: Tensor) -> Tensor:
    """Mean squared reconstruction error."""
    return mse(model.reconstruct(x), x)


def cycle_pair_loss(pair: CyclePair, x_a: Tensor, x_b: Tensor) -> Tensor:
    """Composed round-trip reconstruction error of both directions."""
    f_ab, f_ba = pair.first.reconstruct, pair.second.reconstruct
    return mse(f_ab(f_ba(x_b)), x_b) + mse(f_ba(f_ab(x_a)), x_a)


def vae_loss(model: VAEModel, x: Tensor, rng=None) -> Tensor:
    """Reconstruction MSE plus beta * KL(N(mu, sigma^2) || N(0, I))."""
    mu, logvar = model.encode(x)
    if rng is None:
        eps = np.zeros(mu.shape)
    else:
        eps = rng.standard_normal(mu.shape)
    z = mu + (logvar * 0.5).exp() * Tensor(eps.astype(mu.dtype))
    recon = mse(model.decoder(z), x)
    batch = x.shape[0] if x.ndim > len(model.input_shape) else 1
    kl = 0.5 * (mu * mu + logvar.exp() - logvar - 1.0).sum() * (1.0 / batch)
    return recon + model.beta * kl
