"""Training procedures: reconstruction validation and adversarial domain
translation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .baselines import auto_loss
from .errors import ContractError
from .optim import Adam
from .tensor import Tensor

PROB_EPS = 1e-7


@dataclass
class TrainConfig:
    epochs: int = 10
    iterations: int = 2000
    batch_size: int = 128
    seed: int = 0
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    weight_decay: float = 1e-6
    lambda_cycle: float = 10.0
    saturating_gan: bool = False

    def __post_init__(self):
        if self.lambda_cycle < 0:
            raise ContractError("lambda_cycle must be >= 0")


def make_adam(params, cfg: TrainConfig) -> Adam:
    return Adam(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
                weight_decay=cfg.weight_decay)


# -- reconstruction validation ---------------------------------------------------


def evaluate_mse(model, data: np.ndarray, batch_size: int = 256) -> float:
    total, count = 0.0, 0
    for start in range(0, len(data), batch_size):
        batch = data[start:start + batch_size]
        total += auto_loss(model, Tensor(batch)).item() * len(batch)
        count += len(batch)
    return total / max(count, 1)


def train_reconstruction(model, train_data: np.ndarray, test_data: np.ndarray,
                         cfg: TrainConfig, optimizer: Adam = None,
                         start_epoch: int = 0):
    """Train a reconstruction model; deterministic given seed and config.

    Returns a history dict with per-epoch train loss and test MSE.
    start_epoch allows resuming with the same batch sequence as an
    uninterrupted run.
    """
    if len(train_data) == 0:
        raise ContractError("empty dataset")
    opt = optimizer or make_adam(model.parameters(), cfg)
    history = {"epoch": [], "train_loss": [], "test_mse": []}
    for epoch in range(start_epoch, cfg.epochs):
        # per-epoch stream keyed by (seed, epoch) so resume is reproducible
        rng = np.random.default_rng((cfg.seed, epoch))
        order = rng.permutation(len(train_data))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = train_data[order[start:start + cfg.batch_size]]
            loss = model.loss(Tensor(batch), rng)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        history["epoch"].append(epoch)
        history["train_loss"].append(float(np.mean(losses)))
        history["test_mse"].append(evaluate_mse(model, test_data))
    return history


# -- adversarial losses -----------------------------------------------------------


def _log_prob(logits: Tensor) -> Tensor:
    return T.clip(T.sigmoid(logits), PROB_EPS, 1.0 - PROB_EPS).log()


def _log_one_minus_prob(logits: Tensor) -> Tensor:
    return T.clip(1.0 - T.sigmoid(logits), PROB_EPS, 1.0 - PROB_EPS).log()


def discriminator_loss(dis, real: Tensor, fake: Tensor) -> Tensor:
    """-(E[log D(real)] + E[log(1 - D(fake))]); fake is detached by the caller."""
    return -(_log_prob(dis(real)).mean() + _log_one_minus_prob(dis(fake)).mean())


def generator_adv_loss(dis, fake: Tensor, saturating: bool = False) -> Tensor:
    if saturating:
        return _log_one_minus_prob(dis(fake)).mean()
    return -_log_prob(dis(fake)).mean()


def adversarial_loss(dis, gen, real_batch: Tensor, fake_source_batch: Tensor,
                     saturating: bool = False):
    """GAN losses for one (discriminator, generator) pair.

    Returns (d_loss, g_loss); the discriminator loss sees the generated batch
    detached so it never trains the generator.
    """
    fake = gen(fake_source_batch)
    d_loss = discriminator_loss(dis, real_batch, fake.detach())
    g_loss = generator_adv_loss(dis, fake, saturating)
    return d_loss, g_loss


def cycle_loss(gen_a, gen_b, x_a: Tensor, x_b: Tensor) -> Tensor:
    """Mean absolute error of both translation round trips, summed."""
    back_a = gen_a(gen_b(x_a))
    back_b = gen_b(gen_a(x_b))
    return (back_a - x_a).abs().mean() + (back_b - x_b).abs().mean()


def total_loss(lambda_cycle: float, cycle: Tensor,
               g_adv_a: Tensor, g_adv_b: Tensor) -> Tensor:
    """Generator objective: lambda * cycle consistency + both adversarial terms."""
    return lambda_cycle * cycle + g_adv_a + g_adv_b


# -- translator training ------------------------------------------------------------


def train_translator(model, data_a: np.ndarray, data_b: np.ndarray,
                     cfg: TrainConfig, gen_opt: Adam = None, dis_opt: Adam = None,
                     start_iteration: int = 0):
    """Alternating updates: one step for both discriminators, then one
    generator step, per iteration. Deterministic per seed."""
    if len(data_a) == 0 or len(data_b) == 0:
        raise ContractError("empty domain dataset")
    gen_opt = gen_opt or make_adam(model.generator_parameters(), cfg)
    dis_opt = dis_opt or make_adam(model.discriminator_parameters(), cfg)
    history = {"iteration": [], "d_loss": [], "g_adv": [], "cycle": []}
    for it in range(start_iteration, cfg.iterations):
        rng = np.random.default_rng((cfg.seed, it))
        xa = Tensor(data_a[rng.integers(0, len(data_a), cfg.batch_size)])
        xb = Tensor(data_b[rng.integers(0, len(data_b), cfg.batch_size)])

        fake_b = model.gen_B(xa)
        fake_a = model.gen_A(xb)

        d_loss = discriminator_loss(model.dis_a, xa, fake_a.detach()) + \
            discriminator_loss(model.dis_b, xb, fake_b.detach())
        dis_opt.zero_grad()
        d_loss.backward()
        dis_opt.step()

        g_adv_a = generator_adv_loss(model.dis_a, fake_a, cfg.saturating_gan)
        g_adv_b = generator_adv_loss(model.dis_b, fake_b, cfg.saturating_gan)
        cyc = (model.gen_A(fake_b) - xa).abs().mean() + \
            (model.gen_B(fake_a) - xb).abs().mean()
        g_loss = total_loss(cfg.lambda_cycle, cyc, g_adv_a, g_adv_b)
        gen_opt.zero_grad()
        g_loss.backward()
        gen_opt.step()

        history["iteration"].append(it)
        history["d_loss"].append(d_loss.item())
        history["g_adv"].append(g_adv_a.item() + g_adv_b.item())
        history["cycle"].append(cyc.item())
    return history
