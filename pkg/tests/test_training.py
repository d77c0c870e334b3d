"""Training loops: determinism, trivial cases, loss oracles."""

import numpy as np
import pytest

from invauto import tensor as T
from invauto.baselines import InvAutoModel
from invauto.configs import build_model
from invauto.errors import ContractError
from invauto.layers import BiasLayer, InvLeakyReLU, Stack, TiedLinear, build_inverted_stack
from invauto.training import (
    TrainConfig,
    adversarial_loss,
    cycle_loss,
    discriminator_loss,
    evaluate_mse,
    generator_adv_loss,
    make_adam,
    total_loss,
    train_reconstruction,
)


def small_data(seed=0, n=64, dim=16):
    return np.random.default_rng(seed).standard_normal((n, dim)).astype(np.float32)


def small_model(seed=0, dim=16):
    rng = np.random.default_rng(seed)
    net = build_inverted_stack([
        TiedLinear.create(8, dim, rng), BiasLayer.create(8), InvLeakyReLU(2.0),
    ])
    return InvAutoModel(net, (dim,))


def test_lambda_must_be_nonnegative():
    with pytest.raises(ContractError):
        TrainConfig(lambda_cycle=-1.0)


def test_empty_dataset_raises():
    with pytest.raises(ContractError):
        train_reconstruction(small_model(), np.zeros((0, 16)), np.zeros((0, 16)),
                             TrainConfig(epochs=1))


def test_zero_epochs_leaves_model_unchanged():
    m = small_model()
    before = [p.data.copy() for p in m.parameters()]
    train_reconstruction(m, small_data(), small_data(1), TrainConfig(epochs=0))
    for p, b in zip(m.parameters(), before):
        assert np.array_equal(p.data, b)


def test_training_is_deterministic_given_seed():
    with T.using_dtype(np.float64):
        hists = []
        for _ in range(2):
            m = small_model(3)
            h = train_reconstruction(m, small_data(4), small_data(5),
                                     TrainConfig(epochs=3, batch_size=16, seed=9))
            hists.append(h)
        assert hists[0]["train_loss"] == hists[1]["train_loss"]
        assert hists[0]["test_mse"] == hists[1]["test_mse"]


def test_resume_matches_uninterrupted_run():
    with T.using_dtype(np.float64):
        data, test = small_data(6), small_data(7)
        m1 = small_model(8)
        h1 = train_reconstruction(m1, data, test,
                                  TrainConfig(epochs=4, batch_size=16, seed=2))
        m2 = small_model(8)
        opt = make_adam(m2.parameters(), TrainConfig(seed=2))
        train_reconstruction(m2, data, test,
                             TrainConfig(epochs=2, batch_size=16, seed=2),
                             optimizer=opt)
        h2 = train_reconstruction(m2, data, test,
                                  TrainConfig(epochs=4, batch_size=16, seed=2),
                                  optimizer=opt, start_epoch=2)
        assert h1["train_loss"][-1] == h2["train_loss"][-1]
        for p1, p2 in zip(m1.parameters(), m2.parameters()):
            assert np.array_equal(p1.data, p2.data)


def test_orthonormal_map_dataset_converges():
    # data generated by an orthonormal map is exactly representable
    rng = np.random.default_rng(10)
    q, _ = np.linalg.qr(rng.standard_normal((16, 16)))
    z = rng.standard_normal((256, 8))
    data = (z @ q[:8]).astype(np.float32)
    m = small_model(11)
    cfg = TrainConfig(epochs=200, batch_size=256, seed=0, lr=2e-2,
                      weight_decay=0.0)
    h = train_reconstruction(m, data, data, cfg)
    assert h["test_mse"][-1] < 1e-3


def test_evaluate_mse_matches_direct():
    m = small_model(12)
    data = small_data(13, n=32)
    got = evaluate_mse(m, data, batch_size=8)
    recon = m.reconstruct(T.Tensor(data)).data
    assert np.isclose(got, ((recon - data) ** 2).mean(), atol=1e-6)


class ConstantDis:
    """Discriminator stub returning fixed logits."""

    def __init__(self, logit):
        self.logit = logit

    def __call__(self, x):
        shape = (x.shape[0], 1)
        return T.Tensor(np.full(shape, self.logit, dtype=np.float64))


def test_d_loss_at_half_is_2log2():
    dis = ConstantDis(0.0)  # sigmoid(0) = 0.5
    x = T.Tensor(np.zeros((4, 3)))
    val = float(discriminator_loss(dis, x, x).data)
    assert np.isclose(val, 2 * np.log(2.0), atol=1e-6)


def test_d_loss_confident_correct_near_zero():
    dis_real = ConstantDis(30.0)

    class SplitDis:
        def __call__(self, x):
            # positive logits for real marker, negative for fake marker
            sign = np.where(x.data[:, :1] > 0, 30.0, -30.0)
            return T.Tensor(sign)

    real = T.Tensor(np.ones((4, 3)))
    fake = T.Tensor(-np.ones((4, 3)))
    val = float(discriminator_loss(SplitDis(), real, fake).data)
    assert val < 1e-6


def test_generator_loss_nonsaturating_vs_minimax():
    dis = ConstantDis(0.0)
    fake = T.Tensor(np.zeros((4, 3)))
    nonsat = float(generator_adv_loss(dis, fake, saturating=False).data)
    minimax = float(generator_adv_loss(dis, fake, saturating=True).data)
    assert np.isclose(nonsat, np.log(2.0), atol=1e-6)
    assert np.isclose(minimax, np.log(0.5), atol=1e-6)


def test_adversarial_loss_oracle():
    rng = np.random.default_rng(14)

    class LinearDis:
        def __call__(self, x):
            return x.mean(axis=1, keepdims=True)

    class IdentityGen:
        def __call__(self, x):
            return x

    real = T.Tensor(rng.standard_normal((5, 3)))
    src = T.Tensor(rng.standard_normal((5, 3)))
    d_loss, g_loss = adversarial_loss(LinearDis(), IdentityGen(), real, src)

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    p_real = sig(real.data.mean(axis=1))
    p_fake = sig(src.data.mean(axis=1))
    want_d = -(np.log(p_real).mean() + np.log(1 - p_fake).mean())
    want_g = -np.log(p_fake).mean()
    assert np.isclose(float(d_loss.data), want_d, atol=1e-6)
    assert np.isclose(float(g_loss.data), want_g, atol=1e-6)


def test_cycle_loss_identity_generators_zero():
    class Identity:
        def __call__(self, x):
            return x

    x = T.Tensor(np.random.default_rng(15).standard_normal((3, 4)))
    assert float(cycle_loss(Identity(), Identity(), x, x).data) == 0.0


def test_cycle_loss_offsetting_shifts_zero():
    c = 3.0

    class Plus:
        def __call__(self, x):
            return x + T.Tensor(np.full(x.shape, c))

    class Minus:
        def __call__(self, x):
            return x + T.Tensor(np.full(x.shape, -c))

    x = T.Tensor(np.random.default_rng(16).standard_normal((3, 4)))
    val = float(cycle_loss(Minus(), Plus(), x, x).data)
    assert abs(val) < 1e-6


def test_cycle_loss_per_element_oracle():
    rng = np.random.default_rng(17)
    a = rng.standard_normal((2, 3))
    b = rng.standard_normal((2, 3))

    class Stub:
        def __init__(self, out):
            self.out = out

        def __call__(self, x):
            return T.Tensor(self.out.copy())

    gen_b = Stub(b)  # A -> B direction returns b
    gen_a = Stub(a)  # B -> A direction returns a
    xa = T.Tensor(rng.standard_normal((2, 3)))
    xb = T.Tensor(rng.standard_normal((2, 3)))
    got = float(cycle_loss(gen_a, gen_b, xa, xb).data)
    want = np.abs(a - xa.data).mean() + np.abs(b - xb.data).mean()
    assert np.isclose(got, want, atol=1e-6)


def test_total_loss_arithmetic():
    cyc = T.Tensor(np.array(0.7))
    ga = T.Tensor(np.array(0.2))
    gb = T.Tensor(np.array(0.3))
    assert np.isclose(float(total_loss(10.0, cyc, ga, gb).data), 7.5)
    assert np.isclose(float(total_loss(0.0, cyc, ga, gb).data), 0.5)


def test_total_loss_monotone_in_lambda():
    cyc = T.Tensor(np.array(1.3))
    ga = T.Tensor(np.array(0.1))
    gb = T.Tensor(np.array(0.1))
    vals = [float(total_loss(lam, cyc, ga, gb).data) for lam in (0.0, 1.0, 10.0)]
    assert vals == sorted(vals)


def test_history_lengths():
    m = small_model(18)
    h = train_reconstruction(m, small_data(19), small_data(20),
                             TrainConfig(epochs=5, batch_size=32, seed=0))
    assert len(h["epoch"]) == len(h["train_loss"]) == len(h["test_mse"]) == 5
