"""Adam against a hand-simulated oracle."""

import numpy as np
import pytest

from invauto import tensor as T
from invauto.errors import ContractError
from invauto.optim import Adam


def test_zero_grad_zero_decay_is_noop():
    p = T.Parameter(np.array([1.0, -2.0]))
    p.grad = np.zeros(2)
    before = p.data.copy()
    Adam([p], weight_decay=0.0).step()
    assert np.array_equal(p.data, before)


def test_first_step_unit_grad_moves_by_lr():
    # bias correction makes m_hat = 1, v_hat = 1 on step one
    p = T.Parameter(np.array([5.0]))
    p.grad = np.ones(1)
    opt = Adam([p], lr=0.1, weight_decay=0.0)
    opt.step()
    expected = 5.0 - 0.1 * 1.0 / (1.0 + opt.eps)
    assert abs(float(p.data[0]) - expected) < 1e-12


def test_missing_grad_raises():
    p = T.Parameter(np.array([1.0]))
    with pytest.raises(ContractError):
        Adam([p]).step()


def adam_oracle(x0, grads, lr, b1, b2, eps, wd):
    x = x0
    m = v = 0.0
    for t, g_loss in enumerate(grads, start=1):
        g = g_loss + wd * x
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1 ** t)
        vh = v / (1 - b2 ** t)
        x = x - lr * mh / (np.sqrt(vh) + eps)
    return x


def test_three_steps_quadratic_vs_hand_simulation():
    # f(x) = x^2 / 2, grad = x, on a scalar
    lr, b1, b2, eps, wd = 0.05, 0.5, 0.999, 1e-8, 1e-2
    p = T.Parameter(np.array([2.0]))
    opt = Adam([p], lr=lr, beta1=b1, beta2=b2, eps=eps, weight_decay=wd)
    xs = []
    for _ in range(3):
        p.grad = p.data.copy()
        xs.append(float(p.grad[0]))
        opt.step()
        p.grad = None
    want = 2.0
    m = v = 0.0
    for t, g_loss in enumerate(xs, start=1):
        g = g_loss + wd * want
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        want = want - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    assert abs(float(p.data[0]) - want) < 1e-7


def test_weight_decay_applied_to_gradient():
    p = T.Parameter(np.array([10.0]))
    p.grad = np.zeros(1)
    opt = Adam([p], lr=0.1, weight_decay=1.0)
    opt.step()
    # effective grad = 10, first step moves by ~lr
    assert float(p.data[0]) < 10.0


def test_state_roundtrip_resumes_identically():
    rng = np.random.default_rng(0)
    p1 = T.Parameter(rng.standard_normal(4))
    p2 = T.Parameter(p1.data.copy())
    o1 = Adam([p1], lr=0.01)
    o2 = Adam([p2], lr=0.01)
    for _ in range(3):
        g = rng.standard_normal(4)
        p1.grad = g.copy()
        p2.grad = g.copy()
        o1.step()
        o2.step()
    state = o1.state_tensors()
    o3 = Adam([p2], lr=0.01)
    o3.load_state_tensors(dict(state))
    g = rng.standard_normal(4)
    p1.grad = g.copy()
    p2.grad = g.copy()
    o1.step()
    o3.step()
    assert np.array_equal(p1.data, p2.data)


def test_shared_parameter_counted_once():
    p = T.Parameter(np.array([1.0]))
    opt = Adam([p, p])
    assert len(opt.params) == 1
