import math

import numpy as np
import pytest

from promptdepth.autodiff import Tensor
from promptdepth.errors import ParameterError
from promptdepth.optim import AdamW


def test_zero_grad_zero_decay_leaves_params_unchanged():
    p = Tensor(np.array([1.5, -2.0]), requires_grad=True)
    opt = AdamW([({"p": p}, 1e-3)], weight_decay=0.0)
    before = p.data.copy()
    opt.step()
    np.testing.assert_array_equal(p.data, before)


def test_scalar_hand_computed_step():
    p = Tensor(np.array([1.0]), requires_grad=True)
    p.grad = np.array([0.5])
    lr, b1, b2, eps, wd = 0.1, 0.9, 0.999, 1e-8, 0.01
    opt = AdamW([({"p": p}, lr)], betas=(b1, b2), eps=eps, weight_decay=wd)
    opt.step()

    m = (1 - b1) * 0.5
    v = (1 - b2) * 0.25
    mhat = m / (1 - b1)
    vhat = v / (1 - b2)
    expected = 1.0 - lr * (mhat / (math.sqrt(vhat) + eps) + wd * 1.0)
    np.testing.assert_allclose(p.data, [expected], rtol=1e-15)


def test_backbone_and_other_groups_get_their_rates():
    backbone = Tensor(np.array([0.0]), requires_grad=True)
    other = Tensor(np.array([0.0]), requires_grad=True)
    backbone.grad = np.array([1.0])
    other.grad = np.array([1.0])
    opt = AdamW([({"b": backbone}, 5e-6), ({"o": other}, 5e-5)], weight_decay=0.0)
    opt.step()
    # first AdamW step moves each weight by ~lr (mhat/sqrt(vhat) == 1)
    np.testing.assert_allclose(-backbone.data, [5e-6], rtol=1e-6)
    np.testing.assert_allclose(-other.data, [5e-5], rtol=1e-6)


def test_moments_persist_between_steps():
    p = Tensor(np.array([0.0]), requires_grad=True)
    opt = AdamW([({"p": p}, 0.1)], weight_decay=0.0)
    p.grad = np.array([1.0])
    opt.step()
    first = p.data.copy()
    opt.zero_grad()
    # no new gradient: momentum keeps moving the weight
    opt.step()
    assert p.data[0] < first[0] < 0.0


def test_nonpositive_lr_rejected():
    p = Tensor(np.array([0.0]), requires_grad=True)
    with pytest.raises(ParameterError):
        AdamW([({"p": p}, 0.0)])
    with pytest.raises(ParameterError):
        AdamW([({"p": p}, -1e-3)])
