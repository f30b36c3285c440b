import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from motiongan import tensor as T
from motiongan.errors import DimensionError
from motiongan.gradcheck import grad_check
from motiongan.losses import (LossWeights, kl_standard_normal, loss_2d, loss_3d,
                              loss_adv_generator, loss_discriminator, loss_mposer_prior, loss_smpl,
                              total_generator_loss)
from motiongan.tensor import Tensor, parameter

probs = arrays(np.float64, 4, elements=st.floats(0, 1, allow_nan=False))


def test_default_loss_weights():
    w = LossWeights()
    assert (w.lambda_2d, w.lambda_3d, w.lambda_beta, w.lambda_theta, w.lambda_adv) == \
        (300.0, 300.0, 0.06, 60.0, 2.0)
    with pytest.raises(ValueError):
        LossWeights(lambda_adv=-1.0)


def test_loss_3d_examples(rng):
    x = rng.normal(size=(2, 3, 3))
    assert loss_3d(Tensor(x), Tensor(x)).item() == 0.0
    gt = np.zeros((1, 1, 3))
    assert loss_3d(Tensor(gt + [3, 4, 0]), Tensor(gt)).item() == 5.0
    y = x + rng.normal(size=x.shape)
    assert abs(loss_3d(Tensor(x + 2 * (y - x)), Tensor(x)).item()
               - 2 * loss_3d(Tensor(y), Tensor(x)).item()) <= 1e-12


def test_loss_3d_stacks_joints_per_frame():
    # one frame, two joints off by (3,0,0) and (4,0,0): stacked norm 5, not 3 + 4
    res = np.array([[[3.0, 0, 0], [4.0, 0, 0]]])
    assert loss_3d(Tensor(res), Tensor(np.zeros_like(res))).item() == 5.0


def test_loss_3d_shape_mismatch():
    with pytest.raises(DimensionError):
        loss_3d(Tensor(np.zeros((2, 3, 3))), Tensor(np.zeros((2, 4, 3))))


def test_loss_2d_examples(rng):
    x = rng.normal(size=(2, 3, 2))
    assert loss_2d(Tensor(x), Tensor(x), np.ones((2, 3))).item() == 0.0
    gt = np.zeros((1, 2, 2))
    pred = gt.copy()
    pred[0, 0] = [0, 2]
    pred[0, 1] = [7, 7]
    assert loss_2d(Tensor(pred), Tensor(gt), np.array([[1, 0]])).item() == 2.0
    assert loss_2d(Tensor(x), Tensor(x + 5), np.zeros((2, 3))).item() == 0.0


def test_loss_smpl_examples(rng):
    th, be = rng.normal(size=(2, 72)), rng.normal(size=10)
    assert loss_smpl(Tensor(th), Tensor(th), Tensor(be), Tensor(be)).item() == 0.0
    unit = np.eye(10)[3]
    assert loss_smpl(Tensor(th), Tensor(th), Tensor(be + unit), Tensor(be)).item() == 0.06
    off = np.zeros((2, 72))
    off[:, 5] = 1.0
    assert loss_smpl(Tensor(th + off), Tensor(th), Tensor(be), Tensor(be)).item() == 120.0


def test_adversarial_examples():
    assert loss_adv_generator(Tensor([1.0])).item() == 0.0
    assert loss_adv_generator(Tensor([0.0])).item() == 1.0
    assert loss_adv_generator(Tensor([0.5])).item() == 0.25
    assert loss_discriminator(Tensor([1.0]), Tensor([0.0])).item() == 0.0
    assert loss_discriminator(Tensor([0.0]), Tensor([1.0])).item() == 2.0
    assert loss_discriminator(Tensor([0.5]), Tensor([0.5])).item() == 0.5
    with pytest.raises(ValueError):
        loss_adv_generator(Tensor([1.5]))
    with pytest.raises(ValueError):
        loss_discriminator(Tensor([0.5]), Tensor([-0.1]))


@given(probs, probs)
def test_discriminator_role_symmetry(r, f):
    a = loss_discriminator(Tensor(r), Tensor(f)).item()
    b = loss_discriminator(Tensor(1 - f), Tensor(1 - r)).item()
    assert abs(a - b) <= 1e-12 and a >= 0


def test_mposer_prior_examples(rng):
    assert loss_mposer_prior(Tensor(np.zeros((4, 32)))).item() == 0.0
    z = np.zeros((1, 32))
    z[0, :2] = [3, 4]
    assert loss_mposer_prior(Tensor(z)).item() == 5.0
    z = rng.normal(size=(3, 32))
    assert abs(loss_mposer_prior(Tensor(-2.5 * z)).item()
               - 2.5 * loss_mposer_prior(Tensor(z)).item()) <= 1e-12


def test_kl_matching_prior_is_zero():
    assert kl_standard_normal(Tensor(np.zeros((3, 32))), Tensor(np.zeros((3, 32)))).item() == 0.0


def test_total_loss_examples():
    w = LossWeights()
    zero = {k: Tensor(0.0) for k in ("3d", "2d", "smpl", "adv")}
    assert total_generator_loss(zero, w).item() == 0.0
    parts = {"3d": Tensor(9.0), "2d": Tensor(7.0), "adv": Tensor(0.25)}
    assert total_generator_loss(parts, w, {"adv": True}).item() == 0.5


def test_disabled_term_has_no_gradient(rng):
    x = parameter(rng.normal(size=(2, 3, 3)))
    d = parameter(np.array([0.3, 0.6]))
    loss = total_generator_loss({"3d": loss_3d(x, Tensor(np.zeros((2, 3, 3)))),
                                 "adv": loss_adv_generator(d)}, LossWeights(),
                                {"3d": False, "adv": True})
    loss.backward()
    assert x.grad is None or not x.grad.any()
    assert d.grad.any()


@given(arrays(np.float64, (2, 3, 3), elements=st.floats(-3, 3, allow_nan=False)))
def test_losses_nonnegative(x):
    assert loss_3d(Tensor(x), Tensor(np.zeros_like(x))).item() >= 0
    assert loss_mposer_prior(Tensor(x.reshape(2, 9))).item() >= 0


def test_loss_gradients(rng):
    gt3 = Tensor(rng.normal(size=(2, 4, 3)))
    gt2 = Tensor(rng.normal(size=(2, 4, 2)))
    vis = (rng.uniform(size=(2, 4)) > 0.3).astype(float)
    assert grad_check(lambda x: loss_3d(x, gt3), rng.normal(size=(2, 4, 3))) <= 1e-4
    assert grad_check(lambda x: loss_2d(x, gt2, vis), rng.normal(size=(2, 4, 2))) <= 1e-4
    th, be = Tensor(rng.normal(size=(2, 72))), Tensor(rng.normal(size=10))
    assert grad_check(lambda x: loss_smpl(x, th, Tensor(be.data + 1), be),
                      rng.normal(size=(2, 72))) <= 1e-4
    assert grad_check(loss_adv_generator, rng.uniform(0.1, 0.9, 4)) <= 1e-4
    assert grad_check(lambda d: loss_discriminator(d, Tensor([0.2, 0.4])),
                      rng.uniform(0.1, 0.9, 3)) <= 1e-4
    assert grad_check(loss_mposer_prior, rng.normal(size=(3, 32))) <= 1e-4


def test_batched_masks(rng):
    pred, gt = rng.normal(size=(3, 4, 5, 3)), rng.normal(size=(3, 4, 5, 3))
    per = [loss_3d(Tensor(pred[i]), Tensor(gt[i])).item() for i in range(3)]
    got = loss_3d(Tensor(pred), Tensor(gt), mask=np.array([1.0, 0.0, 1.0])).item()
    assert abs(got - (per[0] + per[2]) / 3) <= 1e-12
