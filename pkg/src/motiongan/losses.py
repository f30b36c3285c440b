"""Training objectives.

Supervised terms sum an L2 norm per frame, where the norm is taken over the
whole stacked residual of that frame (all joints together). Batched inputs
carry a leading sequence axis; the loss is then the per-sequence value
averaged over the batch, and an optional per-sequence ``mask`` zeroes the
contribution of sequences that lack that kind of label.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .tensor import Tensor


@dataclass
class LossWeights:
    lambda_2d: float = 300.0
    lambda_3d: float = 300.0
    lambda_beta: float = 0.06
    lambda_theta: float = 60.0
    lambda_adv: float = 2.0
    lambda_mposer: float = 1.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value >= 0:
                raise ValueError(f"{name} must be nonnegative, got {value}")


def _pair(pred, gt, name, trailing):
    pred, gt = T.as_tensor(pred), T.as_tensor(gt)
    if pred.shape != gt.shape:
        raise DimensionError(f"{name}: prediction {pred.shape} vs target {gt.shape}")
    if pred.ndim not in (trailing, trailing + 1):
        raise DimensionError(f"{name}: unexpected rank for shape {pred.shape}")
    return pred, gt


def _batch_mean(per_seq, mask):
    """per_seq: (B,) tensor. Mean over the batch with masked sequences zeroed."""
    b = per_seq.shape[0]
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64).reshape(b)
        per_seq = per_seq * Tensor(mask)
    return T.tsum(per_seq) / float(b)


def _frame_norm_sum(residual, frame_axes):
    """Sum over frames of the norm of each frame's stacked residual."""
    lead = residual.shape[:frame_axes]
    flat = residual.reshape(*lead, -1)
    return T.tsum(T.l2norm(flat, axis=-1), axis=-1)


def loss_3d(x_pred, x_gt, mask=None):
    """Sum over frames of ``||X_t - X_hat_t||``; inputs (T, J, 3) or (B, T, J, 3)."""
    pred, gt = _pair(x_pred, x_gt, "loss_3d", 3)
    per = _frame_norm_sum(pred - gt, pred.ndim - 2)
    return per if pred.ndim == 3 else _batch_mean(per, mask)


def loss_2d(x_pred, x_gt, vis=None, mask=None):
    """As :func:`loss_3d` for 2D keypoints; joints with ``vis == 0`` are ignored."""
    pred, gt = _pair(x_pred, x_gt, "loss_2d", 3)
    residual = pred - gt
    if vis is not None:
        vis = np.asarray(vis, dtype=np.float64)
        if vis.shape != pred.shape[:-1]:
            raise DimensionError(f"loss_2d: visibility {vis.shape} vs keypoints {pred.shape}")
        residual = residual * Tensor(np.repeat(vis[..., None], pred.shape[-1], axis=-1))
    per = _frame_norm_sum(residual, pred.ndim - 2)
    return per if pred.ndim == 3 else _batch_mean(per, mask)


def loss_smpl(theta_pred, theta_gt, beta_pred, beta_gt, lambda_beta=0.06, lambda_theta=60.0,
              mask=None):
    """``lambda_beta * ||beta - beta_hat|| + lambda_theta * sum_t ||theta_t - theta_hat_t||``.

    Pose inputs are (T, D) or (B, T, D) for any per-frame pose encoding D;
    shape inputs are (10,) or (B, 10).
    """
    tp, tg = _pair(theta_pred, theta_gt, "loss_smpl(theta)", 2)
    bp, bg = _pair(beta_pred, beta_gt, "loss_smpl(beta)", 1)
    if (tp.ndim == 3) != (bp.ndim == 2) or (tp.ndim == 3 and tp.shape[0] != bp.shape[0]):
        raise DimensionError(f"loss_smpl: pose batch {tp.shape} vs shape batch {bp.shape}")
    pose_term = T.tsum(T.l2norm(tp - tg, axis=-1), axis=-1)
    shape_term = T.l2norm(bp - bg, axis=-1)
    per = lambda_beta * shape_term + lambda_theta * pose_term
    return per if tp.ndim == 2 else _batch_mean(per, mask)


def _check_prob(d, name):
    d = T.as_tensor(d)
    if np.any(d.data < 0.0) or np.any(d.data > 1.0) or not np.all(np.isfinite(d.data)):
        raise ValueError(f"{name}: discriminator outputs must lie in [0, 1]")
    return d.reshape(-1)


def loss_adv_generator(d_fake):
    """Mean over the batch of ``(D(fake) - 1)^2``."""
    d = _check_prob(d_fake, "loss_adv_generator")
    return T.mean(T.square(d - 1.0))


def loss_discriminator(d_real, d_fake):
    """Mean of ``(D(real) - 1)^2`` plus mean of ``D(fake)^2``."""
    r = _check_prob(d_real, "loss_discriminator")
    f = _check_prob(d_fake, "loss_discriminator")
    return T.mean(T.square(r - 1.0)) + T.mean(T.square(f))


def loss_mposer_prior(z):
    """Norm of the stacked latent sequence; (T, 32) or batched (B, T, 32)."""
    z = T.as_tensor(z)
    if z.ndim == 3:
        return T.mean(T.l2norm(z.reshape(z.shape[0], -1), axis=1))
    return T.l2norm(z)


def kl_standard_normal(mu, logsigma):
    """KL(N(mu, sigma^2) || N(0, 1)) summed over all entries."""
    mu, logsigma = T.as_tensor(mu), T.as_tensor(logsigma)
    return 0.5 * T.tsum(T.square(mu) + T.exp(2.0 * logsigma) - 1.0 - 2.0 * logsigma)


TERMS = ("3d", "2d", "smpl", "adv", "mposer")


def total_generator_loss(parts, weights, available=None):
    """Weighted sum of the available loss terms.

    ``parts`` maps term names (``3d``, ``2d``, ``smpl``, ``adv``, ``mposer``)
    to scalar losses; ``smpl`` already carries its own shape and pose weights.
    Terms flagged unavailable, or absent, are skipped entirely so they carry no
    gradient.
    """
    factor = {"3d": weights.lambda_3d, "2d": weights.lambda_2d, "smpl": 1.0,
              "adv": weights.lambda_adv, "mposer": weights.lambda_mposer}
    total = Tensor(0.0)
    for name, value in parts.items():
        if name not in factor:
            raise KeyError(f"unknown loss term {name!r}")
        if value is None or (available is not None and not available.get(name, False)):
            continue
        total = total + factor[name] * T.as_tensor(value).reshape(())
    return total
