"""Adversarial training loop, MPoser training, evaluation and ablations."""
from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .body import NUM_BETAS, NUM_JOINTS, make_template, pose_body, project_weak_perspective, \
    regress_joints, skin_rotmats
from .config import TrainConfig
from .errors import DimensionError, NumericFailure, ValidationError
from .features import AffineFeatureProvider, IdentityFeatureProvider
from .losses import (kl_standard_normal, loss_2d, loss_3d, loss_adv_generator, loss_discriminator, loss_mposer_prior,
                     loss_smpl, total_generator_loss)
from .metrics import aggregate_reports, evaluate_sequence
from .motion import MotionFamily, corrupt_motion, gen_real_motion, stack_sequences
from .nets import (ROT6D_DIM, Generator, MotionDiscriminator, MPoser, discriminator_forward,
                   motion_features, mposer_decode, mposer_encode)
from .optim import Adam
from .rotations import axis_angle_to_rotmat
from .seeding import derive_rng, derive_seed
from .tensor import Tensor

log = logging.getLogger(__name__)

MM = 1000.0
_FK_CHUNK = 4096


# -- data --------------------------------------------------------------------------------

@dataclass
class MotionData:
    """Stacked sequences with derived supervision, all arrays with leading (N, T)."""

    theta: np.ndarray       # (N, T, 72)
    beta: np.ndarray        # (N, 10)
    cam: np.ndarray         # (N, T, 3)
    seeds: np.ndarray       # (N,)
    features: np.ndarray    # (N, T, F)
    joints: np.ndarray      # (N, T, J, 3) regressed from posed vertices, metres
    vertices: np.ndarray    # (N, T, V, 3)
    keypoints: np.ndarray   # (N, T, J, 2)
    rotmats: np.ndarray     # (N, T, 24 * 9)
    has3d: np.ndarray       # (N,) bool

    def __len__(self):
        return self.theta.shape[0]

    @property
    def seq_len(self):
        return self.theta.shape[1]


def pose_arrays(rotmats, beta, tmpl):
    """Joints (W @ vertices) and vertices for (N, T, 24, 3, 3) rotations and (N, 10) shapes."""
    n, t = rotmats.shape[:2]
    flat_r = rotmats.reshape(n * t, NUM_JOINTS, 3, 3)
    flat_b = np.repeat(beta, t, axis=0)
    verts = np.empty((n * t, tmpl.num_vertices, 3))
    for s in range(0, n * t, _FK_CHUNK):
        _, v = skin_rotmats(Tensor(flat_r[s:s + _FK_CHUNK]), Tensor(flat_b[s:s + _FK_CHUNK]), tmpl)
        verts[s:s + _FK_CHUNK] = v.data
    joints = regress_joints(verts, tmpl.joint_regressor)
    return joints.reshape(n, t, -1, 3), verts.reshape(n, t, -1, 3)


def prepare_data(seqs, tmpl, provider, label_fraction=1.0, seed=0):
    theta, beta, cam = stack_sequences(seqs)
    n, t = theta.shape[:2]
    seeds = np.array([int(s.meta.get("seed", i)) for i, s in enumerate(seqs)], dtype=np.uint64)
    rot = axis_angle_to_rotmat(theta.reshape(n, t, NUM_JOINTS, 3))
    joints, verts = pose_arrays(rot, beta, tmpl)
    keypoints = project_weak_perspective(joints, cam)
    n_labelled = int(round(label_fraction * n))
    has3d = np.zeros(n, dtype=bool)
    has3d[derive_rng(seed, "labelled").permutation(n)[:n_labelled]] = True
    return MotionData(theta=theta, beta=beta, cam=cam, seeds=seeds,
                      features=provider(theta, beta, cam, seeds), joints=joints, vertices=verts,
                      keypoints=keypoints, rotmats=rot.reshape(n, t, NUM_JOINTS * 9), has3d=has3d)


def make_provider(config):
    return AffineFeatureProvider(config.n_feat, config.feature_noise,
                                 seed=derive_seed(config.seed, "provider"))


def real_motion_pool(config, family=None):
    """Real motions for the discriminator, disjoint from the paired corpus."""
    family = MotionFamily() if family is None else family
    return [gen_real_motion(family, config.seq_len, derive_seed(config.seed, "real-pool", i),
                            fps=config.fps) for i in range(config.n_real_pool)]


# -- models ---------------------------------------------------------------------------------

@dataclass
class Models:
    generator: Generator
    discriminator: MotionDiscriminator = None
    mposer: MPoser = None
    gen_opt: Adam = None
    disc_opt: Adam = None
    step: int = 0
    epoch: int = 0
    best_mpjpe: float = np.inf   # plateau tracking for the lr schedule
    stale_epochs: int = 0


def build_models(config, real_feats=None):
    gen = Generator(config.n_feat, config.hidden, config.gen_layers, config.regressor_hidden,
                    config.iterations, bidirectional=config.bidirectional,
                    rng=derive_rng(config.seed, "init-generator"))
    models = Models(gen, gen_opt=Adam(gen.parameters(), lr=config.gen_lr))
    if config.use_disc:
        models.discriminator = build_discriminator(config, real_feats)
        models.disc_opt = Adam(models.discriminator.parameters(), lr=config.disc_lr)
    if config.use_mposer:
        models.mposer = MPoser(hidden=config.mposer_hidden, num_layers=config.mposer_layers,
                               rng=derive_rng(config.seed, "init-mposer"))
    return models


def build_discriminator(config, real_feats=None):
    disc = MotionDiscriminator(hidden=config.disc_hidden, num_layers=config.disc_layers,
                               pooling=config.pooling,
                               attn_widths=(config.attn_width,) * config.attn_layers,
                               dropout=config.attn_dropout,
                               rng=derive_rng(config.seed, "init-discriminator"))
    if real_feats is not None:
        disc.fit_input_normalization(real_feats)
    return disc


# -- one step --------------------------------------------------------------------------------

@dataclass
class StepReport:
    step: int
    loss_g: float
    loss_d: float
    d_real: float
    d_fake: float
    parts: dict = field(default_factory=dict)

    def line(self):
        return (f"step={self.step} L_G={self.loss_g!r} L_DM={self.loss_d!r} "
                f"d_real={self.d_real!r} d_fake={self.d_fake!r}")


def generator_losses(out, data, idx, tmpl, config):
    """Loss terms of the generator output ``out`` against batch ``idx`` of ``data``."""
    b, t = len(idx), data.seq_len
    rot = out.rotmats.reshape(b * t, NUM_JOINTS, 3, 3)
    beta = T.broadcast_to(out.beta.reshape(b, 1, NUM_BETAS), (b, t, NUM_BETAS)).reshape(
        b * t, NUM_BETAS)
    _, verts = skin_rotmats(rot, beta, tmpl)
    joints = regress_joints(verts, tmpl.joint_regressor)
    keypoints = project_weak_perspective(joints, out.cam.reshape(b * t, 3))
    nj = tmpl.num_joints
    mask3d = data.has3d[idx].astype(np.float64)
    parts = {
        "3d": loss_3d(joints.reshape(b, t, nj, 3), Tensor(data.joints[idx]), mask=mask3d),
        "2d": loss_2d(keypoints.reshape(b, t, nj, 2), Tensor(data.keypoints[idx]),
                      vis=np.ones((b, t, nj)))
    }
    parts["smpl"] = loss_smpl(rot.reshape(b, t, NUM_JOINTS * 9), Tensor(data.rotmats[idx]),
                              out.beta, Tensor(data.beta[idx]), lambda_beta=config.lambda_beta,
                              lambda_theta=config.lambda_theta, mask=mask3d)
    return parts


def _finite_or_fail(value, what, step, batch_seed):
    if not np.isfinite(value):
        raise NumericFailure(f"non-finite {what} at step {step}; offending batch seed {batch_seed}")


def train_step(idx, data, real_feats, models, config, tmpl, batch_seed):
    """Generator update, then discriminator update on the detached fakes."""
    gen, disc = models.generator, models.discriminator
    rng = np.random.default_rng(batch_seed)
    out = gen(Tensor(data.features[idx]))
    _finite_or_fail(float(out.rotmats.data.sum() + out.cam.data.sum()), "generator output",
                    models.step, batch_seed)
    parts = generator_losses(out, data, idx, tmpl, config)
    available = {"3d": bool(data.has3d[idx].any()), "2d": True, "smpl": bool(data.has3d[idx].any())}
    d_fake_g = None
    if disc is not None and config.lambda_adv > 0:
        d_fake_g = discriminator_forward(out.motion_features(), disc, rng=rng)
        parts["adv"] = loss_adv_generator(d_fake_g)
        available["adv"] = True
    if models.mposer is not None:
        mu, _ = mposer_encode(out.rot6d, models.mposer)
        parts["mposer"] = loss_mposer_prior(mu)
        available["mposer"] = True
    loss_g = total_generator_loss(parts, config.loss_weights(), available)
    _finite_or_fail(loss_g.item(), "generator loss", models.step, batch_seed)
    models.gen_opt.zero_grad()
    loss_g.backward()
    models.gen_opt.step()

    loss_d_val = d_real_val = d_fake_val = float("nan")
    if disc is not None:
        real = Tensor(real_feats[rng.integers(0, len(real_feats), size=len(idx))])
        fake = out.motion_features().detach()
        d_real = discriminator_forward(real, disc, rng=rng)
        d_fake = discriminator_forward(fake, disc, rng=rng)
        loss_d = loss_discriminator(d_real, d_fake)
        _finite_or_fail(loss_d.item(), "discriminator loss", models.step, batch_seed)
        models.disc_opt.zero_grad()
        loss_d.backward()
        models.disc_opt.step()
        models.disc_opt.zero_grad()
        loss_d_val = loss_d.item()
        d_real_val, d_fake_val = float(d_real.data.mean()), float(d_fake.data.mean())
    if models.mposer is not None:
        for p in models.mposer.parameters().values():
            p.grad = None
    models.step += 1
    return StepReport(models.step, loss_g.item(), loss_d_val, d_real_val, d_fake_val,
                      {k: v.item() for k, v in parts.items()})


# -- prediction and evaluation ------------------------------------------------------------------

class GeneratorPredictor:
    def __init__(self, generator, chunk=64):
        self.generator = generator
        self.chunk = chunk
        self.n_feat = generator.n_feat

    def predict(self, features):
        """Rotations (N, T, 24, 3, 3) and pooled shape (N, 10)."""
        rots, betas = [], []
        for s in range(0, len(features), self.chunk):
            out = self.generator(Tensor(features[s:s + self.chunk]))
            rots.append(out.rotmats.data)
            betas.append(out.beta.data)
        return np.concatenate(rots), np.concatenate(betas)


class OraclePredictor:
    """Reads ground truth straight from identity features."""

    n_feat = NUM_JOINTS * 3 + NUM_BETAS + 3

    def predict(self, features):
        n, t = features.shape[:2]
        theta = features[..., :NUM_JOINTS * 3]
        beta = features[..., NUM_JOINTS * 3:NUM_JOINTS * 3 + NUM_BETAS].mean(axis=1)
        return axis_angle_to_rotmat(theta.reshape(n, t, NUM_JOINTS, 3)), beta


class MeanPosePredictor:
    """Always predicts the rest pose and zero shape."""

    def predict(self, features):
        n, t = features.shape[:2]
        return np.broadcast_to(np.eye(3), (n, t, NUM_JOINTS, 3, 3)).copy(), np.zeros((n, NUM_BETAS))


def evaluate(model, data, tmpl, pck_threshold=150.0, fps=None):
    """Aggregate MetricsReport (millimetres) and the per-sequence reports."""
    if data.features.shape[2] != getattr(model, "n_feat", data.features.shape[2]):
        raise DimensionError("feature size of corpus and model differ")
    rot, beta = model.predict(data.features)
    if rot.shape[:2] != data.theta.shape[:2]:
        raise DimensionError(f"prediction covers {rot.shape[:2]}, corpus {data.theta.shape[:2]}")
    joints, verts = pose_arrays(rot, beta, tmpl)
    reports = [evaluate_sequence(joints[i] * MM, data.joints[i] * MM, verts[i] * MM,
                                 data.vertices[i] * MM, pck_threshold=pck_threshold, fps=fps)
               for i in range(len(data))]
    return aggregate_reports(reports), reports


# -- MPoser ---------------------------------------------------------------------------------------

def mposer_reconstruction_error(mp, feats, theta, chunk=128):
    """Mean per-frame pose error of decode(encode mean) on held-out motions."""
    errs = []
    for s in range(0, len(feats), chunk):
        mu, _ = mposer_encode(Tensor(feats[s:s + chunk]), mp)
        rec = mposer_decode(mu, mp).data
        errs.append(np.linalg.norm(rec - theta[s:s + chunk], axis=-1).reshape(-1))
    return float(np.mean(np.concatenate(errs)))


def mean_pose_error(train_theta, theta):
    mean_pose = train_theta.reshape(-1, train_theta.shape[-1]).mean(axis=0)
    return float(np.mean(np.linalg.norm(theta - mean_pose, axis=-1)))


def train_mposer(train_seqs, heldout_seqs, config):
    """Fit MPoser as a sequential VAE. Returns the model and held-out error per epoch."""
    if not train_seqs:
        raise ValidationError("MPoser needs a nonempty corpus")
    mp = MPoser(hidden=config.mposer_hidden, num_layers=config.mposer_layers,
                rng=derive_rng(config.seed, "init-mposer"))
    opt = Adam(mp.parameters(), lr=config.mposer_lr)
    theta, _, _ = stack_sequences(train_seqs)
    feats = motion_features(theta).data
    h_theta, _, _ = stack_sequences(heldout_seqs)
    h_feats = motion_features(h_theta).data
    n, b = len(theta), min(config.batch_size, len(theta))
    curve = []
    for epoch in range(config.mposer_epochs):
        order = derive_rng(config.seed, "mposer-epoch", epoch).permutation(n)
        for k, s in enumerate(range(0, n - b + 1, b)):
            idx = order[s:s + b]
            rng = derive_rng(config.seed, "mposer-step", epoch, k)
            mu, logsigma = mposer_encode(Tensor(feats[idx]), mp)
            eps = Tensor(rng.normal(size=mu.shape))
            z = mu + T.exp(logsigma) * eps
            rec = mposer_decode(z, mp)
            recon = T.tsum(T.square(rec - Tensor(theta[idx]))) / float(b)
            loss = recon + config.mposer_kl_weight * kl_standard_normal(mu, logsigma) / float(b)
            _finite_or_fail(loss.item(), "MPoser loss", k, epoch)
            opt.zero_grad()
            loss.backward()
            opt.step()
        curve.append(mposer_reconstruction_error(mp, h_feats, h_theta))
        log.info("mposer epoch %d held-out error %.5f", epoch, curve[-1])
    for p in mp.parameters().values():
        p.grad = None
        p.requires_grad = True
    return mp, curve


# -- full training run ------------------------------------------------------------------------------

@dataclass
class TrainResult:
    models: Models
    report: object
    step_log: list
    epoch_mpjpe: list
    mposer_curve: list = None


def train(config, train_seqs, eval_seqs, tmpl=None, models=None, step_log=None, on_epoch=None):
    """Run the configured training and return the trained models and final metrics.

    ``models`` resumes from an earlier state (its step and epoch counters
    continue). ``on_epoch(models)`` is called after each epoch, e.g. for
    checkpointing.
    """
    tmpl = make_template(config.template_vertices) if tmpl is None else tmpl
    provider = make_provider(config)
    data = prepare_data(train_seqs, tmpl, provider, config.label_fraction, config.seed)
    eval_data = prepare_data(eval_seqs, tmpl, provider, 1.0, config.seed)
    if data.seq_len != config.seq_len or eval_data.seq_len != config.seq_len:
        raise ValidationError(f"corpus sequence length differs from config seq_len "
                              f"{config.seq_len}")
    pool = real_motion_pool(config)
    theta_r, beta_r, _ = stack_sequences(pool)
    real_feats = motion_features(theta_r, beta_r).data
    mposer_curve = None
    if models is None:
        models = build_models(config, real_feats)
        if config.use_mposer:
            split = max(1, len(pool) // 10)
            models.mposer, mposer_curve = train_mposer(pool[split:], pool[:split], config)
    if models.mposer is not None:
        for p in models.mposer.parameters().values():
            p.requires_grad = False
    step_log = [] if step_log is None else step_log
    predictor = GeneratorPredictor(models.generator)
    n, b = len(data), min(config.batch_size, len(data))
    epoch_mpjpe = []
    while models.epoch < config.epochs:
        epoch = models.epoch
        order = derive_rng(config.seed, "epoch", epoch).permutation(n)
        for k, s in enumerate(range(0, n - b + 1, b)):
            if config.max_steps and models.step >= config.max_steps:
                break
            rep = train_step(order[s:s + b], data, real_feats, models, config, tmpl,
                             derive_seed(config.seed, "step", epoch, k))
            step_log.append(rep.line())
        models.epoch += 1
        current, _ = evaluate(predictor, eval_data, tmpl, config.pck_threshold)
        epoch_mpjpe.append(current.mpjpe)
        log.info("epoch %d step %d mpjpe %.3f", epoch, models.step, current.mpjpe)
        if current.mpjpe < models.best_mpjpe:
            models.best_mpjpe, models.stale_epochs = current.mpjpe, 0
        else:
            models.stale_epochs += 1
            if models.stale_epochs > config.lr_patience:
                models.gen_opt.state.lr *= 0.5
                models.stale_epochs = 0
        if on_epoch is not None:
            on_epoch(models)
        if config.max_steps and models.step >= config.max_steps:
            break
    report, _ = evaluate(predictor, eval_data, tmpl, config.pck_threshold)
    return TrainResult(models, report, step_log, epoch_mpjpe, mposer_curve)


def run_ablation(configs, train_seqs, eval_seqs, tmpl=None):
    """Train and evaluate each named config on the same corpus; returns {name: report}."""
    table = {}
    for name, cfg in configs:
        table[name] = train(cfg, train_seqs, eval_seqs, tmpl).report
    return table


# -- discriminator on its own ------------------------------------------------------------------------

def _fake_set(seqs, mode, seed, sigma=0.1):
    return [corrupt_motion(s, mode, derive_seed(seed, "corrupt", mode, i), sigma=sigma)
            for i, s in enumerate(seqs)]


def discriminator_accuracy(disc, real_feats, fake_feats, chunk=128):
    correct = 0
    for feats, want_real in ((real_feats, True), (fake_feats, False)):
        for s in range(0, len(feats), chunk):
            p = discriminator_forward(Tensor(feats[s:s + chunk]), disc).data
            correct += int(np.sum((p > 0.5) == want_real))
    return correct / (len(real_feats) + len(fake_feats))


def train_discriminator_only(config, real_train, real_heldout, corruption="iid_noise", steps=500,
                             sigma=0.1):
    """Fit D_M on real motions vs corrupted copies; returns the model and held-out accuracy."""
    fakes = _fake_set(real_train, corruption, derive_seed(config.seed, "fake-train"), sigma)
    h_fakes = _fake_set(real_heldout, corruption, derive_seed(config.seed, "fake-heldout"), sigma)

    def feats(seqs):
        th, be, _ = stack_sequences(seqs)
        return motion_features(th, be).data

    rf, ff, hr, hf = feats(real_train), feats(fakes), feats(real_heldout), feats(h_fakes)
    disc = build_discriminator(config, rf)
    opt = Adam(disc.parameters(), lr=config.disc_lr)
    b = min(config.batch_size, len(rf))
    for k in range(steps):
        rng = derive_rng(config.seed, "disc-step", k)
        real = Tensor(rf[rng.integers(0, len(rf), size=b)])
        fake = Tensor(ff[rng.integers(0, len(ff), size=b)])
        loss = loss_discriminator(discriminator_forward(real, disc, rng=rng),
                                  discriminator_forward(fake, disc, rng=rng))
        opt.zero_grad()
        loss.backward()
        opt.step()
    return disc, discriminator_accuracy(disc, hr, hf)


# -- checkpoints ---------------------------------------------------------------------------------------

def save_checkpoint(path, models, config, provider=None, kind="generator"):
    arrays = {"meta/config": np.array(json.dumps(config.to_dict(), sort_keys=True)),
              "meta/kind": np.array(kind),
              "meta/step": np.array(models.step if models else 0, dtype=np.int64),
              "meta/epoch": np.array(models.epoch if models else 0, dtype=np.int64)}
    if models is not None:
        arrays["meta/best_mpjpe"] = np.array(models.best_mpjpe)
        arrays["meta/stale_epochs"] = np.array(models.stale_epochs, dtype=np.int64)
        if models.discriminator is not None:
            arrays["disc_norm/mean"] = models.discriminator.input_mean
            arrays["disc_norm/scale"] = models.discriminator.input_scale
        for prefix, module in (("gen", models.generator), ("disc", models.discriminator),
                               ("mposer", models.mposer)):
            if module is not None:
                arrays.update({f"{prefix}/{k}": p.data for k, p in module.parameters().items()})
        if models.gen_opt is not None:
            arrays.update(models.gen_opt.state_arrays("opt_gen"))
        if models.disc_opt is not None:
            arrays.update(models.disc_opt.state_arrays("opt_disc"))
    if provider is not None:
        arrays["meta/provider"] = np.array(provider.kind)
        arrays.update({f"provider/{k}": v for k, v in provider.state().items()})
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".npz")
    os.close(fd)
    try:
        np.savez(tmp, **arrays)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class Checkpoint:
    kind: str
    config: TrainConfig
    models: Models
    provider: object
    arrays: dict


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as z:
        arrays = {k: z[k] for k in z.files}
    config = TrainConfig.from_dict(json.loads(str(arrays["meta/config"])))
    kind = str(arrays["meta/kind"])
    provider = None
    if "meta/provider" in arrays:
        if str(arrays["meta/provider"]) == "identity":
            provider = IdentityFeatureProvider()
        else:
            provider = AffineFeatureProvider(
                config.n_feat, float(arrays["provider/noise"]), int(arrays["provider/seed"]),
                matrix=arrays["provider/matrix"], offset=arrays["provider/offset"])
    models = None
    if kind == "generator":
        models = build_models(config)
        models.generator.load_arrays(_strip(arrays, "gen/"))
        if models.discriminator is not None:
            models.discriminator.load_arrays(_strip(arrays, "disc/"))
            models.discriminator.input_mean = arrays["disc_norm/mean"].copy()
            models.discriminator.input_scale = arrays["disc_norm/scale"].copy()
        if models.mposer is not None:
            models.mposer.load_arrays(_strip(arrays, "mposer/"))
        models.gen_opt.load_state_arrays(arrays, "opt_gen")
        if models.disc_opt is not None:
            models.disc_opt.load_state_arrays(arrays, "opt_disc")
        models.step = int(arrays["meta/step"])
        models.epoch = int(arrays["meta/epoch"])
        models.best_mpjpe = float(arrays["meta/best_mpjpe"])
        models.stale_epochs = int(arrays["meta/stale_epochs"])
    return Checkpoint(kind, config, models, provider, arrays)


def _strip(arrays, prefix):
    return {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}


def predictor_from_checkpoint(ckpt):
    if ckpt.kind == "oracle":
        return OraclePredictor()
    return GeneratorPredictor(ckpt.models.generator)
