"""Learnable architectures: GRU stacks, the temporal generator, the motion
discriminator and the MPoser sequential VAE.

Sequences are batched tensors of shape (B, T, F).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .body import NUM_BETAS, NUM_JOINTS, POSE_DIM
from .errors import DimensionError
from .rotations import axis_angle_to_rot6d, rot6d_to_rotmat, rotmat_to_axis_angle, rotmat_to_rot6d
from .tensor import Tensor, parameter

ROT6D_DIM = NUM_JOINTS * 6
INTERNAL_DIM = ROT6D_DIM + NUM_BETAS + 3      # 157
MOTION_DIM = ROT6D_DIM + NUM_BETAS            # discriminator input per frame
LATENT_DIM = 32


class Module:
    """Parameter container. Parameters are discovered from attributes in
    definition order, which fixes their names for checkpoints."""

    def parameters(self, prefix=""):
        out = {}
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out[key] = value
            elif isinstance(value, Module):
                out.update(value.parameters(key + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.parameters(f"{key}.{i}."))
        return out

    def load_arrays(self, arrays, prefix=""):
        for name, p in self.parameters(prefix).items():
            src = np.asarray(arrays[name], dtype=np.float64)
            if src.shape != p.shape:
                raise DimensionError(f"parameter {name}: checkpoint shape {src.shape}, "
                                     f"model shape {p.shape}")
            p.data[...] = src


class Linear(Module):
    def __init__(self, n_in, n_out, rng, gain=1.0):
        bound = gain * np.sqrt(6.0 / (n_in + n_out))
        self.weight = parameter(rng.uniform(-bound, bound, size=(n_in, n_out)))
        self.bias = parameter(np.zeros(n_out))

    def __call__(self, x):
        if x.ndim != 2:
            lead = x.shape[:-1]
            return self(x.reshape(-1, x.shape[-1])).reshape(*lead, self.bias.shape[0])
        y = T.matmul(x, self.weight)
        return y + T.broadcast_to(self.bias.reshape(1, -1), y.shape)


# -- GRU ---------------------------------------------------------------------------

class GRULayer(Module):
    """Gates ordered [reset, update, candidate] along the 3H axis."""

    def __init__(self, n_in, hidden, rng):
        bound = 1.0 / np.sqrt(hidden)
        self.w_in = parameter(rng.uniform(-bound, bound, size=(n_in, 3 * hidden)))
        self.w_hid = parameter(rng.uniform(-bound, bound, size=(hidden, 3 * hidden)))
        self.b_in = parameter(rng.uniform(-bound, bound, size=3 * hidden))
        self.b_hid = parameter(rng.uniform(-bound, bound, size=3 * hidden))
        self.hidden = hidden

    def input_projection(self, x):
        y = T.matmul(x, self.w_in)
        return y + T.broadcast_to(self.b_in.reshape(1, -1), y.shape)

    def step(self, xi, h):
        """One update given the precomputed input projection ``xi`` (B, 3H)."""
        hdim = self.hidden
        gh = T.matmul(h, self.w_hid)
        gh = gh + T.broadcast_to(self.b_hid.reshape(1, -1), gh.shape)
        rz = T.sigmoid(xi[:, :2 * hdim] + gh[:, :2 * hdim])
        r, z = rz[:, :hdim], rz[:, hdim:]
        n = T.tanh(xi[:, 2 * hdim:] + r * gh[:, 2 * hdim:])
        return n + z * (h - n)


def gru_cell(x, h, layer):
    """h' = (1 - z) * n + z * h for a single (B, in) input and (B, H) state."""
    x, h = T.as_tensor(x), T.as_tensor(h)
    squeeze = x.ndim == 1
    if squeeze:
        x, h = x.reshape(1, -1), h.reshape(1, -1)
    if x.shape[1] != layer.w_in.shape[0] or h.shape[1] != layer.hidden or x.shape[0] != h.shape[0]:
        raise DimensionError(f"gru_cell: input {x.shape} / state {h.shape} do not fit a layer "
                             f"with input size {layer.w_in.shape[0]} and hidden {layer.hidden}")
    out = layer.step(layer.input_projection(x), h)
    return out.reshape(-1) if squeeze else out


class GRU(Module):
    def __init__(self, n_in, hidden, num_layers, rng, bidirectional=False):
        self.hidden = hidden
        self.bidirectional = bidirectional
        self.n_in = n_in
        width = 2 * hidden if bidirectional else hidden
        self.forward_layers = [GRULayer(n_in if i == 0 else width, hidden, rng)
                               for i in range(num_layers)]
        self.backward_layers = [GRULayer(n_in if i == 0 else width, hidden, rng)
                                for i in range(num_layers)] if bidirectional else []

    @property
    def output_size(self):
        return 2 * self.hidden if self.bidirectional else self.hidden

    def __call__(self, seq):
        return gru_stack(seq, self)


def _run_direction(seq, layer, reverse):
    b, t, _ = seq.shape
    xi = layer.input_projection(seq.reshape(b * t, -1)).reshape(b, t, -1)
    h = Tensor(np.zeros((b, layer.hidden)))
    outs = [None] * t
    order = range(t - 1, -1, -1) if reverse else range(t)
    for i in order:
        h = layer.step(xi[:, i, :], h)
        outs[i] = h
    return T.stack(outs, axis=1)


def gru_stack(seq, gru):
    """Per-frame hidden states of a (possibly bidirectional) multi-layer GRU.

    ``seq`` is (B, T, F) or (T, F); returns (B, T, H) or (B, T, 2H), matching
    the input's batching.
    """
    seq = T.as_tensor(seq)
    unbatched = seq.ndim == 2
    if unbatched:
        seq = seq.reshape(1, *seq.shape)
    if seq.ndim != 3 or seq.shape[1] < 1:
        raise DimensionError(f"gru_stack: need a non-empty (B, T, F) sequence, got {seq.shape}")
    if seq.shape[2] != gru.n_in:
        raise DimensionError(f"gru_stack: feature size {seq.shape[2]} != GRU input {gru.n_in}")
    x = seq
    for i, fwd in enumerate(gru.forward_layers):
        out = _run_direction(x, fwd, reverse=False)
        if gru.bidirectional:
            out = T.concat([out, _run_direction(x, gru.backward_layers[i], reverse=True)], axis=2)
        x = out
    return x[0] if unbatched else x


# -- pooling -----------------------------------------------------------------------------

class AttentionMLP(Module):
    """Scores each hidden state: tanh layers then a scalar output."""

    def __init__(self, hidden, widths, rng, dropout=0.1):
        sizes = [hidden, *widths]
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]
        self.out = Linear(sizes[-1], 1, rng)
        self.dropout = dropout

    def __call__(self, h, rng=None):
        x = h
        for layer in self.layers:
            x = T.tanh(layer(x))
            if rng is not None and self.dropout > 0:
                keep = (rng.random(x.shape) >= self.dropout) / (1.0 - self.dropout)
                x = x * Tensor(keep)
        return self.out(x)


def attention_pool(h, attn, rng=None):
    """Softmax-weighted combination of hidden states.

    ``h`` is (B, T, H) or (T, H). ``attn`` scores frames; either an
    :class:`AttentionMLP` or any callable mapping (N, H) -> (N, 1). Returns the
    pooled representation and the frame weights. Passing ``rng`` enables
    dropout inside the MLP.
    """
    h = T.as_tensor(h)
    unbatched = h.ndim == 2
    if unbatched:
        h = h.reshape(1, *h.shape)
    b, t, hd = h.shape
    if isinstance(attn, AttentionMLP):
        scores = attn(h.reshape(b * t, hd), rng=rng)
    else:
        scores = T.as_tensor(attn(h.reshape(b * t, hd)))
    weights = T.softmax(scores.reshape(b, t), axis=1)
    pooled = T.matmul(weights.reshape(b, 1, t), h).reshape(b, hd)
    if unbatched:
        return pooled[0], weights[0]
    return pooled, weights


def static_pool(h):
    """Mean over time concatenated with max over time: (B, T, H) -> (B, 2H)."""
    h = T.as_tensor(h)
    unbatched = h.ndim == 2
    if unbatched:
        h = h.reshape(1, *h.shape)
    out = T.concat([T.mean(h, axis=1), T.tmax(h, axis=1)], axis=1)
    return out[0] if unbatched else out


# -- motion features -------------------------------------------------------------------

def motion_features(theta, beta=None):
    """Per-frame discriminator / prior input from axis-angle poses.

    theta: (B, T, 72) array; beta: (B, 10) or (B, T, 10) array or None.
    Returns a (B, T, 144) or (B, T, 154) tensor of 6D rotations (+ shape).
    """
    theta = np.asarray(theta, dtype=np.float64)
    b, t = theta.shape[:2]
    r6 = axis_angle_to_rot6d(theta.reshape(b, t, NUM_JOINTS, 3)).reshape(b, t, ROT6D_DIM)
    if beta is None:
        return Tensor(r6)
    beta = np.asarray(beta, dtype=np.float64)
    if beta.ndim == 2:
        beta = np.broadcast_to(beta[:, None, :], (b, t, NUM_BETAS))
    return Tensor(np.concatenate([r6, beta], axis=2))


# -- generator --------------------------------------------------------------------------

def mean_internal_params():
    """Rest-pose rotations in 6D, zero shape, unit scale and zero translation."""
    r6 = np.tile([1.0, 0.0, 0.0, 0.0, 1.0, 0.0], NUM_JOINTS)
    return np.concatenate([r6, np.zeros(NUM_BETAS), [1.0, 0.0, 0.0]])


@dataclass
class GeneratorOutput:
    rot6d: Tensor        # (B, T, 144) canonical 6D (first two rotation columns)
    rotmats: Tensor      # (B, T, 24, 3, 3)
    beta_frames: Tensor  # (B, T, 10) before pooling
    beta: Tensor         # (B, 10) averaged over time
    cam: Tensor          # (B, T, 3)

    def motion_features(self, with_shape=True):
        if not with_shape:
            return self.rot6d
        b, t = self.rot6d.shape[:2]
        beta = T.broadcast_to(self.beta.reshape(b, 1, NUM_BETAS), (b, t, NUM_BETAS))
        return T.concat([self.rot6d, beta], axis=2)

    def to_arrays(self):
        """Axis-angle theta (B, T, 72), pooled beta (B, 10) and cam (B, T, 3) as arrays."""
        b, t = self.rot6d.shape[:2]
        theta = rotmat_to_axis_angle(self.rotmats.data).reshape(b, t, POSE_DIM)
        return theta, self.beta.data.copy(), self.cam.data.copy()


class Regressor(Module):
    """Iterative-feedback regressor over the 157-dim internal parameters."""

    def __init__(self, n_feat, hidden, rng, iterations=3):
        self.fc1 = Linear(n_feat + INTERNAL_DIM, hidden, rng)
        self.fc2 = Linear(hidden, hidden, rng)
        self.out = Linear(hidden, INTERNAL_DIM, rng, gain=0.01)
        self.iterations = iterations
        self.mean_params = mean_internal_params()

    def __call__(self, g):
        n = g.shape[0]
        params = Tensor(np.broadcast_to(self.mean_params, (n, INTERNAL_DIM)).copy())
        for _ in range(self.iterations):
            x = T.concat([g, params], axis=1)
            x = T.tanh(self.fc1(x))
            x = T.tanh(self.fc2(x))
            params = params + self.out(x)
        return params


class Generator(Module):
    def __init__(self, n_feat=32, hidden=64, num_layers=2, regressor_hidden=64, iterations=3,
                 bidirectional=False, residual=True, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.n_feat = n_feat
        self.gru = GRU(n_feat, hidden, num_layers, rng, bidirectional=bidirectional)
        self.project = Linear(self.gru.output_size, n_feat, rng)
        self.regressor = Regressor(n_feat, regressor_hidden, rng, iterations)
        self.residual = residual

    def __call__(self, features):
        return generator_forward(features, self)


def generator_forward(features, gen):
    features = T.as_tensor(features)
    if features.ndim != 3 or features.shape[2] != gen.n_feat:
        raise DimensionError(f"generator: expected (B, T, {gen.n_feat}) features, "
                             f"got {features.shape}")
    b, t, f = features.shape
    g = gen.project(gru_stack(features, gen.gru).reshape(b * t, -1))
    if gen.residual:
        g = g + features.reshape(b * t, f)
    params = gen.regressor(g)
    raw6d = params[:, :ROT6D_DIM].reshape(b * t * NUM_JOINTS, 6)
    rotmats = rot6d_to_rotmat(raw6d)
    rot6d = rotmat_to_rot6d(rotmats).reshape(b, t, ROT6D_DIM)
    beta_frames = params[:, ROT6D_DIM:ROT6D_DIM + NUM_BETAS].reshape(b, t, NUM_BETAS)
    cam = params[:, ROT6D_DIM + NUM_BETAS:].reshape(b, t, 3)
    return GeneratorOutput(rot6d=rot6d, rotmats=rotmats.reshape(b, t, NUM_JOINTS, 3, 3),
                           beta_frames=beta_frames, beta=T.mean(beta_frames, axis=1), cam=cam)


# -- discriminator ----------------------------------------------------------------------------

class MotionDiscriminator(Module):
    def __init__(self, n_in=MOTION_DIM, hidden=64, num_layers=2, pooling="attention",
                 attn_widths=(64, 64), dropout=0.1, rng=None):
        if pooling not in ("attention", "static"):
            raise ValueError(f"unknown pooling {pooling!r}")
        rng = np.random.default_rng(0) if rng is None else rng
        # fixed input standardization (not trained); identity until fitted
        self.input_mean = np.zeros(n_in)
        self.input_scale = np.ones(n_in)
        self.gru = GRU(n_in, hidden, num_layers, rng)
        self.pooling = pooling
        if pooling == "attention":
            self.attention = AttentionMLP(hidden, attn_widths, rng, dropout)
            self.fc = Linear(hidden, 1, rng)
        else:
            self.fc = Linear(2 * hidden, 1, rng)

    def __call__(self, motion, rng=None):
        return discriminator_forward(motion, self, rng=rng)

    def fit_input_normalization(self, motion, floor=0.05):
        """Standardize inputs with per-dimension statistics of real ``motion`` (N, T, D).

        The floor keeps near-constant dimensions from being blown up.
        """
        flat = np.asarray(motion, dtype=np.float64).reshape(-1, self.input_mean.shape[0])
        self.input_mean = flat.mean(axis=0)
        self.input_scale = np.maximum(flat.std(axis=0), floor)
        return self


def discriminator_forward(motion, disc, rng=None):
    """Probability that each sequence in (B, T, D) ``motion`` is real; shape (B,).

    ``rng`` switches on training-mode dropout in the attention MLP.
    """
    motion = T.as_tensor(motion)
    if motion.ndim == 3 and motion.shape[2] == disc.input_mean.shape[0]:
        shift = T.broadcast_to(Tensor(disc.input_mean.reshape(1, 1, -1)), motion.shape)
        gain = T.broadcast_to(Tensor(1.0 / disc.input_scale.reshape(1, 1, -1)), motion.shape)
        motion = (motion - shift) * gain
    h = gru_stack(motion, disc.gru)
    if disc.pooling == "attention":
        r, _ = attention_pool(h, disc.attention, rng=rng)
    else:
        r = static_pool(h)
    return T.sigmoid(disc.fc(r)).reshape(-1)


# -- MPoser ------------------------------------------------------------------------------------

class MPoser(Module):
    """Sequential VAE: GRU encoder to per-step Gaussian latents, GRU decoder
    mapping each latent step back to a 72-dim axis-angle pose."""

    def __init__(self, n_in=ROT6D_DIM, hidden=64, num_layers=1, latent=LATENT_DIM, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        self.encoder = GRU(n_in, hidden, num_layers, rng)
        self.to_mu = Linear(hidden, latent, rng)
        self.to_logsigma = Linear(hidden, latent, rng, gain=0.1)
        self.decoder = GRU(latent, hidden, num_layers, rng)
        self.to_pose = Linear(hidden, POSE_DIM, rng)
        self.latent = latent


def mposer_encode(motion, mp):
    """(B, T, 144) motion features -> per-step (mu, log sigma), each (B, T, 32)."""
    h = gru_stack(motion, mp.encoder)
    return mp.to_mu(h), mp.to_logsigma(h)


def mposer_decode(z, mp):
    """(B, T, 32) latents -> (B, T, 72) axis-angle poses."""
    return mp.to_pose(gru_stack(z, mp.decoder))
