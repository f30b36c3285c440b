"""Synthetic motion corpus and motion sequence files.

Real motions are smooth, bounded joint-angle trajectories: every angle is a
sum of up to three harmonics of one per-sequence base frequency, so limbs move
in a coordinated way. Fakes are made by corrupting real motions.

Binary motion file layout (little endian)::

    8s   magic  b"MGMOTION"
    u16  version (1)
    u16  flags  (bit 0: camera columns present)
    u32  T      frame count
    u32  J      joint count (24)
    f64  fps
    u32  n      metadata length, then n bytes of UTF-8 JSON
    f64  T x (3J + 10 [+ 3]) frame rows: theta, beta, cam
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np

from .body import NUM_BETAS, NUM_JOINTS, POSE_DIM, BodyParams
from .errors import ParseError, ValidationError
from .seeding import derive_seed

MAGIC = b"MGMOTION"
VERSION = 1
_HEADER = struct.Struct("<8sHHIIdI")
LABELS = ("real", "fake", "generated")

LIMB_LIMIT = np.pi / 2
SPINE_LIMIT = np.pi / 6
_SPINE_JOINTS = (0, 3, 6, 9, 12, 13, 14, 15)

# default oscillation amplitude per joint and axis (radians)
_DEFAULT_AMPLITUDE = {
    0: (0.15, 0.30, 0.10), 1: (0.80, 0.20, 0.20), 2: (0.80, 0.20, 0.20),
    3: (0.10, 0.10, 0.10), 4: (0.90, 0.00, 0.00), 5: (0.90, 0.00, 0.00),
    6: (0.10, 0.10, 0.10), 7: (0.30, 0.10, 0.10), 8: (0.30, 0.10, 0.10),
    9: (0.10, 0.10, 0.10), 12: (0.10, 0.10, 0.10), 13: (0.10, 0.10, 0.10),
    14: (0.10, 0.10, 0.10), 15: (0.20, 0.20, 0.20), 16: (0.30, 0.30, 0.80),
    17: (0.30, 0.30, 0.80), 18: (0.00, 0.90, 0.00), 19: (0.00, 0.90, 0.00),
    20: (0.20, 0.20, 0.20), 21: (0.20, 0.20, 0.20),
}


def default_limits():
    limits = np.full(NUM_JOINTS, LIMB_LIMIT)
    limits[list(_SPINE_JOINTS)] = SPINE_LIMIT
    return limits


def default_amplitudes():
    amp = np.zeros((NUM_JOINTS, 3))
    for j, a in _DEFAULT_AMPLITUDE.items():
        amp[j] = a
    return amp


@dataclass
class MotionFamily:
    amplitude: np.ndarray = field(default_factory=default_amplitudes)   # (24, 3) radians
    limits: np.ndarray = field(default_factory=default_limits)          # (24,) radians
    freq_range: tuple = (0.02, 0.08)       # base frequency, cycles per frame
    max_harmonics: int = 3
    beta_std: float = 1.0
    cam_scale_range: tuple = (0.9, 1.1)
    cam_shift_std: float = 0.05
    family_id: str = "sine-v1"
    seed: int = 0

    def __post_init__(self):
        self.amplitude = np.asarray(self.amplitude, dtype=np.float64)
        self.limits = np.asarray(self.limits, dtype=np.float64)
        if self.amplitude.shape != (NUM_JOINTS, 3) or self.limits.shape != (NUM_JOINTS,):
            raise ValidationError("family amplitude must be (24, 3) and limits (24,)")
        if np.any(self.amplitude < 0) or np.any(self.amplitude > self.limits[:, None] + 1e-12):
            raise ValidationError("family amplitudes must lie within [0, joint limit]")
        if not 1 <= self.max_harmonics <= 3:
            raise ValidationError("max_harmonics must be between 1 and 3")

    def scaled(self, factor):
        return replace(self, amplitude=np.minimum(self.amplitude * factor, self.limits[:, None]))


@dataclass
class MotionSequence:
    theta: np.ndarray            # (T, 72) axis-angle
    beta: np.ndarray             # (T, 10)
    cam: np.ndarray = None       # (T, 3) or None
    fps: float = 30.0
    label: str = "real"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.cam is not None:
            self.cam = np.asarray(self.cam, dtype=np.float64)
        validate_motion(self)

    @property
    def num_frames(self):
        return self.theta.shape[0]

    def frames(self):
        cams = self.cam if self.cam is not None else [None] * self.num_frames
        return [BodyParams(t, b, c) for t, b, c in zip(self.theta, self.beta, cams)]

    def equals(self, other):
        """Exact (bitwise) equality of every field."""
        same_cam = (self.cam is None and other.cam is None) or (
            self.cam is not None and other.cam is not None and np.array_equal(self.cam, other.cam))
        return (np.array_equal(self.theta, other.theta) and np.array_equal(self.beta, other.beta)
                and same_cam and self.fps == other.fps and self.label == other.label
                and self.meta == other.meta)


def validate_motion(seq):
    t = seq.theta.shape[0] if seq.theta.ndim == 2 else 0
    if t < 1:
        raise ValidationError("motion sequence must have at least one frame")
    if seq.theta.shape != (t, POSE_DIM) or seq.beta.shape != (t, NUM_BETAS):
        raise ValidationError(f"theta {seq.theta.shape} / beta {seq.beta.shape} must be "
                              f"(T, {POSE_DIM}) / (T, {NUM_BETAS})")
    if seq.cam is not None and seq.cam.shape != (t, 3):
        raise ValidationError(f"cam {seq.cam.shape} must be (T, 3)")
    arrays = [seq.theta, seq.beta] + ([seq.cam] if seq.cam is not None else [])
    if not all(np.all(np.isfinite(a)) for a in arrays):
        raise ValidationError("motion values must be finite")
    mags = np.linalg.norm(seq.theta.reshape(t, NUM_JOINTS, 3), axis=-1)
    if np.any(mags > np.pi + 1e-9):
        raise ValidationError("axis-angle magnitude exceeds pi")
    if seq.label not in LABELS:
        raise ValidationError(f"label must be one of {LABELS}, got {seq.label!r}")


# -- generation -----------------------------------------------------------------------

def gen_real_motion(family, num_frames, seed, fps=30.0):
    if num_frames < 1:
        raise ValidationError("num_frames must be at least 1")
    rng = np.random.default_rng(seed)
    t = np.arange(num_frames, dtype=np.float64)
    base = rng.uniform(*family.freq_range)
    amp = family.amplitude.reshape(-1)                         # (72,)
    n_harm = family.max_harmonics
    # split each angle's budget between an offset and the harmonics
    weights = rng.dirichlet(np.ones(n_harm + 1), size=amp.size)   # (72, H+1)
    budget = amp[:, None] * rng.uniform(0.5, 1.0, size=(amp.size, 1)) * weights
    offset = budget[:, 0] * rng.choice([-1.0, 1.0], size=amp.size)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(amp.size, n_harm))
    harmonics = np.arange(1, n_harm + 1, dtype=np.float64)
    waves = np.sin(2.0 * np.pi * base * harmonics[None, None, :] * t[:, None, None]
                   + phases[None, :, :])                       # (T, 72, H)
    theta = offset[None, :] + np.sum(budget[None, :, 1:] * waves, axis=-1)
    bound = np.repeat(family.limits, 3)
    theta = np.clip(theta, -bound, bound)

    beta = np.clip(rng.normal(scale=family.beta_std, size=NUM_BETAS), -3.0, 3.0)
    scale = rng.uniform(*family.cam_scale_range)
    shift = rng.normal(scale=family.cam_shift_std, size=2)
    drift = rng.normal(scale=family.cam_shift_std / max(num_frames, 1), size=2)
    cam = np.column_stack([np.full(num_frames, scale), shift[0] + drift[0] * t,
                           shift[1] + drift[1] * t])
    meta = {"seed": int(seed), "family": family.family_id, "generator": "gen_real_motion"}
    return MotionSequence(theta=theta, beta=np.tile(beta, (num_frames, 1)), cam=cam, fps=fps,
                          label="real", meta=meta)


def _clamp_axis_angle(theta):
    t = theta.shape[0]
    vec = theta.reshape(t, NUM_JOINTS, 3)
    mag = np.linalg.norm(vec, axis=-1, keepdims=True)
    factor = np.where(mag > np.pi, np.pi / np.where(mag > 0, mag, 1.0), 1.0)
    return (vec * factor).reshape(t, POSE_DIM)


def corrupt_motion(seq, mode, seed, sigma=0.1):
    """Fake sample from a real one: ``iid_noise``, ``frame_shuffle`` or ``frame_freeze``."""
    rng = np.random.default_rng(seed)
    theta, beta = seq.theta.copy(), seq.beta.copy()
    cam = None if seq.cam is None else seq.cam.copy()
    if mode == "iid_noise":
        theta = theta + rng.normal(scale=sigma, size=theta.shape)
    elif mode == "frame_shuffle":
        perm = rng.permutation(seq.num_frames)
        theta, beta = theta[perm], beta[perm]
        cam = None if cam is None else cam[perm]
    elif mode == "frame_freeze":
        theta = np.tile(theta[:1], (seq.num_frames, 1))
        beta = np.tile(beta[:1], (seq.num_frames, 1))
        cam = None if cam is None else np.tile(cam[:1], (seq.num_frames, 1))
    else:
        raise ValueError(f"unknown corruption mode {mode!r}")
    meta = dict(seq.meta, corruption=mode, corruption_seed=int(seed))
    if mode == "iid_noise":
        meta["sigma"] = float(sigma)
    return MotionSequence(theta=_clamp_axis_angle(theta), beta=beta, cam=cam, fps=seq.fps,
                          label="fake", meta=meta)


def smooth_poses(theta, window=3):
    """Centred moving average over frames with edge padding."""
    theta = np.asarray(theta, dtype=np.float64)
    pad = window // 2
    padded = np.pad(theta, [(pad, pad)] + [(0, 0)] * (theta.ndim - 1), mode="edge")
    kernel = np.ones(window) / window
    return np.apply_along_axis(lambda c: np.convolve(c, kernel, mode="valid"), 0, padded)


# -- files ---------------------------------------------------------------------------------

def _atomic_write(path, payload):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_motion(seq):
    validate_motion(seq)
    meta = json.dumps({"label": seq.label, "meta": seq.meta}, sort_keys=True).encode("utf-8")
    flags = 1 if seq.cam is not None else 0
    header = _HEADER.pack(MAGIC, VERSION, flags, seq.num_frames, NUM_JOINTS, float(seq.fps),
                          len(meta))
    cols = [seq.theta, seq.beta] + ([seq.cam] if seq.cam is not None else [])
    rows = np.ascontiguousarray(np.concatenate(cols, axis=1), dtype="<f8")
    return header + meta + rows.tobytes()


def decode_motion(buf):
    if len(buf) < _HEADER.size:
        raise ParseError("truncated header", offset=len(buf))
    magic, version, flags, t, j, fps, meta_len = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise ParseError("bad magic string", offset=0)
    if version != VERSION:
        raise ParseError(f"unsupported version {version}", offset=8)
    if j != NUM_JOINTS:
        raise ParseError(f"joint count {j} != {NUM_JOINTS}", offset=16)
    pos = _HEADER.size
    if len(buf) < pos + meta_len:
        raise ParseError("truncated metadata block", offset=len(buf))
    try:
        info = json.loads(buf[pos:pos + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise ParseError("malformed metadata block", offset=pos) from None
    pos += meta_len
    width = POSE_DIM + NUM_BETAS + (3 if flags & 1 else 0)
    need = t * width * 8
    if len(buf) - pos < need:
        raise ParseError(f"truncated payload: expected {need} bytes", offset=len(buf))
    if len(buf) - pos > need:
        raise ParseError("trailing bytes after payload", offset=pos + need)
    rows = np.frombuffer(buf, dtype="<f8", count=t * width, offset=pos).astype(np.float64)
    rows = rows.reshape(t, width)
    cam = rows[:, POSE_DIM + NUM_BETAS:].copy() if flags & 1 else None
    return MotionSequence(theta=rows[:, :POSE_DIM].copy(),
                          beta=rows[:, POSE_DIM:POSE_DIM + NUM_BETAS].copy(), cam=cam, fps=fps,
                          label=info.get("label", "real"), meta=info.get("meta", {}))


def save_motion(seq, path):
    _atomic_write(path, encode_motion(seq))


def load_motion(path):
    with open(path, "rb") as f:
        return decode_motion(f.read())


# -- corpus ---------------------------------------------------------------------------------

@dataclass
class ManifestEntry:
    seed: int
    family: str
    label: str
    split: str
    file: str


def corpus_seed(root_seed, split, index):
    return derive_seed(root_seed, "motion", split, index)


def generate_corpus(out_dir, n_train=2000, n_eval=200, num_frames=16, root_seed=0, family=None,
                    fps=30.0):
    """Write ``train/`` and ``eval/`` motion files plus ``manifest.txt``."""
    family = MotionFamily() if family is None else family
    entries = []
    for split, count in (("train", n_train), ("eval", n_eval)):
        os.makedirs(os.path.join(out_dir, split), exist_ok=True)
        for i in range(count):
            seed = corpus_seed(root_seed, split, i)
            seq = gen_real_motion(family, num_frames, seed, fps=fps)
            rel = f"{split}/{i:06d}.motion"
            save_motion(seq, os.path.join(out_dir, rel))
            entries.append(ManifestEntry(seed, family.family_id, "real", split, rel))
    write_manifest(entries, os.path.join(out_dir, "manifest.txt"))
    return entries


def write_manifest(entries, path):
    lines = ["# seed\tfamily\tlabel\tsplit\tfile"]
    lines += [f"{e.seed}\t{e.family}\t{e.label}\t{e.split}\t{e.file}" for e in entries]
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def read_manifest(path):
    entries = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 5:
                raise ParseError("manifest line needs 5 tab-separated fields", offset=lineno)
            try:
                entries.append(ManifestEntry(int(parts[0]), *parts[1:]))
            except ValueError:
                raise ParseError("manifest seed is not an integer", offset=lineno) from None
    return entries


def regenerate(entry, family, num_frames, fps=30.0):
    if entry.family != family.family_id:
        raise ValidationError(f"manifest family {entry.family!r} != {family.family_id!r}")
    return gen_real_motion(family, num_frames, entry.seed, fps=fps)


def load_split(corpus_dir, split):
    entries = [e for e in read_manifest(os.path.join(corpus_dir, "manifest.txt"))
               if e.split == split]
    return [load_motion(os.path.join(corpus_dir, e.file)) for e in entries]


def stack_sequences(seqs):
    """Arrays ``theta (N, T, 72)``, ``beta (N, 10)``, ``cam (N, T, 3)`` from equal-length sequences."""
    lengths = {s.num_frames for s in seqs}
    if len(lengths) != 1:
        raise ValidationError(f"sequences have differing lengths {sorted(lengths)}")
    theta = np.stack([s.theta for s in seqs])
    beta = np.stack([s.beta.mean(axis=0) for s in seqs])
    cam = np.stack([s.cam if s.cam is not None else np.tile([1.0, 0.0, 0.0], (s.num_frames, 1))
                    for s in seqs])
    return theta, beta, cam
