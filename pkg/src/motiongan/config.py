"""Run configuration and its ``key = value`` file format.

Config files are INI-style: ``[section]`` headers followed by ``key = value``
lines. Sections only group keys; every key is unique across sections. Keys
left out keep their defaults.
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields

from .errors import ValidationError
from .losses import LossWeights

MODES = ("baseline", "gan", "mposer")

SECTIONS = {
    "data": ("seq_len", "n_train", "n_eval", "n_real_pool", "fps", "feature_noise",
             "label_fraction", "template_vertices"),
    "model": ("n_feat", "hidden", "gen_layers", "regressor_hidden", "iterations", "bidirectional",
              "disc_hidden", "disc_layers", "pooling", "attn_layers", "attn_width",
              "attn_dropout", "mposer_hidden", "mposer_layers"),
    "train": ("mode", "batch_size", "gen_lr", "disc_lr", "mposer_lr", "epochs", "max_steps",
              "mposer_epochs", "mposer_kl_weight", "lr_patience", "disc_corruption",
              "pck_threshold"),
    "loss": ("lambda_2d", "lambda_3d", "lambda_beta", "lambda_theta", "lambda_adv",
             "lambda_mposer"),
    "run": ("seed", "corpus_dir", "out_dir"),
}


@dataclass
class TrainConfig:
    # data
    seq_len: int = 16
    n_train: int = 2000
    n_eval: int = 200
    n_real_pool: int = 1000
    fps: float = 30.0
    feature_noise: float = 0.1
    label_fraction: float = 1.0      # share of training sequences with 3D and SMPL labels
    template_vertices: int = 64
    # model
    n_feat: int = 32
    hidden: int = 64
    gen_layers: int = 2
    regressor_hidden: int = 64
    iterations: int = 3
    bidirectional: bool = False
    disc_hidden: int = 64
    disc_layers: int = 2
    pooling: str = "attention"
    attn_layers: int = 2
    attn_width: int = 64
    attn_dropout: float = 0.1
    mposer_hidden: int = 64
    mposer_layers: int = 1
    # training
    mode: str = "gan"
    batch_size: int = 32
    gen_lr: float = 5e-5
    disc_lr: float = 1e-4
    mposer_lr: float = 5e-3
    epochs: int = 30
    max_steps: int = 0               # 0 means no cap
    mposer_epochs: int = 20
    mposer_kl_weight: float = 1e-3
    lr_patience: int = 5
    disc_corruption: str = "iid_noise"
    pck_threshold: float = 150.0     # millimetres
    # loss
    lambda_2d: float = 300.0
    lambda_3d: float = 300.0
    lambda_beta: float = 0.06
    lambda_theta: float = 60.0
    lambda_adv: float = 2.0
    lambda_mposer: float = 1.0
    # run
    seed: int = 0
    corpus_dir: str = "corpus"
    out_dir: str = "runs"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.pooling not in ("attention", "static"):
            raise ValidationError(f"pooling must be attention or static, got {self.pooling!r}")
        if self.gen_lr <= 0 or self.disc_lr <= 0 or self.mposer_lr <= 0:
            raise ValidationError("learning rates must be positive")
        if self.seq_len < 1 or self.batch_size < 1:
            raise ValidationError("seq_len and batch_size must be positive")
        if not 0.0 <= self.label_fraction <= 1.0:
            raise ValidationError("label_fraction must lie in [0, 1]")
        self.loss_weights()

    @property
    def use_disc(self):
        return self.mode == "gan"

    @property
    def use_mposer(self):
        return self.mode == "mposer"

    def loss_weights(self):
        return LossWeights(self.lambda_2d, self.lambda_3d, self.lambda_beta, self.lambda_theta,
                           self.lambda_adv, self.lambda_mposer)

    def replace(self, **changes):
        return TrainConfig(**{**asdict(self), **changes})

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name: f for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ValidationError(f"unknown config keys {sorted(unknown)}")
        return cls(**{k: _coerce(known[k], v) for k, v in d.items()})

    def to_ini(self):
        values = asdict(self)
        out = []
        for section, keys in SECTIONS.items():
            out.append(f"[{section}]")
            out.extend(f"{k} = {values[k]}" for k in keys)
            out.append("")
        return "\n".join(out)

    @classmethod
    def from_ini(cls, text):
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ValidationError(f"config parse error: {exc}") from None
        values = {}
        for section in parser.sections():
            for key, value in parser.items(section):
                if key in values:
                    raise ValidationError(f"config key {key!r} given twice")
                values[key] = value
        return cls.from_dict(values)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_ini(f.read())


def _coerce(f, value):
    if not isinstance(value, str):
        return value
    kind = f.type if isinstance(f.type, str) else f.type.__name__
    try:
        if kind == "bool":
            lowered = value.strip().lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return lowered in ("true", "1", "yes")
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError:
        raise ValidationError(f"config key {f.name!r}: cannot parse {value!r} as {kind}") from None
    return value.strip()


def ablation_configs(base, axis):
    """Named config variants for one ablation axis.

    ``"discriminator"``: G only / G + MPoser / G + motion discriminator.
    ``"attention"``: static concat pooling vs attention MLPs of 2 and 3 layers.
    """
    if axis == "discriminator":
        return [("G only", base.replace(mode="baseline")),
                ("G + MPoser", base.replace(mode="mposer")),
                ("G + D_M", base.replace(mode="gan"))]
    if axis == "attention":
        w = base.attn_width
        return [("D_M - concat", base.replace(mode="gan", pooling="static")),
                (f"D_M - attention [2 layers,{w} nodes]",
                 base.replace(mode="gan", pooling="attention", attn_layers=2)),
                (f"D_M - attention [3 layers,{w} nodes]",
                 base.replace(mode="gan", pooling="attention", attn_layers=3))]
    raise ValueError(f"unknown ablation axis {axis!r}")
