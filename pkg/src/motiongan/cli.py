"""Command-line entry point: gen-data, train, eval, gradcheck, ablate.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field

from . import __version__
from .config import TrainConfig, ablation_configs
from .errors import (AlignmentError, DimensionError, EvaluationError, InsufficientLengthError,
                     MotionGanError, NumericFailure, ParseError, ValidationError)
from .metrics import MetricsReport, reports_to_csv
from .motion import generate_corpus, load_split

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("motiongan")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: dict
    artifacts: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    version: str = __version__

    def write(self, path):
        missing = [p for p in self.artifacts.values() if not os.path.exists(p)]
        if missing:
            raise ValidationError(f"manifest names missing artifacts {missing}")
        atomic_write_text(path, json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def atomic_write_text(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_config(args):
    if args.config is None:
        config = TrainConfig()
    elif not os.path.isfile(args.config):
        raise FileNotFoundError(f"config file not found: {args.config}")
    else:
        config = TrainConfig.load(args.config)
    changes = {}
    if getattr(args, "mode", None):
        changes["mode"] = args.mode
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "out", None):
        changes["out_dir"] = args.out
    return config.replace(**changes) if changes else config


# -- commands ---------------------------------------------------------------------------------

def cmd_gen_data(args):
    config = _load_config(args)
    # a gen-data --out names the corpus directory itself
    out = args.out or config.corpus_dir
    t0 = time.time()
    os.makedirs(out, exist_ok=True)
    entries = generate_corpus(out, n_train=config.n_train, n_eval=config.n_eval,
                              num_frames=config.seq_len, root_seed=config.seed, fps=config.fps)
    manifest = RunManifest("gen-data", config.replace(corpus_dir=out).to_dict(),
                           {"root": config.seed},
                           {"manifest": os.path.join(out, "manifest.txt")},
                           wall_clock=time.time() - t0)
    manifest.write(os.path.join(out, "run.json"))
    print(f"wrote {len(entries)} sequences to {out}")
    return EXIT_OK


def cmd_train(args):
    from .trainer import load_checkpoint, make_provider, save_checkpoint, train

    config = _load_config(args)
    if args.corpus:
        config = config.replace(corpus_dir=args.corpus)
    train_seqs = load_split(config.corpus_dir, "train")
    eval_seqs = load_split(config.corpus_dir, "eval")
    if not train_seqs or not eval_seqs:
        raise ValidationError(f"corpus {config.corpus_dir} lacks a train or eval split")
    if train_seqs[0].num_frames != config.seq_len:
        raise ValidationError(f"corpus has {train_seqs[0].num_frames} frames per sequence, "
                              f"config seq_len is {config.seq_len}")
    out = config.out_dir
    os.makedirs(out, exist_ok=True)
    ckpt_path = os.path.join(out, "checkpoint.npz")
    log_path = os.path.join(out, "steps.log")
    models, step_log = None, []
    if args.resume:
        ckpt = load_checkpoint(args.resume)
        if ckpt.kind != "generator":
            raise ValidationError(f"cannot resume from a {ckpt.kind} checkpoint")
        models = ckpt.models
        config = ckpt.config.replace(out_dir=out, epochs=config.epochs,
                                     max_steps=config.max_steps)
        if os.path.exists(log_path):
            with open(log_path) as f:
                step_log = [ln.rstrip("\n") for ln in f][:models.step]
    provider = make_provider(config)
    t0 = time.time()

    def on_epoch(m):
        save_checkpoint(ckpt_path, m, config, provider)
        atomic_write_text(log_path, "".join(ln + "\n" for ln in step_log))

    result = train(config, train_seqs, eval_seqs, models=models, step_log=step_log,
                   on_epoch=on_epoch)
    on_epoch(result.models)
    report_path = os.path.join(out, "report.csv")
    atomic_write_text(report_path, reports_to_csv([result.report], [config.mode]))
    RunManifest("train", config.to_dict(), {"root": config.seed},
                {"corpus": config.corpus_dir, "checkpoint": ckpt_path, "steps": log_path,
                 "report": report_path},
                wall_clock=time.time() - t0).write(os.path.join(out, "run.json"))
    print(result.report.to_record(), end="")
    return EXIT_OK


def cmd_eval(args):
    from .body import make_template
    from .trainer import evaluate, load_checkpoint, predictor_from_checkpoint, prepare_data

    ckpt = load_checkpoint(args.checkpoint)
    config = ckpt.config
    seqs = load_split(args.corpus, args.split)
    if not seqs:
        raise ValidationError(f"corpus {args.corpus} has no {args.split} sequences")
    if seqs[0].num_frames != config.seq_len:
        raise DimensionError(f"seq_len mismatch: corpus {seqs[0].num_frames}, "
                             f"checkpoint {config.seq_len}")
    predictor = predictor_from_checkpoint(ckpt)
    if predictor.n_feat != ckpt.provider.n_feat:
        raise DimensionError(f"n_feat mismatch: provider {ckpt.provider.n_feat}, "
                             f"model {predictor.n_feat}")
    tmpl = make_template(config.template_vertices)
    data = prepare_data(seqs, tmpl, ckpt.provider, 1.0, config.seed)
    report, _ = evaluate(predictor, data, tmpl, config.pck_threshold)
    print(report.to_record(), end="")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        atomic_write_text(os.path.join(args.out, "report.csv"),
                          reports_to_csv([report], [os.path.basename(args.checkpoint)]))
    return EXIT_OK


def cmd_gradcheck(args):
    from .checks import TOLERANCE, failing, run_gradcheck

    results = run_gradcheck(seed=args.seed or 0)
    for name, err in results:
        status = "ok" if err <= TOLERANCE else "FAIL"
        print(f"{name:28s} {err:.3e} {status}")
    bad = failing(results)
    if bad:
        print(f"gradcheck failed for: {', '.join(bad)}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"all {len(results)} components within {TOLERANCE:g}")
    return EXIT_OK


def cmd_ablate(args):
    from .trainer import run_ablation

    config = _load_config(args)
    if args.corpus:
        config = config.replace(corpus_dir=args.corpus)
    train_seqs = load_split(config.corpus_dir, "train")
    eval_seqs = load_split(config.corpus_dir, "eval")
    t0 = time.time()
    table = run_ablation(ablation_configs(config, args.axis), train_seqs, eval_seqs)
    csv_text = reports_to_csv(list(table.values()), list(table))
    os.makedirs(config.out_dir, exist_ok=True)
    path = os.path.join(config.out_dir, f"ablation-{args.axis}.csv")
    atomic_write_text(path, csv_text)
    RunManifest("ablate", config.to_dict(), {"root": config.seed}, {"table": path},
                wall_clock=time.time() - t0).write(os.path.join(config.out_dir, "run.json"))
    print(csv_text, end="")
    return EXIT_OK


# -- plumbing -------------------------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="motiongan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, mode=False):
        p.add_argument("--config", help="INI config file (defaults when omitted)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override the root seed")
        if mode:
            p.add_argument("--mode", choices=("baseline", "gan", "mposer"))

    p = sub.add_parser("gen-data", help="write a seeded synthetic motion corpus")
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a generator")
    common(p, mode=True)
    p.add_argument("--corpus", help="corpus directory (overrides corpus_dir)")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus split")
    p.add_argument("checkpoint")
    p.add_argument("corpus")
    p.add_argument("--split", default="eval", choices=("train", "eval"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every op and network")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ablate", help="train and compare the configs of one ablation axis")
    common(p)
    p.add_argument("--axis", required=True, choices=("discriminator", "attention"))
    p.add_argument("--corpus")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("motiongan: a command is required (see --help)")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except (NumericFailure, EvaluationError, AlignmentError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParseError, ValidationError, DimensionError, InsufficientLengthError,
            MotionGanError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
