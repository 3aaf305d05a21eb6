"""``deepemo`` command line: features, train, eval, predict, render.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import sys
from collections import Counter
from pathlib import Path

from . import config as cfg
from .audio import read_wav
from .dataset import (
    EMOTIONS,
    actor_disjoint_split,
    build_feature_cache,
    CacheReport,
    format_skip_report,
    scan_dataset,
    stratified_split,
    write_split_manifest,
)
from .dsp import render_image, save_image
from .errors import DataError, DeepEmoError, MissingDirectory
from .features import clip_features
from .nn.checkpoint import Checkpoint, load_checkpoint
from .nn.resnet import ARCHITECTURES, build_model, replace_final_layer
from .training import TrainConfig, evaluate, predict_topk, train, write_metrics_csv

log = logging.getLogger("deepemo")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _say(line: str = "") -> None:
    sys.stdout.write(line + "\n")
    sys.stdout.flush()


def _default(key):
    return cfg.defaults()[key]


def _opt(group, flag, key, type=None, help=""):
    group.add_argument(flag, dest=key, type=type, default=None,
                       help=f"{help} (default: {_default(key)})")


def _switch(group, flag, key, help):
    group.add_argument(flag, dest=key, action="store_const", const=True, default=None,
                       help=f"{help} (default: {_default(key)})")


def _add_common(p):
    p.add_argument("--config", metavar="PATH", default=None,
                   help="key=value config file; flags override its values (default: None)")
    _opt(p, "--cache-dir", "cache_dir", help=f"feature cache directory, env {cfg.CACHE_ENV}")
    _opt(p, "--sample-rate", "sample_rate", int, "canonical sample rate in Hz")
    _opt(p, "--n-fft", "n_fft", int, "STFT frame length")
    _opt(p, "--hop", "hop", int, "STFT hop in samples")
    _opt(p, "--n-mels", "n_mels", int, "mel bands")
    _opt(p, "--fmin", "fmin", float, "lowest mel edge in Hz")
    _opt(p, "--fmax", "fmax", float, "highest mel edge in Hz, None = Nyquist")
    _opt(p, "--floor-db", "floor_db", float, "dB floor")


def _add_data(p):
    _opt(p, "--dataset-root", "dataset_root", help="RAVDESS-style directory of WAV files")
    _opt(p, "--seed", "seed", int, "split and training seed")
    _opt(p, "--train-fraction", "train_fraction", float, "per-class training fraction")
    _switch(p, "--actor-disjoint", "actor_disjoint", "split by actor instead of by file")
    _opt(p, "--workers", "workers", int, "feature extraction threads")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deepemo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging (default: False)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("features", help="scan a corpus and cache log-mel features")
    _add_common(p)
    _add_data(p)

    p = sub.add_parser("train", help="train a classifier and write metrics and checkpoints")
    _add_common(p)
    _add_data(p)
    _opt(p, "--output-dir", "output_dir", help="metrics, manifest and checkpoint directory")
    _opt(p, "--epochs", "epochs", int, "training epochs")
    _opt(p, "--batch-size", "batch_size", int, "mini-batch size")
    _opt(p, "--lr", "lr", float, "Adam learning rate")
    p.add_argument("--arch", dest="arch", choices=sorted(ARCHITECTURES), default=None,
                   help=f"network topology (default: {_default('arch')})")
    _opt(p, "--num-classes", "num_classes", int, "classifier outputs")
    _opt(p, "--pretrained-checkpoint", "pretrained_checkpoint",
         help="checkpoint whose backbone seeds the model; its head is replaced")
    _switch(p, "--freeze-backbone", "freeze_backbone", "optimize the head only")
    _switch(p, "--imagenet-norm", "imagenet_norm", "apply ImageNet mean/std to inputs")
    _switch(p, "--deterministic", "deterministic", "single-threaded BLAS for reproducible bytes")

    p = sub.add_parser("eval", help="accuracy and confusion matrix of a checkpoint")
    _add_common(p)
    _add_data(p)
    p.add_argument("--checkpoint", required=True, metavar="PATH", help="DEMO checkpoint (required)")
    p.add_argument("--split", choices=("train", "val"), default="val", help="which split (default: val)")
    _opt(p, "--output-dir", "output_dir", help="where confusion matrix files go")

    p = sub.add_parser("predict", help="top-k emotion probabilities for one WAV file")
    _add_common(p)
    p.add_argument("wav_path", help="input WAV file")
    p.add_argument("--checkpoint", required=True, metavar="PATH", help="DEMO checkpoint (required)")
    p.add_argument("--k", type=int, default=8, help="number of ranked classes (default: 8)")
    p.add_argument("--image", default=None, metavar="PATH",
                   help="spectrogram image path, .png or .pgm (default: <wav stem>_mel.pgm)")
    p.add_argument("--json", action="store_true", help="print JSON instead of CSV lines (default: False)")

    p = sub.add_parser("render", help="render a WAV file's log-mel spectrogram")
    _add_common(p)
    p.add_argument("wav_path", help="input WAV file")
    p.add_argument("out_image", help="output image, .png or .pgm")
    return parser


def _layers(args, extra: dict | None = None) -> cfg.RunConfig:
    file_values = cfg.load_config_file(args.config) if args.config else {}
    flags = {k: v for k, v in vars(args).items() if k in cfg._FIELDS}
    return cfg.resolve(extra or {}, file_values, flags)


def _split(examples, run: cfg.RunConfig):
    splitter = actor_disjoint_split if run.actor_disjoint else stratified_split
    return splitter(examples, run.train_fraction, run.seed)


def _scan_and_cache(run: cfg.RunConfig):
    if run.dataset_root is None or not Path(run.dataset_root).is_dir():
        raise MissingDirectory(f"dataset root {run.dataset_root} does not exist")
    skipped = []
    examples = scan_dataset(run.dataset_root, skipped)
    for line in format_skip_report(skipped).splitlines():
        _say(line)
    report = CacheReport()
    examples = build_feature_cache(examples, run.spectrogram, run.cache_dir, run.sample_rate,
                                   run.workers, report)
    for path, reason in report.errors:
        _say(f"ERROR {path} {reason}")
    return examples, report


def cmd_features(args) -> int:
    run = _layers(args)
    examples, report = _scan_and_cache(run)
    counts = Counter(ex.label.name for ex in examples)
    for name in EMOTIONS:
        _say(f"{name}: {counts.get(name, 0)}")
    split = _split(examples, run)
    manifest = Path(run.cache_dir) / "manifest.csv"
    write_split_manifest(manifest, split)
    _say(f"{report.computed} computed, {report.cached} cached")
    _say(f"manifest: {manifest}")
    return EXIT_OK


def _feature_meta(run: cfg.RunConfig) -> dict:
    return {"spectrogram": {"n_fft": run.n_fft, "hop": run.hop, "n_mels": run.n_mels,
                            "fmin": run.fmin, "fmax": run.fmax, "floor_db": run.floor_db},
            "sample_rate": run.sample_rate, "train_fraction": run.train_fraction,
            "actor_disjoint": run.actor_disjoint}


def _thread_limit(deterministic: bool):
    if not deterministic:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=1)


def cmd_train(args) -> int:
    run = _layers(args)
    with _thread_limit(run.deterministic):
        examples, _ = _scan_and_cache(run)
        split = _split(examples, run)
        out = Path(run.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_split_manifest(out / "manifest.csv", split)

        model = build_model(run.arch, run.num_classes, seed=run.seed)
        if run.pretrained_checkpoint:
            source = load_checkpoint(run.pretrained_checkpoint)
            if source.architecture.get("arch") != run.arch:
                raise DataError(f"pretrained checkpoint is {source.architecture.get('arch')}, "
                                   f"not {run.arch}")
            model.load_state(source.params, backbone_only=True)
            replace_final_layer(model, run.num_classes)
            _say(f"loaded backbone from {run.pretrained_checkpoint}; new head "
                 f"{model.feature_width}x{run.num_classes}")

        hyper = TrainConfig(run.epochs, run.batch_size, run.lr, run.seed,
                            run.freeze_backbone, run.imagenet_norm)
        _say(f"train {len(split.train)}, validation {len(split.validation)}, arch {run.arch}")
        result = train(model, split.train, split.validation, hyper, out_dir=out,
                       metadata=_feature_meta(run),
                       on_epoch=lambda m: _say(f"epoch {m.epoch}: train_acc {m.train_accuracy:.6f} "
                                               f"loss {m.mean_loss:.6f} val_acc {m.val_accuracy:.6f}"))
        write_metrics_csv(out / "metrics.csv", result.metrics)
    _say(f"metrics: {out / 'metrics.csv'}")
    _say(f"checkpoint: {out / 'last.demo'}")
    return EXIT_OK


def _checkpoint_layer(cp: Checkpoint) -> dict:
    meta = dict(cp.metadata)
    layer = dict(meta.pop("spectrogram", {}))
    for key in ("sample_rate", "train_fraction", "actor_disjoint", "seed", "imagenet_norm"):
        if key in meta:
            layer[key] = meta[key]
    layer["arch"] = cp.architecture["arch"]
    layer["num_classes"] = cp.architecture["num_classes"]
    return layer


def cmd_eval(args) -> int:
    cp = load_checkpoint(args.checkpoint)
    run = _layers(args, _checkpoint_layer(cp))
    model = cp.build()
    examples, _ = _scan_and_cache(run)
    split = _split(examples, run)
    members = split.train if args.split == "train" else split.validation
    result = evaluate(model, members, run.batch_size, run.imagenet_norm)
    out = Path(run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    matrix = out / f"confusion_{args.split}.csv"
    matrix.write_text(result.confusion_csv())
    summary = out / f"eval_{args.split}.txt"
    summary.write_text(f"split={args.split}\nexamples={len(members)}\n"
                       f"accuracy={result.accuracy:.6f}\nloss={result.mean_loss:.6f}\n")
    _say(f"accuracy {result.accuracy:.6f} loss {result.mean_loss:.6f} on {len(members)} {args.split} examples")
    _say(result.confusion_csv().rstrip("\n"))
    _say(f"confusion matrix: {matrix}")
    return EXIT_OK


def cmd_predict(args) -> int:
    cp = load_checkpoint(args.checkpoint)
    run = _layers(args, _checkpoint_layer(cp))
    model = cp.build()
    clip = read_wav(args.wav_path)
    image = args.image or f"{Path(args.wav_path).stem}_mel.pgm"
    labels = cp.metadata.get("labels", EMOTIONS)
    report = predict_topk(model, clip, args.k, run.spectrogram, run.sample_rate, image,
                          labels, run.imagenet_norm, source=str(args.wav_path))
    _say(report.to_json() if args.json else report.to_text().rstrip("\n"))
    return EXIT_OK


def cmd_render(args) -> int:
    run = _layers(args)
    spec = clip_features(read_wav(args.wav_path), run.spectrogram, run.sample_rate)
    image = render_image(spec)
    save_image(args.out_image, image)
    _say(f"{args.out_image}: {image.shape[1]}x{image.shape[0]} (frames x mels)")
    return EXIT_OK


def _origin(exc: BaseException) -> str:
    """Name of the module whose code raised ``exc``."""
    tb, module = exc.__traceback__, "deepemo"
    while tb is not None:
        module = tb.tb_frame.f_globals.get("__name__", module)
        tb = tb.tb_next
    return module


COMMANDS = {"features": cmd_features, "train": cmd_train, "eval": cmd_eval,
            "predict": cmd_predict, "render": cmd_render}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DeepEmoError as exc:
        sys.stderr.write(f"deepemo {args.command}: {_origin(exc)}.{type(exc).__name__}: {exc}\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(f"deepemo {args.command}: {type(exc).__name__}: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
