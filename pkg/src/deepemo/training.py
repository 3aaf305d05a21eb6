"""Training loop, evaluation and top-k prediction reports."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .audio import CANONICAL_RATE, AudioClip
from .dataset import EMOTIONS, LabeledExample
from .dsp import SpectrogramConfig, render_image, save_image
from .errors import EmptyEvalSet, EmptyTrainSet, NonFiniteLoss
from .features import batch_inputs, clip_features
from .nn.checkpoint import Checkpoint, save_checkpoint
from .nn.functional import cross_entropy, cross_entropy_backward, softmax
from .nn.optim import Adam
from .nn.resnet import ResNet

log = logging.getLogger(__name__)

METRICS_HEADER = "epoch,train_acc,loss,val_acc"


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_accuracy: float
    mean_loss: float
    val_accuracy: float

    def __post_init__(self):
        # stored at CSV precision so in-memory and on-disk metrics compare equal
        for name in ("train_accuracy", "mean_loss", "val_accuracy"):
            object.__setattr__(self, name, round(float(getattr(self, name)), 6))

    def csv_row(self) -> str:
        return f"{self.epoch},{self.train_accuracy:.6f},{self.mean_loss:.6f},{self.val_accuracy:.6f}"


def format_metrics_csv(metrics) -> str:
    return "".join(line + "\n" for line in [METRICS_HEADER] + [m.csv_row() for m in metrics])


def write_metrics_csv(path, metrics) -> None:
    Path(path).write_text(format_metrics_csv(metrics))


def read_metrics_csv(path) -> list[EpochMetrics]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [EpochMetrics(int(r["epoch"]), float(r["train_acc"]), float(r["loss"]),
                             float(r["val_acc"])) for r in reader]


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    lr: float = 3e-5
    seed: int = 0
    freeze_backbone: bool = False
    imagenet_norm: bool = False


@dataclass
class TrainResult:
    metrics: list[EpochMetrics]
    checkpoint: Checkpoint
    best_val_accuracy: float | None = None


@dataclass
class EvalResult:
    accuracy: float
    mean_loss: float
    confusion: np.ndarray  # rows true class, columns predicted

    def confusion_csv(self, labels=EMOTIONS) -> str:
        n = self.confusion.shape[0]
        names = list(labels[:n]) if len(labels) >= n else [str(i) for i in range(n)]
        lines = ["true\\pred," + ",".join(names)]
        lines += [names[i] + "," + ",".join(str(int(c)) for c in row)
                  for i, row in enumerate(self.confusion)]
        return "\n".join(lines) + "\n"


def _arrays(model: ResNet, examples: list[LabeledExample], imagenet_norm: bool):
    if any(ex.features is None for ex in examples):
        raise ValueError("every example needs cached features; run build_feature_cache first")
    x = batch_inputs([ex.features for ex in examples], model.input_size, model.in_channels,
                     imagenet_norm)
    y = np.array([ex.label.index for ex in examples], dtype=np.int64)
    return x, y


def _predict_logits(model: ResNet, x: np.ndarray, batch_size: int) -> np.ndarray:
    model.eval()
    dtype = model.fc.params["weight"].dtype
    return np.concatenate([model.forward(x[i:i + batch_size].astype(dtype))
                           for i in range(0, len(x), batch_size)])


def evaluate_arrays(model: ResNet, x: np.ndarray, y: np.ndarray, batch_size=16) -> EvalResult:
    if len(x) == 0:
        raise EmptyEvalSet("no examples to evaluate")
    logits = _predict_logits(model, x, batch_size)
    # argmax returns the lowest index among ties
    pred = logits.argmax(axis=1)
    n = model.num_classes
    confusion = np.zeros((n, n), dtype=np.int64)
    np.add.at(confusion, (y, pred), 1)
    accuracy = np.trace(confusion) / len(y)
    return EvalResult(float(accuracy), cross_entropy(logits, y), confusion)


def evaluate(model: ResNet, examples: list[LabeledExample], batch_size=16,
             imagenet_norm=False) -> EvalResult:
    if not examples:
        raise EmptyEvalSet("no examples to evaluate")
    x, y = _arrays(model, examples, imagenet_norm)
    return evaluate_arrays(model, x, y, batch_size)


def train(model: ResNet, train_examples: list[LabeledExample],
          val_examples: list[LabeledExample], hyper: TrainConfig,
          out_dir: str | Path | None = None, metadata: dict | None = None,
          on_epoch=None) -> TrainResult:
    """Adam/cross-entropy training with post-epoch evaluation.

    Training accuracy is measured in eval mode over the whole training set
    after each epoch. When ``out_dir`` is given, ``last.demo`` is rewritten
    every epoch and ``best.demo`` tracks the best validation accuracy.
    """
    if not train_examples:
        raise EmptyTrainSet("training split is empty")
    x_train, y_train = _arrays(model, train_examples, hyper.imagenet_norm)
    if val_examples:
        x_val, y_val = _arrays(model, val_examples, hyper.imagenet_norm)
    else:
        log.warning("validation split is empty; val_acc will be reported as 0")
        x_val = y_val = None

    names = None
    if hyper.freeze_backbone:
        names = {k for k, _ in model.named_parameters() if k.startswith("fc.")}
    optimizer = Adam(model, lr=hyper.lr, names=names)
    dtype = model.fc.params["weight"].dtype
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    base_meta = {"seed": hyper.seed, "lr": hyper.lr, "batch_size": hyper.batch_size,
                 "imagenet_norm": hyper.imagenet_norm, "labels": list(EMOTIONS[:model.num_classes])}
    base_meta.update(metadata or {})

    metrics: list[EpochMetrics] = []
    best = None
    n = len(x_train)
    for epoch in range(1, hyper.epochs + 1):
        rng = np.random.default_rng([hyper.seed, epoch])
        order = rng.permutation(n)
        model.train()
        loss_sum = 0.0
        for b, start in enumerate(range(0, n, hyper.batch_size)):
            idx = order[start:start + hyper.batch_size]
            xb, yb = x_train[idx].astype(dtype), y_train[idx]
            optimizer.zero_grad()
            logits = model.forward(xb)
            loss = cross_entropy(logits, yb)
            if not math.isfinite(loss):
                raise NonFiniteLoss(f"non-finite loss {loss} at epoch {epoch}, batch {b}")
            model.backward(cross_entropy_backward(logits, yb))
            optimizer.step()
            loss_sum += loss * len(idx)
        train_acc = evaluate_arrays(model, x_train, y_train, hyper.batch_size).accuracy
        val_acc = (evaluate_arrays(model, x_val, y_val, hyper.batch_size).accuracy
                   if x_val is not None else 0.0)
        row = EpochMetrics(epoch, train_acc, loss_sum / n, val_acc)
        metrics.append(row)
        if on_epoch is not None:
            on_epoch(row)
        if out_dir is not None:
            cp = Checkpoint.from_model(model, epoch=epoch, **base_meta)
            save_checkpoint(cp, out_dir / "last.demo")
            if x_val is not None and (best is None or val_acc > best):
                save_checkpoint(cp, out_dir / "best.demo")
        if x_val is not None and (best is None or val_acc > best):
            best = val_acc

    final = Checkpoint.from_model(model, epoch=hyper.epochs, **base_meta)
    if out_dir is not None:
        save_checkpoint(final, out_dir / "last.demo")
    return TrainResult(metrics, final, best)


@dataclass
class TopKReport:
    entries: list[tuple[str, float]]
    source: str
    image_path: str | None = None
    probabilities: list[float] = field(default_factory=list, repr=False)

    def to_text(self) -> str:
        lines = ["rank,label,probability"]
        lines += [f"{r},{label},{p:.6f}" for r, (label, p) in enumerate(self.entries, 1)]
        if self.image_path is not None:
            lines.append(f"spectrogram,{self.image_path}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({
            "source": self.source,
            "spectrogram": self.image_path,
            "top": [{"rank": r, "label": label, "probability": p}
                    for r, (label, p) in enumerate(self.entries, 1)],
        }, indent=2)


def predict_topk(model: ResNet, clip: AudioClip, k: int = 8,
                 config: SpectrogramConfig | None = None, sample_rate: int = CANONICAL_RATE,
                 image_path: str | Path | None = None, labels=EMOTIONS,
                 imagenet_norm=False, source: str = "<clip>") -> TopKReport:
    """Rank class probabilities for one clip, highest first (ties by class index)."""
    if not 1 <= k <= model.num_classes:
        raise ValueError(f"k must lie in [1, {model.num_classes}], got {k}")
    config = SpectrogramConfig() if config is None else config
    spec = clip_features(clip, config, sample_rate)
    x = batch_inputs([spec], model.input_size, model.in_channels, imagenet_norm)
    probs = softmax(_predict_logits(model, x, 1)[0].astype(np.float64))
    order = np.argsort(-probs, kind="stable")[:k]
    names = list(labels) if len(labels) >= model.num_classes else [str(i) for i in range(model.num_classes)]
    if image_path is not None:
        save_image(image_path, render_image(spec))
    return TopKReport([(names[i], float(probs[i])) for i in order], source,
                      None if image_path is None else str(image_path), probs.tolist())


def config_to_dict(config: SpectrogramConfig) -> dict:
    return asdict(config)
