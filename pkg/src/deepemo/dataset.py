"""RAVDESS-style corpus scanning, stratified splitting and feature caching."""

from __future__ import annotations

import csv
import logging
import math
import re
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .audio import CANONICAL_RATE, read_wav
from .dsp import MelSpectrogram, SpectrogramConfig, load_mspc, save_mspc
from .features import clip_features
from .hashing import fnv1a64
from .errors import (
    DeepEmoError,
    EmptyDataset,
    EmptyInput,
    MalformedFilename,
    MissingDirectory,
    UnknownEmotionCode,
)

log = logging.getLogger(__name__)

EMOTIONS = ("neutral", "calm", "happy", "sad", "angry", "fearful", "disgust", "surprised")

_FILENAME_RE = re.compile(r"^\d{2}(-\d{2}){6}\.wav$")


@dataclass(frozen=True)
class EmotionLabel:
    code: int

    def __post_init__(self):
        if not 1 <= self.code <= len(EMOTIONS):
            raise UnknownEmotionCode(f"emotion code {self.code:02d} is not in 01..08")

    @property
    def name(self) -> str:
        return EMOTIONS[self.code - 1]

    @property
    def index(self) -> int:
        """Zero-based class index used by the classifier."""
        return self.code - 1

    @classmethod
    def from_name(cls, name: str) -> "EmotionLabel":
        return cls(EMOTIONS.index(name) + 1)

    @classmethod
    def from_index(cls, index: int) -> "EmotionLabel":
        return cls(index + 1)


@dataclass(frozen=True, eq=False)
class LabeledExample:
    path: Path
    label: EmotionLabel
    actor_id: int
    features: MelSpectrogram | None = None


@dataclass
class DatasetSplit:
    train: list[LabeledExample]
    validation: list[LabeledExample]
    seed: int


def parse_ravdess_filename(name: str) -> tuple[EmotionLabel, int]:
    """Return ``(emotion, actor_id)`` from e.g. ``03-01-06-01-02-01-12.wav``."""
    if not _FILENAME_RE.match(name):
        raise MalformedFilename(f"{name!r} does not follow the 7-field RAVDESS convention")
    fields = name[:-4].split("-")
    return EmotionLabel(int(fields[2])), int(fields[6])


def format_ravdess_filename(emotion: int, actor: int, modality: int = 3, vocal_channel: int = 1,
                            intensity: int = 1, statement: int = 1, repetition: int = 1) -> str:
    parts = (modality, vocal_channel, emotion, intensity, statement, repetition, actor)
    return "-".join(f"{p:02d}" for p in parts) + ".wav"


def scan_dataset(root: str | Path, skipped: list | None = None) -> list[LabeledExample]:
    """Recursively collect every parsable ``.wav`` under ``root``, sorted by path.

    Unparsable files are logged and, if ``skipped`` is given, appended to it as
    ``(path, reason)`` pairs.
    """
    root = Path(root)
    if not root.is_dir():
        raise MissingDirectory(f"dataset root {root} does not exist")
    examples = []
    for path in sorted(root.rglob("*")):
        if not path.is_file() or path.suffix.lower() != ".wav":
            continue
        try:
            label, actor = parse_ravdess_filename(path.name)
        except DeepEmoError as exc:
            log.warning("SKIP %s %s", path, exc)
            if skipped is not None:
                skipped.append((path, str(exc)))
            continue
        examples.append(LabeledExample(path, label, actor))
    if not examples:
        raise EmptyDataset(f"no parsable RAVDESS files under {root}")
    return examples


def format_skip_report(skipped) -> str:
    return "".join(f"SKIP {path} {reason}\n" for path, reason in skipped)


def stratified_split(examples: list[LabeledExample], train_fraction: float = 0.8,
                     seed: int = 0) -> DatasetSplit:
    """Per-class seeded shuffle; ``ceil(train_fraction * n_c)`` of each class train."""
    if not examples:
        raise EmptyInput("cannot split an empty example list")
    if not 0.0 < train_fraction <= 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1], got {train_fraction}")
    by_class = defaultdict(list)
    for ex in examples:
        by_class[ex.label.code].append(ex)
    rng = np.random.default_rng(seed)
    train, validation = [], []
    for code in sorted(by_class):
        members = by_class[code]
        order = rng.permutation(len(members))
        n_train = math.ceil(train_fraction * len(members))
        train.extend(members[i] for i in order[:n_train])
        validation.extend(members[i] for i in order[n_train:])
    return DatasetSplit(train, validation, seed)


def actor_disjoint_split(examples: list[LabeledExample], train_fraction: float = 0.8,
                         seed: int = 0) -> DatasetSplit:
    """Assign whole actors to one side, ``ceil(train_fraction * n_actors)`` to train."""
    if not examples:
        raise EmptyInput("cannot split an empty example list")
    if not 0.0 < train_fraction <= 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1], got {train_fraction}")
    actors = sorted({ex.actor_id for ex in examples})
    rng = np.random.default_rng(seed)
    shuffled = [actors[i] for i in rng.permutation(len(actors))]
    train_actors = set(shuffled[: math.ceil(train_fraction * len(actors))])
    train = [ex for ex in examples if ex.actor_id in train_actors]
    validation = [ex for ex in examples if ex.actor_id not in train_actors]
    return DatasetSplit(train, validation, seed)


def write_split_manifest(path: str | Path, split: DatasetSplit) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "label_code", "label_name", "actor", "split"])
        for side, members in (("train", split.train), ("validation", split.validation)):
            for ex in members:
                writer.writerow([str(ex.path), ex.label.code, ex.label.name, ex.actor_id, side])


def read_split_manifest(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cache_key(path: str | Path, config: SpectrogramConfig, sample_rate: int = CANONICAL_RATE) -> str:
    blob = f"{path}\0{config.serialize()};sample_rate={sample_rate}".encode("utf-8")
    return f"{fnv1a64(blob):016x}"


@dataclass
class CacheReport:
    computed: int = 0
    cached: int = 0
    errors: list[tuple[Path, str]] = field(default_factory=list)

    def summary(self) -> str:
        return f"{self.computed} computed, {self.cached} cached, {len(self.errors)} failed"


def build_feature_cache(examples: list[LabeledExample], config: SpectrogramConfig,
                        cache_dir: str | Path, sample_rate: int = CANONICAL_RATE,
                        workers: int = 1, report: CacheReport | None = None,
                        ) -> list[LabeledExample]:
    """Attach log-mel features to each example, reusing ``<hash>.mspc`` files.

    Failures are collected in ``report.errors`` (in path order); only a run
    where every file fails raises.
    """
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    report = CacheReport() if report is None else report

    def work(ex: LabeledExample):
        target = cache_dir / (cache_key(ex.path, config, sample_rate) + ".mspc")
        if target.exists():
            try:
                return replace(ex, features=load_mspc(target, config)), False, None
            except DeepEmoError:
                log.warning("corrupt cache entry %s, recomputing", target)
        try:
            spec = clip_features(read_wav(ex.path), config, sample_rate)
        except (DeepEmoError, OSError) as exc:
            return ex, False, f"{type(exc).__name__}: {exc}"
        tmp = target.with_suffix(".tmp")
        save_mspc(tmp, spec)
        tmp.replace(target)
        # serve the stored float32 values so cold and warm runs agree bit for bit
        return replace(ex, features=load_mspc(target, config)), True, None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, examples))
    else:
        results = [work(ex) for ex in examples]

    done = []
    for ex, computed, error in results:
        if error is not None:
            report.errors.append((ex.path, error))
            continue
        done.append(ex)
        if computed:
            report.computed += 1
        else:
            report.cached += 1
    if not done:
        raise EmptyDataset(f"feature extraction failed for all {len(examples)} files")
    return done
