"""Synthetic tone corpora for overfit checks and smoke runs.

Class ``i`` (0-based) is a tone at ``300 + 150 * i`` Hz with its second
and third harmonics.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .audio import CANONICAL_RATE, AudioClip, write_wav
from .dataset import EMOTIONS, format_ravdess_filename


def tone_frequency(class_index: int) -> float:
    return 300.0 + 150.0 * class_index


def tone_clip(class_index: int, duration: float = 1.0, sample_rate: int = CANONICAL_RATE,
              variant: int = 0) -> AudioClip:
    """Harmonic tone for ``class_index`` with seeded phase, level and noise.

    Different ``variant`` values give distinct takes of the same class.
    """
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    f0 = tone_frequency(class_index)
    rng = np.random.default_rng([class_index, variant])
    phases = rng.uniform(0, 2 * np.pi, 3)
    amp = rng.uniform(0.7, 1.0)
    signal = sum(w * np.sin(2 * np.pi * h * f0 * t + ph)
                 for h, w, ph in zip((1, 2, 3), (1.0, 0.5, 0.25), phases))
    signal = signal * (0.5 * amp / 1.75)
    signal = signal + rng.normal(0.0, 0.005, t.shape)
    return AudioClip(np.clip(signal, -1.0, 1.0), sample_rate)


def write_tone_corpus(root: str | Path, per_class: int = 2, duration: float = 1.0,
                      sample_rate: int = CANONICAL_RATE) -> list[Path]:
    """Write ``per_class`` RAVDESS-named WAVs for each of the 8 emotions."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    paths = []
    for index in range(len(EMOTIONS)):
        for rep in range(per_class):
            actor = rep + 1
            name = format_ravdess_filename(index + 1, actor, repetition=1 + rep % 2)
            path = root / f"Actor_{actor:02d}" / name
            path.parent.mkdir(exist_ok=True)
            write_wav(path, tone_clip(index, duration, sample_rate, variant=rep))
            paths.append(path)
    return paths
