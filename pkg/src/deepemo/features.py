"""Turn a log-mel spectrogram into a network input image."""

from __future__ import annotations

import numpy as np

from .audio import normalize_peak, resample
from .dsp import MelSpectrogram, mel_spectrogram

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406])
IMAGENET_STD = np.array([0.229, 0.224, 0.225])


def _resize_axis(x: np.ndarray, size: int, axis: int) -> np.ndarray:
    n = x.shape[axis]
    if n == size:
        return x
    # half-pixel centres, edges clamped (align_corners=False)
    src = (np.arange(size) + 0.5) * (n / size) - 0.5
    src = np.clip(src, 0.0, n - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n - 1)
    frac = src - i0
    shape = [1] * x.ndim
    shape[axis] = size
    frac = frac.reshape(shape)
    return np.take(x, i0, axis=axis) * (1 - frac) + np.take(x, i1, axis=axis) * frac


def bilinear_resize(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize of the last two axes."""
    out = _resize_axis(np.asarray(image, dtype=np.float64), height, image.ndim - 2)
    return _resize_axis(out, width, image.ndim - 1)


def scale_db(spec: MelSpectrogram) -> np.ndarray:
    """Map dB values so the floor sits at 0 and 0 dB at 1."""
    floor = spec.config.floor_db
    return (np.asarray(spec.data, dtype=np.float64) - floor) / abs(floor)


def to_model_input(spec: MelSpectrogram, size: int, channels: int = 3,
                   imagenet_norm: bool = False) -> np.ndarray:
    """Return a float32 ``(channels, size, size)`` image; low bands at the bottom row."""
    image = bilinear_resize(scale_db(spec)[::-1], size, size)
    stacked = np.repeat(image[None], channels, axis=0)
    if imagenet_norm and channels == 3:
        stacked = (stacked - IMAGENET_MEAN[:, None, None]) / IMAGENET_STD[:, None, None]
    return stacked.astype(np.float32)


def batch_inputs(specs, size, channels=3, imagenet_norm=False) -> np.ndarray:
    return np.stack([to_model_input(s, size, channels, imagenet_norm) for s in specs])


def clip_features(clip, config, sample_rate):
    """Resample, peak-normalize and extract the log-mel spectrogram of ``clip``."""
    return mel_spectrogram(normalize_peak(resample(clip, sample_rate)), config)
