"""FFT, STFT, mel filterbank and log-mel spectrogram extraction."""

from __future__ import annotations

import struct
from dataclasses import dataclass, asdict
from functools import lru_cache
from pathlib import Path

import numpy as np

from .audio import AudioClip
from .errors import (
    InvalidBandRange,
    InvalidConfig,
    MalformedHeader,
    NegativeFrequency,
    NonPowerOfTwoLength,
    SignalShorterThanFrame,
    TruncatedFile,
)

LOG_EPS = 1e-10
MSPC_MAGIC = b"MSPC"


@dataclass(frozen=True)
class SpectrogramConfig:
    """STFT and mel band parameters.

    ``fmax=None`` means the Nyquist frequency of whatever clip is analysed.
    """

    n_fft: int = 1024
    hop: int = 256
    n_mels: int = 128
    fmin: float = 0.0
    fmax: float | None = None
    floor_db: float = -80.0

    def __post_init__(self):
        if self.n_fft < 1 or self.n_fft & (self.n_fft - 1):
            raise InvalidConfig(f"n_fft must be a power of two, got {self.n_fft}")
        if not 0 < self.hop <= self.n_fft:
            raise InvalidConfig(f"hop must satisfy 0 < hop <= n_fft, got {self.hop}")
        if self.n_mels < 2:
            raise InvalidConfig(f"n_mels must be >= 2, got {self.n_mels}")
        if self.fmin < 0:
            raise InvalidConfig(f"fmin must be >= 0, got {self.fmin}")
        if self.fmax is not None and self.fmin >= self.fmax:
            raise InvalidConfig(f"fmin ({self.fmin}) must be below fmax ({self.fmax})")

    def band_edges(self, sample_rate: int) -> tuple[float, float]:
        nyquist = sample_rate / 2
        fmax = nyquist if self.fmax is None else float(self.fmax)
        if fmax > nyquist:
            raise InvalidBandRange(f"fmax {fmax} Hz exceeds Nyquist {nyquist} Hz")
        if self.fmin >= fmax:
            raise InvalidBandRange(f"fmin {self.fmin} Hz must be below fmax {fmax} Hz")
        return float(self.fmin), fmax

    def serialize(self) -> str:
        return ";".join(f"{k}={v!r}" for k, v in asdict(self).items())


@dataclass(frozen=True, eq=False)
class MelSpectrogram:
    data: np.ndarray  # (n_mels, n_frames), dB
    config: SpectrogramConfig
    sample_rate: int

    @property
    def n_mels(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and not n & (n - 1)


@lru_cache(maxsize=32)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=64)
def _twiddles(m: int) -> np.ndarray:
    k = np.arange(m // 2)
    return np.exp(-2j * np.pi * k / m)


def fft(x) -> np.ndarray:
    """Unnormalized forward DFT along the last axis.

    Iterative radix-2 decimation in time: bit-reversal permutation followed
    by log2(N) butterfly passes. Leading axes are transformed independently.
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if not _is_power_of_two(n):
        raise NonPowerOfTwoLength(f"fft length must be a power of two, got {n}")
    out = np.ascontiguousarray(x[..., _bit_reversal(n)])
    lead = out.shape[:-1]
    m = 2
    while m <= n:
        half = m // 2
        blocks = out.reshape(*lead, n // m, m)
        even = blocks[..., :half].copy()
        odd = blocks[..., half:] * _twiddles(m)
        blocks[..., :half] = even + odd
        blocks[..., half:] = even - odd
        m *= 2
    return out


def ifft(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.complex128)
    return np.conj(fft(np.conj(X))) / X.shape[-1]


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window of length ``n``."""
    if n < 1:
        raise ValueError(f"window length must be >= 1, got {n}")
    k = np.arange(n)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * k / n)


def frame_count(length: int, n_fft: int, hop: int) -> int:
    if length < n_fft:
        raise SignalShorterThanFrame(f"signal of {length} samples is shorter than n_fft={n_fft}")
    return 1 + (length - n_fft) // hop


def stft(clip: AudioClip, config: SpectrogramConfig) -> np.ndarray:
    """Frames of the windowed FFT, shape ``(n_frames, n_fft)``; no padding."""
    n_frames = frame_count(len(clip), config.n_fft, config.hop)
    windows = np.lib.stride_tricks.sliding_window_view(clip.samples, config.n_fft)
    frames = windows[::config.hop][:n_frames] * hann_window(config.n_fft)
    return fft(frames)


def hz_to_mel(f):
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise NegativeFrequency("frequency must be >= 0 Hz")
    # log1p/expm1 keep the round trip exact for frequencies far below 700 Hz
    out = 2595.0 * np.log1p(f / 700.0) / np.log(10.0)
    return float(out) if out.ndim == 0 else out


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    if np.any(m < 0):
        raise NegativeFrequency("mel value must be >= 0")
    out = 700.0 * np.expm1(m * np.log(10.0) / 2595.0)
    return float(out) if out.ndim == 0 else out


def mel_edges_hz(config: SpectrogramConfig, sample_rate: int) -> np.ndarray:
    """The ``n_mels + 2`` triangle edge frequencies in Hz."""
    fmin, fmax = config.band_edges(sample_rate)
    mels = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), config.n_mels + 2)
    return mel_to_hz(mels)


def mel_filterbank(config: SpectrogramConfig, sample_rate: int) -> np.ndarray:
    """Peak-normalized triangular filters, shape ``(n_mels, n_fft // 2 + 1)``."""
    edges = mel_edges_hz(config, sample_rate)
    freqs = np.arange(config.n_fft // 2 + 1) * sample_rate / config.n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    bank = np.maximum(0.0, np.minimum(rising, falling))
    bank.setflags(write=False)
    return bank


def mel_spectrogram(clip: AudioClip, config: SpectrogramConfig) -> MelSpectrogram:
    bank = mel_filterbank(config, clip.sample_rate)
    spectrum = stft(clip, config)[:, : config.n_fft // 2 + 1]
    power = spectrum.real ** 2 + spectrum.imag ** 2
    mel = bank @ power.T
    db = 10.0 * np.log10(mel + LOG_EPS)
    np.maximum(db, config.floor_db, out=db)
    return MelSpectrogram(db, config, clip.sample_rate)


def render_image(spec: MelSpectrogram) -> np.ndarray:
    """Min-max scale to uint8 with the lowest band in the bottom row."""
    data = np.asarray(spec.data, dtype=np.float64)
    if data.size == 0:
        raise ValueError("cannot render an empty spectrogram")
    lo, hi = data.min(), data.max()
    if hi == lo:
        pixels = np.zeros(data.shape, dtype=np.uint8)
    else:
        pixels = np.floor((data - lo) / (hi - lo) * 255.0 + 0.5).astype(np.uint8)
    return np.ascontiguousarray(pixels[::-1])


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    height, width = image.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + np.ascontiguousarray(image, dtype=np.uint8).tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5" or int(parts[3]) != 255:
        raise MalformedHeader(f"{path} is not an 8-bit binary PGM")
    width, height = int(parts[1]), int(parts[2])
    pixels = parts[4]
    return np.frombuffer(pixels[: width * height], dtype=np.uint8).reshape(height, width)


def write_png(path: str | Path, image: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8), mode="L").save(path, format="PNG")


def save_image(path: str | Path, image: np.ndarray) -> None:
    """Write PNG when the suffix asks for it, PGM otherwise."""
    if Path(path).suffix.lower() == ".png":
        write_png(path, image)
    else:
        write_pgm(path, image)


def encode_mspc(spec: MelSpectrogram) -> bytes:
    header = MSPC_MAGIC + struct.pack("<III", spec.n_mels, spec.n_frames, spec.sample_rate)
    return header + np.ascontiguousarray(spec.data, dtype="<f4").tobytes()


def decode_mspc(raw: bytes, config: SpectrogramConfig) -> MelSpectrogram:
    if len(raw) < 16 or raw[:4] != MSPC_MAGIC:
        raise MalformedHeader("missing MSPC magic")
    n_mels, n_frames, rate = struct.unpack("<III", raw[4:16])
    expected = 16 + 4 * n_mels * n_frames
    if len(raw) < expected:
        raise TruncatedFile(f"MSPC body holds {len(raw) - 16} bytes, expected {expected - 16}")
    data = np.frombuffer(raw[16:expected], dtype="<f4").reshape(n_mels, n_frames)
    return MelSpectrogram(data.astype(np.float32), config, rate)


def save_mspc(path: str | Path, spec: MelSpectrogram) -> None:
    Path(path).write_bytes(encode_mspc(spec))


def load_mspc(path: str | Path, config: SpectrogramConfig) -> MelSpectrogram:
    return decode_mspc(Path(path).read_bytes(), config)
