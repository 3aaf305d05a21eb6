"""WAV decoding, downmixing, resampling and peak normalization."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyClip, MalformedHeader, TruncatedFile, UnsupportedFormat

CANONICAL_RATE = 22050

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono float64 samples plus their sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


def _parse_fmt(body: bytes) -> tuple[int, int, int, int, int]:
    if len(body) < 16:
        raise MalformedHeader(f"fmt chunk too short ({len(body)} bytes)")
    tag, channels, rate, _byte_rate, block_align, bits = struct.unpack("<HHIIHH", body[:16])
    if tag == WAVE_FORMAT_EXTENSIBLE:
        # cbSize, validBits, channelMask, then a 16-byte GUID whose first u16 is the real tag
        if len(body) < 40:
            raise MalformedHeader("WAVE_FORMAT_EXTENSIBLE fmt chunk too short")
        tag = struct.unpack("<H", body[24:26])[0]
    return tag, channels, rate, block_align, bits


def decode_wav(data: bytes) -> AudioClip:
    """Decode a RIFF/WAVE byte string into a mono clip.

    Integer PCM (8, 16, 24, 32 bit) is scaled by ``2**(bits-1)``; 8-bit data
    is unsigned and offset by 128 first. 32-bit float data is clipped to
    [-1, 1]. Stereo frames are averaged.
    """
    if len(data) < 12:
        raise MalformedHeader("file shorter than RIFF header")
    riff, _size, wave = struct.unpack("<4sI4s", data[:12])
    if riff != b"RIFF" or wave != b"WAVE":
        raise MalformedHeader("missing RIFF/WAVE signature")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id, chunk_size = struct.unpack("<4sI", data[pos:pos + 8])
        body_start = pos + 8
        body_end = body_start + chunk_size
        if chunk_id == b"fmt ":
            if body_end > len(data):
                raise MalformedHeader("fmt chunk runs past end of file")
            fmt = _parse_fmt(data[body_start:body_end])
        elif chunk_id == b"data":
            if body_end > len(data):
                raise TruncatedFile(
                    f"data chunk declares {chunk_size} bytes but only "
                    f"{len(data) - body_start} remain")
            payload = data[body_start:body_end]
        # chunks are word aligned
        pos = body_end + (chunk_size & 1)

    if fmt is None:
        raise MalformedHeader("missing fmt chunk")
    if payload is None:
        raise MalformedHeader("missing data chunk")

    tag, channels, rate, block_align, bits = fmt
    if tag not in (WAVE_FORMAT_PCM, WAVE_FORMAT_IEEE_FLOAT):
        raise UnsupportedFormat(f"format code {tag:#06x} is not PCM or IEEE float")
    if channels not in (1, 2):
        raise UnsupportedFormat(f"{channels} channels; only mono and stereo are supported")
    if rate == 0:
        raise MalformedHeader("sample rate is zero")
    if tag == WAVE_FORMAT_PCM and bits not in (8, 16, 24, 32):
        raise UnsupportedFormat(f"{bits}-bit PCM is not supported")
    if tag == WAVE_FORMAT_IEEE_FLOAT and bits != 32:
        raise UnsupportedFormat(f"{bits}-bit float is not supported")
    width = bits // 8
    if block_align != width * channels:
        raise MalformedHeader(f"block_align {block_align} inconsistent with {channels}x{bits}-bit")
    if len(payload) % block_align:
        raise TruncatedFile("data chunk ends mid-frame")
    if not payload:
        raise EmptyClip("data chunk holds no samples")

    if tag == WAVE_FORMAT_IEEE_FLOAT:
        samples = np.clip(np.frombuffer(payload, dtype="<f4").astype(np.float64), -1.0, 1.0)
    elif bits == 8:
        samples = (np.frombuffer(payload, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif bits == 24:
        raw = np.frombuffer(payload, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        ints = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        samples = ints.astype(np.float64) / float(1 << 23)
    else:
        ints = np.frombuffer(payload, dtype="<i2" if bits == 16 else "<i4")
        samples = ints.astype(np.float64) / float(1 << (bits - 1))

    if channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)
    return AudioClip(samples, rate)


def read_wav(path: str | Path) -> AudioClip:
    return decode_wav(Path(path).read_bytes())


def encode_wav(clip: AudioClip, bits: int = 16) -> bytes:
    """Encode a mono clip as integer PCM (16-bit by default)."""
    if bits not in (16, 32):
        raise UnsupportedFormat(f"cannot encode {bits}-bit PCM")
    scale = float(1 << (bits - 1))
    ints = np.clip(np.round(clip.samples * scale), -scale, scale - 1)
    payload = ints.astype("<i2" if bits == 16 else "<i4").tobytes()
    width = bits // 8
    fmt = struct.pack("<HHIIHH", WAVE_FORMAT_PCM, 1, clip.sample_rate,
                      clip.sample_rate * width, width, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    return b"RIFF" + struct.pack("<I", len(body)) + body


def write_wav(path: str | Path, clip: AudioClip, bits: int = 16) -> None:
    Path(path).write_bytes(encode_wav(clip, bits))


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Linear-interpolation resampler without anti-alias filtering."""
    if len(clip) == 0:
        raise EmptyClip("cannot resample an empty clip")
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == clip.sample_rate:
        return AudioClip(clip.samples.copy(), clip.sample_rate)
    n_in = len(clip)
    n_out = max(1, math.floor(n_in * target_rate / clip.sample_rate + 0.5))
    positions = np.arange(n_out, dtype=np.float64) * (clip.sample_rate / target_rate)
    out = np.interp(positions, np.arange(n_in, dtype=np.float64), clip.samples)
    return AudioClip(out, target_rate)


def normalize_peak(clip: AudioClip) -> AudioClip:
    peak = float(np.max(np.abs(clip.samples))) if len(clip) else 0.0
    if peak == 0.0:
        return clip
    out = clip.samples / peak
    # division can land one ulp past 1.0 in magnitude
    np.clip(out, -1.0, 1.0, out=out)
    return AudioClip(out, clip.sample_rate)


def load_audio(path: str | Path, target_rate: int = CANONICAL_RATE) -> AudioClip:
    """Read a WAV file and return it resampled to ``target_rate``."""
    return resample(read_wav(path), target_rate)
