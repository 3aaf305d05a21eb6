import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deepemo.audio import AudioClip, decode_wav, encode_wav, normalize_peak, resample
from deepemo.dsp import fft
from deepemo.errors import EmptyClip, MalformedHeader, TruncatedFile, UnsupportedFormat


def make_wav(payload, tag=1, channels=1, rate=22050, bits=16, declared=None, extensible_tag=None):
    block = channels * bits // 8
    if extensible_tag is None:
        fmt = struct.pack("<HHIIHH", tag, channels, rate, rate * block, block, bits)
    else:
        guid_tail = b"\x00\x00\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"
        fmt = struct.pack("<HHIIHHHHI", 0xFFFE, channels, rate, rate * block, block, bits,
                          22, bits, 0) + struct.pack("<H", extensible_tag) + guid_tail
    size = len(payload) if declared is None else declared
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", size) + payload
    return b"RIFF" + struct.pack("<I", len(body)) + body


def test_zero_samples_decode_to_zeros():
    clip = decode_wav(make_wav(b"\x00\x00" * 100, rate=16000))
    assert len(clip) == 100
    assert clip.sample_rate == 16000
    assert np.all(clip.samples == 0.0)


def test_16bit_half_scale():
    clip = decode_wav(make_wav(struct.pack("<h", 16384)))
    assert clip.samples.tolist() == [0.5]


def test_stereo_downmix_is_mean():
    payload = struct.pack("<ff", 0.2, 0.6)
    clip = decode_wav(make_wav(payload, tag=3, channels=2, bits=32))
    assert clip.samples[0] == pytest.approx(0.4, abs=1e-7)


def test_stereo_16bit_downmix():
    payload = struct.pack("<hhhh", 8192, 16384, -32768, 0)
    clip = decode_wav(make_wav(payload, channels=2))
    np.testing.assert_array_equal(clip.samples, [0.375, -0.5])


@pytest.mark.parametrize("bits,payload,expected", [
    (8, bytes([128, 192, 0]), [0.0, 0.5, -1.0]),
    (24, (4194304).to_bytes(3, "little") + (2**24 - 2**23).to_bytes(3, "little"), [0.5, -1.0]),
    (32, struct.pack("<ii", 2**30, -2**31), [0.5, -1.0]),
])
def test_integer_widths(bits, payload, expected):
    clip = decode_wav(make_wav(payload, bits=bits))
    np.testing.assert_array_equal(clip.samples, expected)


def test_float_input_is_clipped():
    clip = decode_wav(make_wav(struct.pack("<fff", 1.5, -2.0, 0.25), tag=3, bits=32))
    np.testing.assert_array_equal(clip.samples, [1.0, -1.0, 0.25])


def test_extensible_pcm_accepted():
    clip = decode_wav(make_wav(struct.pack("<h", -16384), extensible_tag=1))
    assert clip.samples.tolist() == [-0.5]


def test_skips_unknown_chunks():
    wav = make_wav(struct.pack("<h", 16384))
    extra = b"LIST" + struct.pack("<I", 3) + b"abc" + b"\x00"
    wav = wav[:12] + extra + wav[12:]
    wav = wav[:4] + struct.pack("<I", len(wav) - 8) + wav[8:]
    assert decode_wav(wav).samples.tolist() == [0.5]


def test_errors():
    with pytest.raises(UnsupportedFormat):
        decode_wav(make_wav(b"\x00" * 4, tag=0x55))  # MP3
    with pytest.raises(UnsupportedFormat):
        decode_wav(make_wav(b"\x00" * 12, channels=6))
    with pytest.raises(TruncatedFile):
        decode_wav(make_wav(b"\x00" * 10, declared=200))
    with pytest.raises(MalformedHeader):
        decode_wav(b"RIFX" + b"\x00" * 40)
    with pytest.raises(MalformedHeader):
        decode_wav(b"RIFF\x04\x00\x00\x00WAVE")
    with pytest.raises(MalformedHeader):
        decode_wav(b"RIFF")


def test_empty_data_chunk():
    with pytest.raises(EmptyClip):
        decode_wav(make_wav(b""))


@given(st.lists(st.integers(-32767, 32767), min_size=1, max_size=200))
def test_pcm16_round_trip(values):
    raw = np.array(values, dtype="<i2").tobytes()
    clip = decode_wav(make_wav(raw))
    assert encode_wav(clip) == make_wav(raw)
    back = np.round(clip.samples * 32768).astype(np.int64)
    assert back.tolist() == values


def test_resample_identity():
    clip = AudioClip(np.linspace(-1, 1, 37), 8000)
    out = resample(clip, 8000)
    np.testing.assert_array_equal(out.samples, clip.samples)
    assert out.sample_rate == 8000


@pytest.mark.parametrize("src,dst", [(44100, 22050), (22050, 44100), (48000, 22050), (8000, 11025)])
def test_resample_constant(src, dst):
    clip = AudioClip(np.full(1000, 0.3), src)
    out = resample(clip, dst)
    assert len(out) == round(1000 * dst / src)
    np.testing.assert_allclose(out.samples, 0.3, rtol=0, atol=1e-15)


def test_resample_keeps_tone_frequency():
    rate, f = 44100, 440.0
    t = np.arange(rate) / rate
    out = resample(AudioClip(np.sin(2 * np.pi * f * t), rate), 22050)
    spectrum = np.abs(fft(out.samples[:2048]))[:1025]
    bin_width = 22050 / 2048
    assert abs(np.argmax(spectrum) * bin_width - f) <= bin_width


def test_resample_empty():
    with pytest.raises(EmptyClip):
        resample(AudioClip(np.zeros(0), 8000), 16000)


@settings(max_examples=200)
@given(st.integers(1, 5000), st.integers(1000, 96000), st.integers(1000, 96000))
def test_resample_preserves_duration(n, src, dst):
    out = resample(AudioClip(np.zeros(n), src), dst)
    assert abs(len(out) / dst - n / src) <= 1 / dst


def test_normalize_examples():
    assert normalize_peak(AudioClip([0.0, 0.0], 8000)).samples.tolist() == [0.0, 0.0]
    assert normalize_peak(AudioClip([0.25, -0.5], 8000)).samples.tolist() == [0.5, -1.0]


@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=1, max_size=100))
def test_normalize_idempotent_and_unit_peak(values):
    clip = AudioClip(values, 8000)
    once = normalize_peak(clip)
    twice = normalize_peak(once)
    np.testing.assert_array_equal(once.samples, twice.samples)
    if np.any(np.asarray(values) != 0):
        assert np.max(np.abs(once.samples)) == 1.0
    assert np.all(np.abs(once.samples) <= 1.0)


def test_clip_rejects_bad_rate():
    with pytest.raises(ValueError):
        AudioClip([0.0], 0)
