"""Speech emotion recognition from log-mel spectrograms with a numpy ResNet."""

from .audio import AudioClip, decode_wav, normalize_peak, read_wav, resample
from .dataset import EMOTIONS, EmotionLabel, parse_ravdess_filename, scan_dataset, stratified_split
from .dsp import MelSpectrogram, SpectrogramConfig, fft, mel_spectrogram, render_image

__version__ = "0.1.0"

__all__ = [
    "AudioClip", "EMOTIONS", "EmotionLabel", "MelSpectrogram", "SpectrogramConfig",
    "decode_wav", "fft", "mel_spectrogram", "normalize_peak", "parse_ravdess_filename",
    "read_wav", "render_image", "resample", "scan_dataset", "stratified_split",
]
