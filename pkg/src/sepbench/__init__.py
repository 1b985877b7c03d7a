"""Simulation, conditioning and evaluation toolkit for prompt-driven sound
separation (extraction and removal operators, vocal-imitation curves, metric
suite and diffusion-sampler math)."""

__version__ = "0.1.0"

from .audio import AudioClip, downmix_mono, read_wav, resample, rms_frames, write_wav
from .errors import SepbenchError
from .spectral import SpectroConfig, istft, mel_spectrogram, stft

__all__ = [
    "AudioClip", "SepbenchError", "SpectroConfig", "downmix_mono", "istft", "mel_spectrogram",
    "read_wav", "resample", "rms_frames", "stft", "write_wav", "__version__",
]
