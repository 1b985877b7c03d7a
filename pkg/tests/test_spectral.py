import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sepbench.audio import AudioClip
from sepbench.errors import ConfigError
from sepbench.spectral import (SpectroConfig, get_window, hz_to_mel, istft, mel_filterbank, mel_spectrogram,
                               mel_to_hz, stft)

SR = 16000


def test_config_validation():
    assert SpectroConfig(1024).hop_len == 256
    with pytest.raises(ConfigError):
        SpectroConfig(256, hop_len=512)
    with pytest.raises(ConfigError):
        SpectroConfig(256, hop_len=0)
    with pytest.raises(ConfigError):
        SpectroConfig(256, n_mels=0)
    with pytest.raises(ConfigError):
        stft(AudioClip.mono(np.zeros(100), SR), SpectroConfig(1000, 250))
    with pytest.raises(ConfigError):
        SpectroConfig(256, fmin=9000).mel_range(SR)


def test_stft_shape_and_zero():
    spec = stft(AudioClip.mono(np.zeros(1000), SR), SpectroConfig(256, 64))
    assert spec.shape == (1 + int(np.ceil(1000 / 64)), 129)
    assert not np.abs(spec).any()


def test_exact_bin_sine_peaks_at_bin():
    w, k = 512, 37
    x = np.sin(2 * np.pi * k * SR / w * np.arange(8 * w) / SR)
    mag = np.abs(stft(AudioClip.mono(x, SR), SpectroConfig(w, w // 4)))
    interior = mag[4:-4]
    assert np.all(np.argmax(interior, axis=1) == k)


@pytest.mark.parametrize("w,hop", [(256, 64), (512, 256), (1024, 128), (2048, 512)])
def test_istft_roundtrip(w, hop, rng):
    x = rng.standard_normal(5003)
    cfg = SpectroConfig(w, hop)
    y = istft(stft(AudioClip.mono(x, SR), cfg), cfg, x.size)
    assert np.sqrt(np.mean((x - y) ** 2)) <= 1e-6


@settings(max_examples=25, deadline=None)
@given(st.integers(1000, 6000), st.sampled_from([256, 512, 1024]), st.integers(0, 2 ** 31))
def test_parseval(n, w, seed):
    x = np.random.default_rng(seed).standard_normal(n)
    cfg = SpectroConfig(w, w // 4)
    spec = stft(AudioClip.mono(x, SR), cfg)
    # one-sided spectrum -> full-spectrum energy per frame
    full = 2 * np.sum(np.abs(spec) ** 2, axis=1) - np.abs(spec[:, 0]) ** 2 - np.abs(spec[:, -1]) ** 2
    win = get_window("hann", w)
    # exact oracle: each sample weighted by the squared windows that cover it
    cover = np.zeros((spec.shape[0] - 1) * cfg.hop_len + w)
    for k in range(spec.shape[0]):
        cover[k * cfg.hop_len:k * cfg.hop_len + w] += win ** 2
    weights = cover[w // 2:w // 2 + n]
    assert abs(full.sum() / w / np.sum(weights * x ** 2) - 1) <= 1e-9


def test_mel_scale_inverse():
    f = np.array([0.0, 100.0, 1000.0, 8000.0])
    assert np.allclose(mel_to_hz(hz_to_mel(f)), f)
    assert np.isclose(hz_to_mel(1000.0), 2595 * np.log10(1 + 1000 / 700))


@pytest.mark.parametrize("w,m", [(64, 8), (128, 16), (256, 32), (512, 64), (2048, 128)])
def test_every_filter_nonzero(w, m):
    fb = mel_filterbank(44100, w, m, 0.0, 22050.0)
    assert fb.shape == (m, w // 2 + 1)
    assert np.all(fb.sum(axis=1) > 0) and np.all(fb >= 0)


def test_mel_spectrogram_examples(rng):
    cfg = SpectroConfig(512, 128, n_mels=20)
    zeros = mel_spectrogram(AudioClip.mono(np.zeros(4000), SR), cfg)
    assert np.all(zeros == np.log(1e-5))
    x = rng.standard_normal(4000) * 0.1
    a = mel_spectrogram(AudioClip.mono(x, SR), cfg)
    b = mel_spectrogram(AudioClip.mono(2 * x, SR), cfg)
    assert np.all(b >= a)
    assert a.shape[1] == 20
    assert mel_spectrogram(AudioClip.mono(x, SR), SpectroConfig(512, 128, n_mels=10)).shape[1] == 10
