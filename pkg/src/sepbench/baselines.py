"""Non-neural reference separators: ideal ratio mask and spectral gating."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioClip, require_non_silent
from .errors import InvalidOperatorError, ShapeError
from .scene import MixtureScene, render_stems
from .spectral import SpectroConfig, istft, stft

SEPARATION_CONFIG = SpectroConfig(window_len=2048, hop_len=512)
IRM_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class TFMask:
    values: np.ndarray
    cfg: SpectroConfig = SEPARATION_CONFIG


def irm_mask(stems_mag, target_indices, floor: float = IRM_FLOOR,
             cfg: SpectroConfig = SEPARATION_CONFIG) -> TFMask:
    """Ratio of target magnitude to total magnitude, clamped to [0, 1].

    ``stems_mag`` is a sequence (or stacked array) of per-stem magnitude
    spectrograms of identical shape.
    """
    mags = [np.abs(np.asarray(m)) for m in stems_mag]
    if not mags or len({m.shape for m in mags}) != 1:
        raise ShapeError("stem spectrograms must share one shape")
    total = np.sum(mags, axis=0)
    target = np.sum([mags[i] for i in target_indices], axis=0) if len(target_indices) else np.zeros_like(total)
    return TFMask(np.clip(target / (total + floor), 0.0, 1.0), cfg)


def apply_mask(mixture: AudioClip, mask: TFMask) -> AudioClip:
    """Mask the mixture STFT (keeping its phase) and resynthesise."""
    spec = stft(mixture, mask.cfg)
    if spec.shape != mask.values.shape:
        raise ShapeError(f"mask shape {mask.values.shape} does not match STFT shape {spec.shape}")
    return mixture.with_samples(istft(spec * mask.values, mask.cfg, mixture.num_frames))


def _kept_indices(scene: MixtureScene, operator: str) -> tuple[int, ...]:
    if operator == "extract":
        return scene.target_indices
    if operator == "remove":
        if not scene.complement_indices:
            raise InvalidOperatorError("removal of every stem leaves nothing")
        return scene.complement_indices
    raise InvalidOperatorError(f"unknown operator {operator!r}")


def oracle_separate(scene: MixtureScene, operator: str, cfg: SpectroConfig = SEPARATION_CONFIG,
                    mixture: AudioClip | None = None) -> AudioClip:
    """IRM built from the scene's ground-truth stems, applied to its mixture.

    ``mixture`` overrides the rendered (unperturbed) mixture, e.g. with the
    perturbed file written by the simulator.
    """
    stems = render_stems(scene)
    if mixture is None:
        mixture = AudioClip.mono(stems.sum(axis=0), scene.sample_rate)
    mags = [np.abs(stft(AudioClip.mono(s, scene.sample_rate), cfg)) for s in stems]
    return apply_mask(mixture, irm_mask(mags, _kept_indices(scene, operator), cfg=cfg))


def spectral_gate(mixture: AudioClip, noise_profile: AudioClip, over_subtraction: float = 1.0,
                  floor: float = 0.05, cfg: SpectroConfig = SEPARATION_CONFIG) -> AudioClip:
    """Per-bin gain ``max(floor, 1 - over_subtraction * mean_noise_mag / |X|)``."""
    require_non_silent(noise_profile.samples, "noise profile")
    noise_mean = np.mean(np.abs(stft(noise_profile, cfg)), axis=0)
    spec = stft(mixture, cfg)
    mag = np.abs(spec)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = 1.0 - over_subtraction * noise_mean[None, :] / mag
    gain = np.where(mag > 0, gain, floor)
    gain = np.minimum(1.0, np.maximum(floor, gain))
    return mixture.with_samples(istft(spec * gain, cfg, mixture.num_frames))


def gate_separate(scene: MixtureScene, operator: str, mixture: AudioClip | None = None,
                  over_subtraction: float = 1.0, floor: float = 0.05,
                  cfg: SpectroConfig = SEPARATION_CONFIG) -> AudioClip:
    """Spectral gate whose noise profile is the sum of the stems to suppress."""
    keep = set(_kept_indices(scene, operator))
    stems = render_stems(scene)
    if mixture is None:
        mixture = AudioClip.mono(stems.sum(axis=0), scene.sample_rate)
    drop = [i for i in range(len(scene.stems)) if i not in keep]
    if not drop:
        return mixture
    profile = AudioClip.mono(stems[drop].sum(axis=0), scene.sample_rate)
    return spectral_gate(mixture, profile, over_subtraction, floor, cfg)
