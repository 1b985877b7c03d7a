"""
Control curves from a synthetic vocal imitation
===============================================

A gliding hum is augmented the way imitations are during training, then
summarised as 40 Hz RMS and pitch curves under every median filter size.
"""

import numpy as np

from sepbench.audio import AudioClip
from sepbench.imitation import (MEDIAN_SIZES, add_ambient_noise, control_curves, pitch_shift,
                                time_shift)

SR = 44100
rng = np.random.default_rng(5)

# a 3 s hum gliding from 220 Hz to 330 Hz with a slow tremolo
t = np.arange(3 * SR) / SR
f0 = 220 * (1.5 ** (t / t[-1]))
phase = 2 * np.pi * np.cumsum(f0) / SR
hum = AudioClip.mono(0.3 * (1 + 0.5 * np.sin(2 * np.pi * 3 * t)) * np.sin(phase), SR)

# imitation variance: late start, sung a little higher, in a noisy room
noise = AudioClip.mono(rng.standard_normal(SR), SR)
imitation = add_ambient_noise(pitch_shift(time_shift(hum, 0.25), 2.0), noise, 20.0, rng)

for size in MEDIAN_SIZES:
    curves = control_curves(imitation, median_size=size)
    voiced = curves.pitch_hz[curves.pitch_hz > 0]
    print(f"median {size:>2}: {len(curves)} frames, "
          f"rms {curves.rms.min():.3f}..{curves.rms.max():.3f}, "
          f"pitch {voiced.min():.0f}..{voiced.max():.0f} Hz ({voiced.size} voiced)")

# on a steady hum, two semitones up should scale pitch by about 1.12
steady = AudioClip.mono(0.3 * np.sin(2 * np.pi * 220 * t), SR)
plain = control_curves(steady).pitch_hz
shifted = control_curves(pitch_shift(steady, 2.0)).pitch_hz
both = (plain > 0) & (shifted > 0)
print("median pitch ratio after +2 st: %.4f (expected %.4f)"
      % (np.median(shifted[both] / plain[both]), 2 ** (2 / 12)))
