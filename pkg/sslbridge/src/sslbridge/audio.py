"""Audio loading for model input: 16 kHz mono float."""

from __future__ import annotations

import wave
from fractions import Fraction

import numpy as np
from scipy.signal import resample_poly

MODEL_SAMPLE_RATE = 16000


def load_wav_16k(path) -> np.ndarray:
    """Read PCM 16-bit WAV (first channel) and resample to 16 kHz."""
    with wave.open(str(path), "rb") as fh:
        if fh.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit PCM, got {8 * fh.getsampwidth()}-bit")
        n_channels = fh.getnchannels()
        rate = fh.getframerate()
        raw = fh.readframes(fh.getnframes())
    data = np.frombuffer(raw, dtype="<i2")
    if n_channels > 1:
        data = data[::n_channels]
    samples = data.astype(np.float64) / 32768.0
    if rate != MODEL_SAMPLE_RATE:
        ratio = (Fraction(MODEL_SAMPLE_RATE) / Fraction(rate)).limit_denominator(1 << 16)
        samples = resample_poly(samples, ratio.numerator, ratio.denominator)
    return samples
