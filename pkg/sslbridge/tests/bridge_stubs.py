"""Deterministic test doubles and WAV helpers for the exporter tests."""

import wave

import numpy as np

from sslbridge.models import FrameExtractor, SpeakerExtractor


def write_wav(path, samples, rate=16000):
    pcm = np.round(np.clip(samples, -1.0, 32767.0 / 32768.0) * 32768.0).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(rate)
        fh.writeframes(pcm.tobytes())


class StubFrameExtractor(FrameExtractor):
    """Deterministic stand-in: seeded random projection of frame energies."""

    name = "stub"
    version = ""
    frame_rate_hz = 50.0
    dim = 7

    def __init__(self):
        rng = np.random.default_rng(1234)
        self._proj = rng.normal(size=(1, self.dim))

    def extract(self, samples):
        hop = int(16000 / self.frame_rate_hz)
        n = max(1, len(samples) // hop)
        energies = np.array([np.mean(samples[i * hop:(i + 1) * hop] ** 2)
                             for i in range(n)])[:, None]
        return np.log1p(energies) @ self._proj + energies


class StubSpeakerExtractor(SpeakerExtractor):
    version = ""
    dim = 8

    def embed(self, samples):
        rng = np.random.default_rng(int(len(samples)))
        return rng.normal(size=self.dim) + float(np.mean(samples ** 2))
