"""Deterministic signal-processing primitives.

Windowed-sinc FIR design, zero-delay filtering, anti-aliased decimation,
rational resampling, and MFCC extraction. Everything here is a pure
function of its inputs.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.signal import resample_poly

from .errors import FormatError
from .featio import FeatureSequence

MFCC_SAMPLE_RATE_HZ = 16000.0
MEL_FMIN_HZ = 20.0
MEL_FMAX_HZ = 7600.0
LOG_FLOOR = 1e-10

# Anti-alias filter used inside decimate(): cutoff at 80% of the
# post-decimation Nyquist, 101 taps (>40 dB stopband on short signals).
ANTIALIAS_TAPS = 101
ANTIALIAS_CUTOFF_RATIO = 0.8


@dataclass
class Waveform:
    """Mono audio signal with its sample rate."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples contain non-finite values")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class FirFilter:
    """Linear-phase FIR filter; odd tap count, taps symmetric about center."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        object.__setattr__(self, "taps", taps)
        if taps.size % 2 == 0:
            raise ValueError(f"tap count must be odd, got {taps.size}")
        if not np.array_equal(taps, taps[::-1]):
            raise ValueError("taps must be symmetric about the center")

    @property
    def group_delay_samples(self) -> int:
        return (self.taps.size - 1) // 2

    @property
    def dc_gain(self) -> float:
        return float(self.taps.sum())


@dataclass(frozen=True)
class MfccConfig:
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_mels: int = 23
    n_coeffs: int = 13
    preemphasis: float = 0.97
    fft_size: int = 512

    def __post_init__(self):
        if self.hop_ms > self.window_ms:
            raise ValueError("hop_ms must not exceed window_ms")
        if self.n_coeffs > self.n_mels:
            raise ValueError("n_coeffs must not exceed n_mels")
        if not 0.0 <= self.preemphasis < 1.0:
            raise ValueError("preemphasis must be in [0, 1)")
        if self.fft_size < 1 or self.fft_size & (self.fft_size - 1):
            raise ValueError("fft_size must be a power of two")


def design_lowpass_fir(cutoff_hz: float, fs_hz: float, n_taps: int) -> FirFilter:
    """Design a Hamming-windowed sinc low-pass filter with unit DC gain.

    Args:
        cutoff_hz: -6 dB cutoff, must lie strictly below Nyquist.
        fs_hz: sample rate the cutoff is expressed against.
        n_taps: odd filter length, >= 11.
    """
    if fs_hz <= 0:
        raise ValueError(f"fs_hz must be positive, got {fs_hz}")
    if not 0.0 < cutoff_hz < fs_hz / 2.0:
        raise ValueError(f"cutoff {cutoff_hz} Hz must be in (0, {fs_hz / 2.0}) Hz")
    if n_taps < 11 or n_taps % 2 == 0:
        raise ValueError(f"n_taps must be odd and >= 11, got {n_taps}")
    m = np.arange(n_taps) - (n_taps - 1) / 2.0
    fc = cutoff_hz / fs_hz
    taps = 2.0 * fc * np.sinc(2.0 * fc * m) * np.hamming(n_taps)
    # Symmetrize before normalizing so mirrored taps compare bitwise equal.
    taps = 0.5 * (taps + taps[::-1])
    taps /= taps.sum()
    return FirFilter(taps)


def frequency_response(filt: FirFilter, freqs_hz, fs_hz: float) -> np.ndarray:
    """Complex response of the taps at the given frequencies (direct DFT)."""
    freqs = np.atleast_1d(np.asarray(freqs_hz, dtype=np.float64))
    n = np.arange(filt.taps.size)
    phase = -2j * np.pi * np.outer(freqs, n) / fs_hz
    return np.exp(phase) @ filt.taps


def filter_zero_delay(x, filt: FirFilter) -> np.ndarray:
    """Filter a 1-D signal with symmetric edge padding and delay trimming.

    The output has the same length as the input and is aligned with it
    (no group delay); a delta impulse comes back as the taps centered at
    the impulse index.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size <= filt.taps.size:
        raise ValueError(f"signal length {x.size} must exceed filter length {filt.taps.size}")
    g = filt.group_delay_samples
    padded = np.pad(x, g, mode="symmetric")
    return np.convolve(padded, filt.taps, mode="valid")


def decimate(x, factor: int) -> np.ndarray:
    """Anti-alias low-pass then keep every factor-th sample.

    Output length is ceil(len(x) / factor); factor 1 is the identity.
    """
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise ValueError(f"factor must be a positive integer, got {factor!r}")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if factor == 1:
        return x.copy()
    cutoff = ANTIALIAS_CUTOFF_RATIO * (0.5 / factor)
    filt = design_lowpass_fir(cutoff, 1.0, ANTIALIAS_TAPS)
    return filter_zero_delay(x, filt)[::factor]


def resample_to(x: Waveform, target_hz: float) -> Waveform:
    """Windowed-sinc rational resampling; identity when rates match."""
    if target_hz <= 0:
        raise ValueError(f"target_hz must be positive, got {target_hz}")
    if target_hz == x.sample_rate_hz:
        return Waveform(x.samples.copy(), x.sample_rate_hz)
    ratio = (Fraction(target_hz) / Fraction(x.sample_rate_hz)).limit_denominator(1 << 16)
    samples = resample_poly(x.samples, ratio.numerator, ratio.denominator)
    return Waveform(samples, target_hz)


# ---------------------------------------------------------------------------
# MFCC

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, fft_size: int, fs_hz: float,
                   fmin_hz: float = MEL_FMIN_HZ, fmax_hz: float = MEL_FMAX_HZ) -> np.ndarray:
    """Triangular mel filterbank evaluated at rfft bin frequencies.

    Returns an (n_mels, fft_size//2 + 1) weight matrix; triangles are
    uniform on the mel scale and cross at half height.
    """
    edges_mel = np.linspace(hz_to_mel(fmin_hz), hz_to_mel(fmax_hz), n_mels + 2)
    edges_hz = mel_to_hz(edges_mel)
    bins_hz = np.arange(fft_size // 2 + 1) * fs_hz / fft_size
    fb = np.zeros((n_mels, bins_hz.size))
    for m in range(n_mels):
        lo, center, hi = edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]
        up = (bins_hz - lo) / (center - lo)
        down = (hi - bins_hz) / (hi - center)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def mel_filter_centers_hz(n_mels: int, fmin_hz: float = MEL_FMIN_HZ,
                          fmax_hz: float = MEL_FMAX_HZ) -> np.ndarray:
    """Center frequencies of mel_filterbank's triangles, in Hz."""
    edges_mel = np.linspace(hz_to_mel(fmin_hz), hz_to_mel(fmax_hz), n_mels + 2)
    return mel_to_hz(edges_mel[1:-1])


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal type-II DCT matrix (rows are basis vectors)."""
    j = np.arange(n)
    k = j.reshape(-1, 1)
    mat = np.sqrt(2.0 / n) * np.cos(np.pi * (j + 0.5) * k / n)
    mat[0] /= np.sqrt(2.0)
    return mat


def frame_count(n_samples: int, win: int, hop: int) -> int:
    return (n_samples - win) // hop + 1


def frame_signal(x: np.ndarray, win: int, hop: int) -> np.ndarray:
    n = frame_count(x.size, win, hop)
    idx = np.arange(win)[None, :] + hop * np.arange(n)[:, None]
    return x[idx]


def mel_energies(x: Waveform, cfg: MfccConfig = MfccConfig()) -> np.ndarray:
    """Per-frame mel filterbank energies (pre-emphasis, Hamming, power FFT)."""
    if x.sample_rate_hz != MFCC_SAMPLE_RATE_HZ:
        raise ValueError(f"expected {MFCC_SAMPLE_RATE_HZ:.0f} Hz audio, got {x.sample_rate_hz}")
    fs = x.sample_rate_hz
    win = int(round(fs * cfg.window_ms / 1000.0))
    hop = int(round(fs * cfg.hop_ms / 1000.0))
    if cfg.fft_size < win:
        raise ValueError(f"fft_size {cfg.fft_size} smaller than window {win}")
    samples = x.samples
    if samples.size < win:
        raise ValueError(f"audio shorter than one analysis window ({samples.size} < {win} samples)")
    emphasized = np.append(samples[0], samples[1:] - cfg.preemphasis * samples[:-1])
    frames = frame_signal(emphasized, win, hop) * np.hamming(win)
    power = np.abs(np.fft.rfft(frames, cfg.fft_size, axis=1)) ** 2
    fb = mel_filterbank(cfg.n_mels, cfg.fft_size, fs)
    return power @ fb.T


def mfcc(x: Waveform, cfg: MfccConfig = MfccConfig()) -> FeatureSequence:
    """Mel-frequency cepstral coefficients at 100 frames per second.

    Per frame: pre-emphasis, Hamming window, power spectrum, triangular
    mel filterbank on [20, 7600] Hz, floored log, orthonormal type-II DCT
    keeping the first n_coeffs coefficients.
    """
    energies = mel_energies(x, cfg)
    log_e = np.log(np.maximum(energies, LOG_FLOOR))
    coeffs = log_e @ dct_matrix(cfg.n_mels)[:cfg.n_coeffs].T
    return FeatureSequence(coeffs, 1000.0 / cfg.hop_ms, "mfcc")


# ---------------------------------------------------------------------------
# WAV I/O

def read_wav(path) -> Waveform:
    """Read a RIFF/WAVE file: PCM 16-bit signed little-endian, first channel.

    Amplitudes are normalized to [-1, 1) by dividing by 32768.
    """
    try:
        with wave.open(str(path), "rb") as fh:
            if fh.getsampwidth() != 2:
                raise FormatError(f"{path}: expected 16-bit PCM, got {8 * fh.getsampwidth()}-bit")
            if fh.getcomptype() != "NONE":
                raise FormatError(f"{path}: compressed WAV not supported")
            n_channels = fh.getnchannels()
            rate = fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except wave.Error as exc:
        raise FormatError(f"{path}: not a valid RIFF/WAVE file ({exc})") from exc
    data = np.frombuffer(raw, dtype="<i2")
    if n_channels > 1:
        data = data[::n_channels]
    return Waveform(data.astype(np.float64) / 32768.0, float(rate))


def write_wav(path, x: Waveform) -> None:
    """Write mono PCM 16-bit WAV (values clipped to [-1, 1))."""
    scaled = np.clip(x.samples, -1.0, 32767.0 / 32768.0)
    pcm = np.round(scaled * 32768.0).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(round(x.sample_rate_hz)))
        fh.writeframes(pcm.tobytes())
