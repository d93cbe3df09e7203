"""Articulatory trajectory handling.

Canonical 12-channel layout (six sensor coils, X and Y each), kinematic
augmentation to 24 dimensions, and raw-trajectory preprocessing from
200 Hz recordings down to filtered 100 Hz.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsp

ARTICULATORS = ("UL", "LL", "JAW", "TT", "TB", "TD")
AXES = ("x", "y")
CHANNELS = tuple(f"{a}_{ax}" for a in ARTICULATORS for ax in AXES)
NUM_CHANNELS = len(CHANNELS)  # 12
NUM_AUGMENTED = 24

RAW_RATE_HZ = 200.0
RATE_HZ = 100.0
LOWPASS_CUTOFF_HZ = 25.0
LOWPASS_TAPS = 101
DELTA_WINDOW = 2

AUGMENTED_COLUMNS = CHANNELS + tuple(f"{a}_vel" for a in ARTICULATORS) \
    + tuple(f"{a}_acc" for a in ARTICULATORS)


@dataclass
class ArticulatoryTrajectory:
    """T x 12 position matrix (millimeters) at 100 Hz, canonical order."""

    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[1] != NUM_CHANNELS:
            raise ValueError(f"expected T x {NUM_CHANNELS} matrix, got shape {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("trajectory contains non-finite values")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class AugmentedTrajectory:
    """T x 24 matrix: 12 positions, 6 per-articulator speeds, 6 speed deltas."""

    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[1] != NUM_AUGMENTED:
            raise ValueError(f"expected T x {NUM_AUGMENTED} matrix, got shape {self.frames.shape}")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def positions(self) -> np.ndarray:
        return self.frames[:, :NUM_CHANNELS]


def regression_delta(x, window: int = DELTA_WINDOW) -> np.ndarray:
    """Regression-style delta over a T x D matrix, edges replicated.

    d_t = sum_{n=1..N} n * (x_{t+n} - x_{t-n}) / (2 * sum_{n=1..N} n^2)
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    t = x.shape[0]
    padded = np.pad(x, ((window, window), (0, 0)), mode="edge")
    num = np.zeros_like(x)
    for n in range(1, window + 1):
        num += n * (padded[window + n:window + n + t] - padded[window - n:window - n + t])
    out = num / (2.0 * sum(n * n for n in range(1, window + 1)))
    return out[:, 0] if squeeze else out


def augment_kinematics(traj: ArticulatoryTrajectory) -> AugmentedTrajectory:
    """Append per-articulator speed and its delta to the 12 position columns.

    Speed for articulator a is sqrt(dX_a^2 + dY_a^2) from regression
    deltas of the position columns; acceleration is the regression delta
    of the speed column. Positions pass through unchanged.
    """
    pos = traj.frames
    d = regression_delta(pos, DELTA_WINDOW)
    vel = np.sqrt(d[:, 0::2] ** 2 + d[:, 1::2] ** 2)  # T x 6
    acc = regression_delta(vel, DELTA_WINDOW)
    return AugmentedTrajectory(np.hstack([pos, vel, acc]))


def preprocess_trajectory(raw) -> ArticulatoryTrajectory:
    """Downsample a raw T x 12 trajectory from 200 Hz to 100 Hz and low-pass
    filter it at 25 Hz (zero-delay), per column."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[1] != NUM_CHANNELS:
        raise ValueError(f"expected T x {NUM_CHANNELS} matrix, got shape {raw.shape}")
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw trajectory contains non-finite values")
    if raw.shape[0] <= 2 * dsp.ANTIALIAS_TAPS:
        raise ValueError(
            f"raw trajectory too short to filter: {raw.shape[0]} frames, "
            f"need more than {2 * dsp.ANTIALIAS_TAPS}"
        )
    lowpass = dsp.design_lowpass_fir(LOWPASS_CUTOFF_HZ, RATE_HZ, LOWPASS_TAPS)
    columns = []
    for c in range(NUM_CHANNELS):
        down = dsp.decimate(raw[:, c], 2)
        if down.size <= LOWPASS_TAPS:
            raise ValueError(
                f"decimated trajectory too short to filter: {down.size} frames, "
                f"need more than {LOWPASS_TAPS}"
            )
        columns.append(dsp.filter_zero_delay(down, lowpass))
    return ArticulatoryTrajectory(np.column_stack(columns))
