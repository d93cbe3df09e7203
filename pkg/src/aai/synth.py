"""Synthetic acoustic-articulatory corpus with a known forward map.

Trajectories are band-limited (< 10 Hz) sums of seeded sinusoids per
channel at 200 Hz; a severity coefficient in [0, 1] scales amplitude and
frequency by (1 - 0.5 * severity). Acoustic frames at 100 Hz are
tanh(W @ x + b) plus Gaussian noise with one fixed subject-independent
map W, so the inversion the toolkit learns is nonlinear but well posed,
and its best achievable correlation can be estimated from the known
inverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import featio
from .artic import NUM_CHANNELS
from .featio import (CorpusManifest, FeatureSequence, ManifestEntry, SpeakerEmbedding,
                     assign_folds, save_manifest, split_seen, stable_seed,
                     write_embedding_file, write_feature_file)

RAW_RATE_HZ = 200.0
FRAME_RATE_HZ = 100.0
EMBEDDING_DIM = 16
SINUSOIDS_PER_CHANNEL = 3
MAX_BASE_FREQ_HZ = 9.0
MIN_BASE_FREQ_HZ = 0.3
MAP_SCALE = 0.2


@dataclass
class SynthSpec:
    n_subjects: int = 4
    n_utterances_per_subject: int = 20
    duration_range_s: tuple[float, float] = (2.0, 4.0)
    acoustic_dim: int = 24
    severity: list[float] = field(default_factory=list)
    noise_std: float = 0.01
    seed: int = 0
    feature_tag: str = "synth"
    subject_offset_scale: float = 0.0

    def __post_init__(self):
        if self.n_subjects < 1 or self.n_utterances_per_subject < 1 or self.acoustic_dim < 1:
            raise ValueError("all counts must be >= 1")
        if not self.severity:
            # alternate healthy-like and increasingly affected subjects
            self.severity = [0.0 if s % 2 == 0 else 0.3 + 0.3 * ((s // 2) % 2)
                             for s in range(self.n_subjects)]
        if len(self.severity) != self.n_subjects:
            raise ValueError("severity must list one value per subject")
        if any(not 0.0 <= v <= 1.0 for v in self.severity):
            raise ValueError("severity values must lie in [0, 1]")
        lo, hi = self.duration_range_s
        if lo > hi or lo <= 0:
            raise ValueError("invalid duration range")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


def subject_name(index: int) -> str:
    return f"S{index:02d}"


def _acoustic_map(spec: SynthSpec):
    """The fixed subject-independent forward map (W, b)."""
    rng = np.random.default_rng(stable_seed(spec.seed, "acoustic-map"))
    w = rng.normal(0.0, MAP_SCALE, size=(spec.acoustic_dim, NUM_CHANNELS))
    b = rng.uniform(-0.2, 0.2, size=spec.acoustic_dim)
    return w, b


def _utterance_sinusoids(spec: SynthSpec, subject: int, index: int):
    """Seeded per-channel sinusoid parameters and duration for one utterance."""
    rng = np.random.default_rng(stable_seed(spec.seed, "utt", subject, index))
    lo, hi = spec.duration_range_s
    duration = rng.uniform(lo, hi)
    sev_scale = 1.0 - 0.5 * spec.severity[subject]
    k = SINUSOIDS_PER_CHANNEL
    freqs = rng.uniform(MIN_BASE_FREQ_HZ, MAX_BASE_FREQ_HZ, size=(NUM_CHANNELS, k)) * sev_scale
    amps = rng.uniform(0.2, 0.6, size=(NUM_CHANNELS, k)) * sev_scale
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(NUM_CHANNELS, k))
    offsets = rng.uniform(-1.5, 1.5, size=NUM_CHANNELS)
    if spec.subject_offset_scale:
        subject_rng = np.random.default_rng(stable_seed(spec.seed, "subject-offset", subject))
        offsets = offsets + spec.subject_offset_scale * subject_rng.uniform(-1.0, 1.0, size=NUM_CHANNELS)
    return duration, freqs, amps, phases, offsets


def _evaluate_trajectory(times: np.ndarray, freqs, amps, phases, offsets) -> np.ndarray:
    """Evaluate the sinusoid mixture analytically at the given times."""
    out = np.empty((times.size, NUM_CHANNELS))
    for c in range(NUM_CHANNELS):
        phase = 2.0 * np.pi * np.outer(times, freqs[c]) + phases[c]
        out[:, c] = (amps[c] * np.sin(phase)).sum(axis=1) + offsets[c]
    return out


def utterance_signals(spec: SynthSpec, subject: int, index: int):
    """Raw 200 Hz trajectory and 100 Hz acoustic frames for one utterance.

    The acoustic frames sample the same analytic trajectory at 100 Hz
    (every second 200 Hz sample), push it through the fixed tanh map, and
    add seeded Gaussian noise.
    """
    duration, freqs, amps, phases, offsets = _utterance_sinusoids(spec, subject, index)
    n200 = int(round(duration * RAW_RATE_HZ))
    raw = _evaluate_trajectory(np.arange(n200) / RAW_RATE_HZ, freqs, amps, phases, offsets)
    n100 = -(-n200 // 2)  # ceil, matches decimation length
    x100 = _evaluate_trajectory(np.arange(n100) / FRAME_RATE_HZ, freqs, amps, phases, offsets)
    w, b = _acoustic_map(spec)
    acoustic = np.tanh(x100 @ w.T + b)
    if spec.noise_std > 0:
        noise_rng = np.random.default_rng(stable_seed(spec.seed, "noise", subject, index))
        acoustic = acoustic + noise_rng.normal(0.0, spec.noise_std, size=acoustic.shape)
    return raw, acoustic


def subject_embedding(spec: SynthSpec, subject: int) -> SpeakerEmbedding:
    """Seeded unit vector per subject with the severity as its last coordinate."""
    rng = np.random.default_rng(stable_seed(spec.seed, "embedding", subject))
    vec = rng.normal(size=EMBEDDING_DIM - 1)
    vec /= np.linalg.norm(vec)
    values = np.concatenate([vec, [spec.severity[subject]]])
    return SpeakerEmbedding(values, subject_name(subject))


def generate_corpus(spec: SynthSpec, out_dir, test_fraction: float = 0.10,
                    k_folds: int = 5) -> CorpusManifest:
    """Write feature/trajectory/embedding files plus a split, folded manifest.

    Layout under out_dir: feats/<utt>.aaif (acoustic), ema/<utt>.aaif
    (raw 200 Hz trajectory), emb/<subject>.aaix, manifest.tsv, train.cfg.
    """
    out_dir = Path(out_dir)
    for sub in ("feats", "ema", "emb"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    entries = []
    for s in range(spec.n_subjects):
        sid = subject_name(s)
        group = "patient" if spec.severity[s] > 0 else "healthy"
        write_embedding_file(out_dir / "emb" / f"{sid}.aaix", subject_embedding(spec, s))
        for u in range(spec.n_utterances_per_subject):
            utt_id = f"{sid}_U{u:03d}"
            raw, acoustic = utterance_signals(spec, s, u)
            write_feature_file(out_dir / "ema" / f"{utt_id}.aaif",
                               FeatureSequence(raw, RAW_RATE_HZ, "ema"))
            write_feature_file(out_dir / "feats" / f"{utt_id}.aaif",
                               FeatureSequence(acoustic, FRAME_RATE_HZ, spec.feature_tag))
            entries.append(ManifestEntry(
                utterance_id=utt_id, subject_id=sid, group=group,
                acoustic_path=f"feats/{utt_id}.aaif",
                articulatory_path=f"ema/{utt_id}.aaif",
                embedding_path=f"emb/{sid}.aaix",
            ))
    manifest = CorpusManifest(entries, root_dir=out_dir)
    manifest = split_seen(manifest, test_fraction=test_fraction, seed=spec.seed)
    manifest = assign_folds(manifest, k=k_folds, seed=spec.seed)
    save_manifest(manifest, out_dir / "manifest.tsv")
    # paths relative to the config file keep the corpus relocatable
    (out_dir / "train.cfg").write_text(
        "[corpus]\n"
        "manifest = manifest.tsv\n"
        "out_dir = runs\n\n"
        "[features]\n"
        f"tag = {spec.feature_tag}\n\n"
        "[scheme]\n"
        "name = pooled\n\n"
        "[control]\n"
        f"seed = {spec.seed}\n",
        encoding="utf-8",
    )
    return featio.load_manifest(out_dir / "manifest.tsv")


def oracle_cc_bound(spec: SynthSpec, n_samples: int = 20000) -> float:
    """Best achievable mean CC, estimated by inverting the known map.

    Draws a large seeded sample of trajectory frames, pushes them through
    the forward map with noise, applies the closed-form inverse
    (pseudo-inverse of W after atanh), and reports the mean per-channel
    correlation between recovered and true positions.
    """
    rng = np.random.default_rng(stable_seed(spec.seed, "oracle"))
    w, b = _acoustic_map(spec)
    # frame sample matching the generator's amplitude/offset distribution
    amps = rng.uniform(0.2, 0.6, size=(n_samples, NUM_CHANNELS, SINUSOIDS_PER_CHANNEL))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(n_samples, NUM_CHANNELS, SINUSOIDS_PER_CHANNEL))
    offsets = rng.uniform(-1.5, 1.5, size=(n_samples, NUM_CHANNELS))
    x = (amps * np.sin(phases)).sum(axis=2) + offsets
    y = np.tanh(x @ w.T + b)
    if spec.noise_std > 0:
        y = y + rng.normal(0.0, spec.noise_std, size=y.shape)
    y = np.clip(y, -1.0 + 1e-9, 1.0 - 1e-9)
    x_hat = (np.arctanh(y) - b) @ np.linalg.pinv(w).T
    ccs = []
    for c in range(NUM_CHANNELS):
        xc = x[:, c] - x[:, c].mean()
        hc = x_hat[:, c] - x_hat[:, c].mean()
        ccs.append(float(np.mean(xc * hc) / (xc.std() * hc.std())))
    return float(np.clip(np.mean(ccs), -1.0, 1.0))
