"""Batch export of features and speaker embeddings.

The audio list is UTF-8 text, one utterance per line:

    utterance_id <tab> subject_id <tab> wav_path

with "#" comments allowed; relative wav paths resolve against the list
file's directory. Outputs are <utterance_id>.aaif under out_dir, and
for x-vectors <utterance_id>.aaix under out_dir/xvectors/utt plus one
mean <subject_id>.aaix per subject under out_dir/xvectors/spk.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import load_wav_16k
from .formats import write_embedding_file, write_feature_file
from .models import (FrameExtractor, SpeakerExtractor, load_frame_extractor,
                     load_speaker_extractor)


@dataclass(frozen=True)
class AudioItem:
    utterance_id: str
    subject_id: str
    path: Path


@dataclass
class ExportJob:
    model_name: str
    audio_list: list[AudioItem]
    out_dir: Path
    device: str = "cpu"

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        seen = set()
        for item in self.audio_list:
            if item.utterance_id in seen:
                raise ValueError(f"duplicate utterance_id {item.utterance_id!r}")
            seen.add(item.utterance_id)


def read_audio_list(path) -> list[AudioItem]:
    path = Path(path)
    items = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(fields)}")
        wav = Path(fields[2])
        if not wav.is_absolute():
            wav = path.parent / wav
        items.append(AudioItem(fields[0], fields[1], wav))
    if not items:
        raise ValueError(f"{path}: audio list is empty")
    return items


def export_features(job: ExportJob, extractor: FrameExtractor | None = None) -> list[Path]:
    """Write one .aaif of final-layer features per utterance.

    The model's native frame rate goes into frame_rate_hz and its name
    (plus version, when the backend reports one) into source_tag.
    """
    if extractor is None:
        extractor = load_frame_extractor(job.model_name, job.device)
    job.out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for item in job.audio_list:
        samples = load_wav_16k(item.path)
        frames = np.asarray(extractor.extract(samples))
        out_path = job.out_dir / f"{item.utterance_id}.aaif"
        write_feature_file(out_path, frames, extractor.frame_rate_hz, extractor.source_tag)
        written.append(out_path)
    return written


def export_xvectors(job: ExportJob, extractor: SpeakerExtractor | None = None) -> list[Path]:
    """Write one embedding per utterance plus one mean embedding per subject."""
    if extractor is None:
        extractor = load_speaker_extractor(job.device)
    utt_dir = job.out_dir / "xvectors" / "utt"
    spk_dir = job.out_dir / "xvectors" / "spk"
    utt_dir.mkdir(parents=True, exist_ok=True)
    spk_dir.mkdir(parents=True, exist_ok=True)
    written = []
    by_subject: dict[str, list[np.ndarray]] = {}
    for item in job.audio_list:
        samples = load_wav_16k(item.path)
        emb = np.asarray(extractor.embed(samples), dtype=np.float64).reshape(-1)
        out_path = utt_dir / f"{item.utterance_id}.aaix"
        write_embedding_file(out_path, emb, item.subject_id)
        written.append(out_path)
        by_subject.setdefault(item.subject_id, []).append(emb)
    for subject_id in sorted(by_subject):
        mean = np.mean(np.stack(by_subject[subject_id]), axis=0)
        out_path = spk_dir / f"{subject_id}.aaix"
        write_embedding_file(out_path, mean, subject_id)
        written.append(out_path)
    return written
