"""Feature/embedding file formats, corpus manifests, per-utterance
normalization, and frame-rate alignment.

Binary formats (little-endian):

  .aaif  magic "AAIF", version u32=1, n_frames u32, dim u32,
         frame_rate_hz f32, source_tag (u16 length + UTF-8 bytes),
         then n_frames*dim f32 values row-major.
  .aaix  magic "AAIX", version u32=1, dim u32,
         subject_id (u16 length + UTF-8 bytes), dim f32 values.

Manifest: UTF-8 text, one record per line, tab-separated fields
  utterance_id  subject_id  group  acoustic_path  articulatory_path
  embedding_path  split  fold
with "#" comment lines allowed and "-" for an unassigned fold.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError

FEATURE_MAGIC = b"AAIF"
EMBEDDING_MAGIC = b"AAIX"
FORMAT_VERSION = 1
MVN_STD_FLOOR = 1e-8

GROUPS = ("healthy", "patient")
SPLITS = ("train", "test")


@dataclass
class FeatureSequence:
    """Time-major matrix of per-frame features at a declared frame rate."""

    frames: np.ndarray
    frame_rate_hz: float
    source_tag: str = ""

    def __post_init__(self):
        self.frames = np.atleast_2d(np.asarray(self.frames))
        if self.frames.ndim != 2 or self.frames.shape[0] < 1 or self.frames.shape[1] < 1:
            raise ValueError(f"frames must be a T x D matrix with T,D >= 1, got shape {self.frames.shape}")
        if self.frame_rate_hz <= 0:
            raise ValueError(f"frame_rate_hz must be positive, got {self.frame_rate_hz}")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("frames contain non-finite values")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass
class SpeakerEmbedding:
    """Fixed-length vector identifying a subject."""

    values: np.ndarray
    subject_id: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.values.size < 1:
            raise ValueError("embedding must have at least one value")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("embedding contains non-finite values")

    @property
    def dim(self) -> int:
        return self.values.size


def stable_seed(*parts) -> int:
    """Derive a deterministic 64-bit seed from arbitrary hashable parts.

    Keyed hashing (not Python's randomized hash) so that split/fold
    assignments for one subject never depend on the other subjects.
    """
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


# ---------------------------------------------------------------------------
# binary feature / embedding files

def write_feature_file(path, seq: FeatureSequence) -> None:
    """Write a FeatureSequence as an .aaif file (payload stored as f32)."""
    frames = np.ascontiguousarray(seq.frames, dtype="<f4")
    if not np.all(np.isfinite(frames)):
        raise ValueError("refusing to write non-finite frames")
    tag = seq.source_tag.encode("utf-8")
    if len(tag) > 0xFFFF:
        raise ValueError("source_tag too long")
    header = FEATURE_MAGIC + struct.pack(
        "<IIIfH", FORMAT_VERSION, frames.shape[0], frames.shape[1],
        float(seq.frame_rate_hz), len(tag),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(tag)
        fh.write(frames.tobytes())


def read_feature_file(path) -> FeatureSequence:
    """Read and validate an .aaif file; raises FormatError naming the offset."""
    blob = Path(path).read_bytes()
    if len(blob) < 4 or blob[:4] != FEATURE_MAGIC:
        raise FormatError(f"{path}: bad magic at offset 0 (expected AAIF)")
    fixed = struct.calcsize("<IIIfH")
    if len(blob) < 4 + fixed:
        raise FormatError(f"{path}: truncated header at offset {len(blob)}")
    version, n_frames, dim, rate, tag_len = struct.unpack_from("<IIIfH", blob, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version} at offset 4")
    offset = 4 + fixed
    if len(blob) < offset + tag_len:
        raise FormatError(f"{path}: truncated source_tag at offset {offset}")
    tag = blob[offset:offset + tag_len].decode("utf-8")
    offset += tag_len
    expected = n_frames * dim * 4
    if len(blob) - offset < expected:
        raise FormatError(
            f"{path}: truncated payload at offset {len(blob)}: "
            f"declared {n_frames}x{dim} needs {expected} bytes, found {len(blob) - offset}"
        )
    if len(blob) - offset > expected:
        raise FormatError(f"{path}: {len(blob) - offset - expected} trailing bytes after offset {offset + expected}")
    frames = np.frombuffer(blob, dtype="<f4", count=n_frames * dim, offset=offset)
    bad = np.where(~np.isfinite(frames))[0]
    if bad.size:
        raise FormatError(f"{path}: non-finite value at offset {offset + int(bad[0]) * 4}")
    return FeatureSequence(frames.reshape(n_frames, dim).copy(), rate, tag)


def write_embedding_file(path, emb: SpeakerEmbedding) -> None:
    values = np.ascontiguousarray(emb.values, dtype="<f4")
    sid = emb.subject_id.encode("utf-8")
    if len(sid) > 0xFFFF:
        raise ValueError("subject_id too long")
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC + struct.pack("<IIH", FORMAT_VERSION, values.size, len(sid)))
        fh.write(sid)
        fh.write(values.tobytes())


def read_embedding_file(path) -> SpeakerEmbedding:
    blob = Path(path).read_bytes()
    if len(blob) < 4 or blob[:4] != EMBEDDING_MAGIC:
        raise FormatError(f"{path}: bad magic at offset 0 (expected AAIX)")
    fixed = struct.calcsize("<IIH")
    if len(blob) < 4 + fixed:
        raise FormatError(f"{path}: truncated header at offset {len(blob)}")
    version, dim, sid_len = struct.unpack_from("<IIH", blob, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version} at offset 4")
    offset = 4 + fixed
    if len(blob) < offset + sid_len:
        raise FormatError(f"{path}: truncated subject_id at offset {offset}")
    sid = blob[offset:offset + sid_len].decode("utf-8")
    offset += sid_len
    expected = dim * 4
    if len(blob) - offset != expected:
        raise FormatError(
            f"{path}: payload size mismatch at offset {offset}: declared {dim} values, "
            f"found {(len(blob) - offset) // 4}"
        )
    values = np.frombuffer(blob, dtype="<f4", count=dim, offset=offset)
    bad = np.where(~np.isfinite(values))[0]
    if bad.size:
        raise FormatError(f"{path}: non-finite value at offset {offset + int(bad[0]) * 4}")
    return SpeakerEmbedding(values.astype(np.float64), sid)


# ---------------------------------------------------------------------------
# normalization and alignment

def mvn_utterance(seq: FeatureSequence) -> FeatureSequence:
    """Per-dimension mean/variance normalization over the utterance.

    Population (divide-by-T) standard deviation; dimensions with
    std <= 1e-8 are zeroed so constant channels cannot inject NaNs.
    """
    frames = np.asarray(seq.frames, dtype=np.float64)
    mean = frames.mean(axis=0)
    std = frames.std(axis=0)
    out = frames - mean
    live = std > MVN_STD_FLOOR
    out[:, live] /= std[live]
    out[:, ~live] = 0.0
    return FeatureSequence(out, seq.frame_rate_hz, seq.source_tag)


def align_frame_rate(seq: FeatureSequence, target_hz: float, target_len: int) -> FeatureSequence:
    """Linearly interpolate a sequence onto exactly target_len frames.

    Source and target grids both span [0, 1] uniformly, so endpoints map
    to endpoints. No-op when the length already matches.
    """
    if target_len < 1:
        raise ValueError(f"target_len must be >= 1, got {target_len}")
    if seq.num_frames < 2:
        raise ValueError("need at least 2 frames to interpolate")
    if seq.num_frames == target_len:
        return FeatureSequence(seq.frames.copy(), target_hz, seq.source_tag)
    src = np.linspace(0.0, 1.0, seq.num_frames)
    dst = np.linspace(0.0, 1.0, target_len)
    frames = np.asarray(seq.frames, dtype=np.float64)
    out = np.empty((target_len, seq.dim), dtype=np.float64)
    for d in range(seq.dim):
        out[:, d] = np.interp(dst, src, frames[:, d])
    return FeatureSequence(out, target_hz, seq.source_tag)


# ---------------------------------------------------------------------------
# corpus manifests

@dataclass(frozen=True)
class ManifestEntry:
    utterance_id: str
    subject_id: str
    group: str
    acoustic_path: str
    articulatory_path: str
    embedding_path: str
    split: str = "train"
    fold: int | None = None


@dataclass
class CorpusManifest:
    """Immutable index of utterances; paths resolve relative to root_dir."""

    entries: list[ManifestEntry]
    root_dir: Path = field(default_factory=Path)

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.utterance_id in seen:
                raise FormatError(f"duplicate utterance_id {e.utterance_id!r}")
            seen.add(e.utterance_id)
            if e.group not in GROUPS:
                raise FormatError(f"unknown group {e.group!r} for {e.utterance_id}")
            if e.split not in SPLITS:
                raise FormatError(f"unknown split {e.split!r} for {e.utterance_id}")

    def subjects(self) -> list[str]:
        return sorted({e.subject_id for e in self.entries})

    def group_of(self, subject_id: str) -> str:
        for e in self.entries:
            if e.subject_id == subject_id:
                return e.group
        raise KeyError(subject_id)

    def for_subject(self, subject_id: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.subject_id == subject_id]

    def train_entries(self, subject_id: str | None = None) -> list[ManifestEntry]:
        return [e for e in self.entries
                if e.split == "train" and (subject_id is None or e.subject_id == subject_id)]

    def test_entries(self, subject_id: str | None = None) -> list[ManifestEntry]:
        return [e for e in self.entries
                if e.split == "test" and (subject_id is None or e.subject_id == subject_id)]

    def entry(self, utterance_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.utterance_id == utterance_id:
                return e
        raise KeyError(utterance_id)

    def resolve(self, rel_path: str) -> Path:
        p = Path(rel_path)
        return p if p.is_absolute() else self.root_dir / p


def load_manifest(path) -> CorpusManifest:
    path = Path(path)
    entries = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 8:
            raise FormatError(f"{path}:{lineno}: expected 8 tab-separated fields, got {len(fields)}")
        fold = None if fields[7] == "-" else int(fields[7])
        entries.append(ManifestEntry(
            utterance_id=fields[0], subject_id=fields[1], group=fields[2],
            acoustic_path=fields[3], articulatory_path=fields[4],
            embedding_path=fields[5], split=fields[6], fold=fold,
        ))
    return CorpusManifest(entries, root_dir=path.parent)


def save_manifest(manifest: CorpusManifest, path) -> None:
    lines = ["# utterance_id\tsubject_id\tgroup\tacoustic_path\tarticulatory_path\tembedding_path\tsplit\tfold"]
    for e in manifest.entries:
        fold = "-" if e.fold is None else str(e.fold)
        lines.append("\t".join([
            e.utterance_id, e.subject_id, e.group, e.acoustic_path,
            e.articulatory_path, e.embedding_path, e.split, fold,
        ]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def split_seen(manifest: CorpusManifest, test_fraction: float = 0.10, seed: int = 0) -> CorpusManifest:
    """Assign per-subject train/test splits without sentence overlap.

    The shuffle is keyed by (seed, subject_id) so adding a subject never
    reshuffles the others.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    new_entries = []
    for e in manifest.entries:
        new_entries.append(e)
    by_subject: dict[str, list[int]] = {}
    for i, e in enumerate(manifest.entries):
        by_subject.setdefault(e.subject_id, []).append(i)
    for subject_id, idxs in by_subject.items():
        ids = sorted(idxs, key=lambda i: manifest.entries[i].utterance_id)
        rng = np.random.default_rng(stable_seed(seed, "split", subject_id))
        order = rng.permutation(len(ids))
        n_test = max(1, int(round(len(ids) * test_fraction)))
        if n_test >= len(ids):
            raise ConfigError(f"subject {subject_id}: not enough utterances to split")
        test_set = {ids[order[k]] for k in range(n_test)}
        for i in ids:
            split = "test" if i in test_set else "train"
            new_entries[i] = replace(manifest.entries[i], split=split, fold=None)
    return CorpusManifest(new_entries, root_dir=manifest.root_dir)


def assign_folds(manifest: CorpusManifest, k: int = 5, seed: int = 0) -> CorpusManifest:
    """Partition each subject's train utterances into k near-equal folds."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    new_entries = list(manifest.entries)
    by_subject: dict[str, list[int]] = {}
    for i, e in enumerate(manifest.entries):
        if e.split == "train":
            by_subject.setdefault(e.subject_id, []).append(i)
    for subject_id, idxs in by_subject.items():
        if len(idxs) < k:
            raise ConfigError(
                f"subject {subject_id}: {len(idxs)} train utterances cannot fill {k} folds"
            )
        ids = sorted(idxs, key=lambda i: manifest.entries[i].utterance_id)
        rng = np.random.default_rng(stable_seed(seed, "folds", subject_id))
        order = rng.permutation(len(ids))
        base, extra = divmod(len(ids), k)
        pos = 0
        for fold in range(k):
            size = base + (1 if fold < extra else 0)
            for j in range(pos, pos + size):
                i = ids[order[j]]
                new_entries[i] = replace(manifest.entries[i], fold=fold)
            pos += size
    return CorpusManifest(new_entries, root_dir=manifest.root_dir)
