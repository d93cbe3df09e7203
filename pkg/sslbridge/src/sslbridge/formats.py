"""Writers for the AAI toolkit's wire formats.

The exporter talks to the toolkit only through these files, so the
formats are implemented here independently:

  .aaif  magic "AAIF", version u32=1, n_frames u32, dim u32,
         frame_rate_hz f32, source_tag (u16 length + UTF-8),
         n_frames*dim f32 values row-major, little-endian.
  .aaix  magic "AAIX", version u32=1, dim u32,
         subject_id (u16 length + UTF-8), dim f32 values.
"""

from __future__ import annotations

import struct

import numpy as np

FORMAT_VERSION = 1


def write_feature_file(path, frames, frame_rate_hz: float, source_tag: str) -> None:
    frames = np.ascontiguousarray(np.atleast_2d(frames), dtype="<f4")
    if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
        raise ValueError(f"frames must be a non-empty T x D matrix, got shape {frames.shape}")
    if frame_rate_hz <= 0:
        raise ValueError(f"frame_rate_hz must be positive, got {frame_rate_hz}")
    if not np.all(np.isfinite(frames)):
        raise ValueError("refusing to write non-finite frames")
    tag = source_tag.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(b"AAIF" + struct.pack("<IIIfH", FORMAT_VERSION, frames.shape[0],
                                       frames.shape[1], float(frame_rate_hz), len(tag)))
        fh.write(tag)
        fh.write(frames.tobytes())


def write_embedding_file(path, values, subject_id: str) -> None:
    values = np.ascontiguousarray(values, dtype="<f4").reshape(-1)
    if values.size < 1:
        raise ValueError("embedding must have at least one value")
    if not np.all(np.isfinite(values)):
        raise ValueError("refusing to write non-finite embedding")
    sid = subject_id.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(b"AAIX" + struct.pack("<IIH", FORMAT_VERSION, values.size, len(sid)))
        fh.write(sid)
        fh.write(values.tobytes())
