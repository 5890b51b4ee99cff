"""Per-segment visual feature ingestion and pooling.

Feature extraction itself happens upstream; this module reads one binary
feature file per video, reduces each segment vector by window-averaged
pooling along the feature axis, and collapses the pooled segments to a
single summary vector that conditions the decoder.

File format (little-endian throughout):
    magic   4 bytes  b"VFEA"
    version u32      1
    n       u32      segment count
    m_x     u32      per-segment feature dimension
    payload n * m_x float32 values, segment-major
One file per video, named ``<video_id>.vfea``. A directory of feature files
may carry a ``features.json`` manifest mapping video_id to a relative path;
without one, ``<video_id>.vfea`` is assumed.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError

MAGIC = b"VFEA"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIII")
POOL_WINDOW = 5

MANIFEST_NAME = "features.json"


@dataclass
class FeatureSequence:
    """Raw per-segment features for one video, temporally ordered."""

    video_id: str
    segments: np.ndarray  # (n, m_x) float64

    @property
    def segment_count(self) -> int:
        return self.segments.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.segments.shape[1]

    def validate(self) -> "FeatureSequence":
        if self.segments.ndim != 2 or self.segments.shape[0] < 1 or self.segments.shape[1] < 1:
            raise ValueError(f"feature sequence needs shape (n>=1, m>=1), got {self.segments.shape}")
        if not np.all(np.isfinite(self.segments)):
            raise ValueError(f"feature sequence for {self.video_id!r} has non-finite entries")
        return self


@dataclass
class PooledFeature:
    """Window-pooled segments plus their mean, the decoder's visual summary."""

    video_id: str
    pooled_segments: np.ndarray  # (n, ceil(m_x/window)) float64
    summary: np.ndarray  # (ceil(m_x/window),) float64


def load_features(path: str | Path) -> FeatureSequence:
    """Read and validate one feature file; raises FormatError with a byte offset."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < HEADER.size:
        raise FormatError(f"{path.name}: truncated header ({len(blob)} bytes)", offset=len(blob))
    magic, version, n, m_x = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"{path.name}: bad magic bytes {magic!r}", offset=0)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path.name}: unsupported version {version}", offset=4)
    if n == 0:
        raise FormatError(f"{path.name}: segment count must be >= 1", offset=8)
    if m_x == 0:
        raise FormatError(f"{path.name}: feature dim must be >= 1", offset=12)
    expected = HEADER.size + 4 * n * m_x
    if len(blob) != expected:
        raise FormatError(
            f"{path.name}: payload holds {len(blob) - HEADER.size} bytes, "
            f"expected {expected - HEADER.size}",
            offset=min(len(blob), expected),
        )
    values = np.frombuffer(blob, dtype="<f4", offset=HEADER.size)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise FormatError(
            f"{path.name}: non-finite value at element {bad[0]}",
            offset=HEADER.size + 4 * int(bad[0]),
        )
    segments = values.astype(np.float64).reshape(n, m_x)
    return FeatureSequence(video_id=path.stem, segments=segments).validate()


def write_features(path: str | Path, seq: FeatureSequence) -> None:
    """Serialize a FeatureSequence; payload is stored as float32."""
    seq.validate()
    n, m_x = seq.segments.shape
    payload = seq.segments.astype("<f4").tobytes()
    Path(path).write_bytes(HEADER.pack(MAGIC, FORMAT_VERSION, n, m_x) + payload)


def pooled_dim(feature_dim: int, window: int = POOL_WINDOW) -> int:
    return math.ceil(feature_dim / window)


def average_pool(seq: FeatureSequence, window: int = POOL_WINDOW) -> PooledFeature:
    """Average non-overlapping windows along the feature axis of each segment.

    Stride equals the window; a trailing partial window is averaged over its
    actual length. The summary vector is the mean over the pooled segments.
    """
    if window < 1:
        raise ValueError(f"pooling window must be >= 1, got {window}")
    seq.validate()
    n, m_x = seq.segments.shape
    out_dim = pooled_dim(m_x, window)
    pooled = np.empty((n, out_dim), dtype=np.float64)
    for j in range(out_dim):
        pooled[:, j] = seq.segments[:, j * window : (j + 1) * window].mean(axis=1)
    return PooledFeature(
        video_id=seq.video_id,
        pooled_segments=pooled,
        summary=pooled.mean(axis=0),
    )


def project_summary(summary: np.ndarray, projection: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map from the pooled summary to the decoder's hidden size."""
    summary = np.asarray(summary, dtype=np.float64)
    projection = np.asarray(projection, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if projection.ndim != 2 or projection.shape[1] != summary.shape[0]:
        raise DimensionError(
            f"projection {projection.shape} cannot consume summary of dim {summary.shape[0]}"
        )
    if bias.shape != (projection.shape[0],):
        raise DimensionError(
            f"projection bias {bias.shape} does not match output dim {projection.shape[0]}"
        )
    return projection @ summary + bias


def load_feature_manifest(feature_dir: str | Path) -> dict[str, Path]:
    """Map video_id -> feature file path for a directory of .vfea files.

    Uses ``features.json`` when present, otherwise every ``*.vfea`` file by stem.
    """
    feature_dir = Path(feature_dir)
    manifest_path = feature_dir / MANIFEST_NAME
    if manifest_path.exists():
        try:
            mapping = json.loads(manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{manifest_path}: invalid JSON: {exc}") from exc
        if not isinstance(mapping, dict):
            raise FormatError(f"{manifest_path}: expected an object mapping video_id to path")
        return {vid: feature_dir / rel for vid, rel in sorted(mapping.items())}
    return {p.stem: p for p in sorted(feature_dir.glob("*.vfea"))}
