"""Frame featurization: normalized fixed-dimension vectors per frame.

A grayscale frame is a 2-D integer array with values in [0, 255]. Each frame
is mapped to a feature vector by a pluggable :class:`Featurizer`, and vectors
are L2-normalized so every row of a feature sequence lies on the unit sphere.
The default featurizer summarizes per-tile intensity statistics; externally
computed features (e.g. from a CNN backbone) can be ingested from text files
instead.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    LabelLengthMismatchError,
    ParseError,
    ZeroVectorError,
)

# Norm below which a vector is treated as degenerate rather than normalized.
ZERO_NORM_EPS = 1e-12

# Ingested rows whose norm is further than this from 1 are re-normalized.
ROW_NORM_TOL = 1e-6


def tile_edges(length: int, n_tiles: int) -> np.ndarray:
    """Boundaries splitting ``length`` pixels into ``n_tiles`` intervals.

    Tiles get ``length // n_tiles`` pixels each; remainder pixels go to the
    last tile. Returns ``n_tiles + 1`` edge positions.
    """
    if n_tiles < 1:
        raise ValueError(f"n_tiles must be >= 1, got {n_tiles}")
    base = length // n_tiles
    if base < 1:
        raise ValueError(f"cannot split length {length} into {n_tiles} tiles")
    edges = np.arange(n_tiles + 1, dtype=np.int64) * base
    edges[-1] = length
    return edges


def check_gray_image(img: np.ndarray) -> np.ndarray:
    """Validate a grayscale frame and return it as an int64 array."""
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionMismatchError(f"expected a 2-D image, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise DimensionMismatchError(f"expected integer intensities, got dtype {arr.dtype}")
    if arr.min() < 0 or arr.max() > 255:
        raise ValueError("intensities must lie in [0, 255]")
    return arr.astype(np.int64)


def l2_normalize(v) -> np.ndarray:
    """Scale a vector to unit Euclidean norm.

    Raises :class:`ZeroVectorError` when the norm is below ``ZERO_NORM_EPS``,
    which signals a degenerate featurizer output.
    """
    vec = np.asarray(v, dtype=np.float64)
    if vec.ndim != 1 or vec.size < 1:
        raise DimensionMismatchError(f"expected a 1-D vector, got shape {vec.shape}")
    norm = float(np.linalg.norm(vec))
    if norm < ZERO_NORM_EPS:
        raise ZeroVectorError(f"cannot normalize vector with norm {norm:.3e}")
    return vec / norm


class Featurizer:
    """Deterministic mapping from a grayscale frame to a raw feature vector.

    Subclasses implement :meth:`raw_features`; normalization is applied by the
    callers, so raw vectors need not be unit length.
    """

    dim: int

    def raw_features(self, img: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, img: np.ndarray) -> np.ndarray:
        return self.raw_features(img)


class PatchStatsFeaturizer(Featurizer):
    """Per-tile [mean, std] of intensities on a g x g grid, scaled to [0, 1].

    A desk-scale stand-in for a learned backbone: cheap, deterministic, and
    sensitive to coarse spatial structure. Output dimension is ``2 * g * g``.
    """

    def __init__(self, grid: int):
        if grid < 1:
            raise ValueError(f"grid must be >= 1, got {grid}")
        self.grid = grid
        self.dim = 2 * grid * grid

    def raw_features(self, img: np.ndarray) -> np.ndarray:
        arr = check_gray_image(img)
        g = self.grid
        rows = tile_edges(arr.shape[0], g)
        cols = tile_edges(arr.shape[1], g)
        out = np.empty(self.dim, dtype=np.float64)
        k = 0
        for ty in range(g):
            for tx in range(g):
                tile = arr[rows[ty]:rows[ty + 1], cols[tx]:cols[tx + 1]]
                scaled = tile / 255.0
                out[k] = scaled.mean()
                # Population std: well-defined even for 1-pixel tiles.
                out[k + 1] = scaled.std()
                k += 2
        return out


def patch_stats_featurize(img: np.ndarray, grid: int) -> np.ndarray:
    """Normalized tile-statistics feature vector for a single frame."""
    return l2_normalize(PatchStatsFeaturizer(grid).raw_features(img))


def featurize_sequence(frames, featurizer: Featurizer) -> np.ndarray:
    """Stack normalized per-frame features into an N x D matrix.

    All frames must share the same dimensions.
    """
    if len(frames) < 1:
        raise DimensionMismatchError("need at least one frame")
    shape = np.asarray(frames[0]).shape
    rows = []
    for t, frame in enumerate(frames):
        arr = np.asarray(frame)
        if arr.shape != shape:
            raise DimensionMismatchError(
                f"frame {t} has shape {arr.shape}, expected {shape}"
            )
        rows.append(l2_normalize(featurizer(arr)))
    return np.stack(rows)


@dataclass
class VideoFeatures:
    """One video's feature sequence plus its per-frame binary labels."""

    video_id: str
    features: np.ndarray  # (N, D), rows unit norm
    labels: np.ndarray    # (N,) of {0, 1}; 1 = anomalous

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise DimensionMismatchError(
                f"features must be 2-D, got shape {self.features.shape}"
            )
        if self.labels.shape != (self.features.shape[0],):
            raise LabelLengthMismatchError(
                f"{self.labels.size} labels for {self.features.shape[0]} frames"
            )

    @property
    def n_frames(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def write_feature_file(path, entries) -> None:
    """Write feature sequences to a text file.

    Format, repeated per video: a header line ``video_id N D``, then N lines
    of D space-separated reals, then one line of N characters from {0, 1}
    giving per-frame labels (1 = anomalous). Values are written with 17
    significant digits so a read-back is bit-identical.
    """
    lines = []
    for entry in entries:
        if not isinstance(entry, VideoFeatures):
            entry = VideoFeatures(*entry)
        if not entry.video_id or any(c.isspace() for c in entry.video_id):
            raise ValueError(f"video_id {entry.video_id!r} must be non-empty, no whitespace")
        n, d = entry.features.shape
        lines.append(f"{entry.video_id} {n} {d}")
        for row in entry.features:
            lines.append(" ".join(f"{x:.16e}" for x in row))
        lines.append("".join(str(int(v)) for v in entry.labels))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_feature_file(path) -> list[VideoFeatures]:
    """Read feature sequences written by :func:`write_feature_file`.

    Rows whose norm is within ``ROW_NORM_TOL`` of 1 pass through unchanged;
    other rows are re-normalized and a warning is emitted, so features
    produced by external tools remain usable.
    """
    with open(path) as fh:
        raw_lines = fh.read().splitlines()

    entries = []
    pos = 0
    while pos < len(raw_lines):
        if not raw_lines[pos].strip():
            pos += 1
            continue
        header = raw_lines[pos].split()
        if len(header) != 3:
            raise ParseError(f"{path}: line {pos + 1}: expected 'video_id N D' header")
        video_id = header[0]
        try:
            n, d = int(header[1]), int(header[2])
        except ValueError as exc:
            raise ParseError(f"{path}: line {pos + 1}: bad header counts") from exc
        if n < 1 or d < 1:
            raise ParseError(f"{path}: line {pos + 1}: N and D must be >= 1")
        if pos + 1 + n + 1 > len(raw_lines):
            raise ParseError(f"{path}: truncated block for video {video_id!r}")

        rows = np.empty((n, d), dtype=np.float64)
        for i in range(n):
            fields = raw_lines[pos + 1 + i].split()
            if len(fields) != d:
                raise ParseError(
                    f"{path}: line {pos + 2 + i}: expected {d} values, got {len(fields)}"
                )
            try:
                rows[i] = [float(f) for f in fields]
            except ValueError as exc:
                raise ParseError(f"{path}: line {pos + 2 + i}: non-numeric value") from exc
        if not np.all(np.isfinite(rows)):
            raise ParseError(f"{path}: video {video_id!r}: non-finite feature value")

        label_line = raw_lines[pos + 1 + n].strip()
        if not set(label_line) <= {"0", "1"}:
            raise ParseError(f"{path}: video {video_id!r}: labels must be 0/1 characters")
        if len(label_line) != n:
            raise LabelLengthMismatchError(
                f"{path}: video {video_id!r}: {len(label_line)} labels for {n} frames"
            )
        labels = np.array([int(c) for c in label_line], dtype=np.int64)

        norms = np.linalg.norm(rows, axis=1)
        off = np.abs(norms - 1.0) > ROW_NORM_TOL
        if np.any(off):
            if np.any(norms[off] < ZERO_NORM_EPS):
                raise ZeroVectorError(
                    f"{path}: video {video_id!r}: zero-norm feature row"
                )
            warnings.warn(
                f"{path}: video {video_id!r}: re-normalized {int(off.sum())} "
                f"feature rows with non-unit norm",
                stacklevel=2,
            )
            rows[off] = rows[off] / norms[off, None]

        entries.append(VideoFeatures(video_id, rows, labels))
        pos += 1 + n + 1

    if not entries:
        raise ParseError(f"{path}: no feature blocks found")
    return entries
