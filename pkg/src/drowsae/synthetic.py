"""Desk-scale synthetic feature datasets with known anomaly segments.

Normal videos are smooth multi-dimensional sinusoids (fixed per-dimension
carrier frequencies, per-video random phase and amplitude jitter) plus a
little noise, row-normalized into feature sequences an autoencoder can
learn to reconstruct. Anomaly videos take the same base signal and perturb
labeled segments, either by adding a rapidly flipping off-axis component
("jump") or by holding the signal at a fixed value ("freeze"). Per-frame
labels mark exactly the perturbed frames.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import ManifestEntry, write_manifest
from .features import VideoFeatures, write_feature_file

#: Frames per full carrier cycle at frequency 1.
CYCLE_FRAMES = 60.0

ANOMALY_KINDS = ("jump", "freeze")


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape of a generated dataset."""

    n_normal_videos: int = 8
    n_anomaly_videos: int = 4
    frames_per_video: int = 200
    dim: int = 8
    noise_scale: float = 0.01
    anomaly_kinds: tuple[str, ...] = ANOMALY_KINDS
    segments_per_video: int = 2
    segment_frac: float = 0.22
    jump_scale: float = 1.5
    amp_jitter: float = 0.2
    offset_jitter: float = 0.4
    phase_jitter: float = 0.3

    def __post_init__(self):
        if self.n_normal_videos < 0 or self.n_anomaly_videos < 0:
            raise ValueError("video counts must be non-negative")
        if self.n_normal_videos + self.n_anomaly_videos < 1:
            raise ValueError("need at least one video")
        if self.frames_per_video < 8:
            raise ValueError("frames_per_video must be >= 8")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if not set(self.anomaly_kinds) <= set(ANOMALY_KINDS):
            raise ValueError(f"anomaly kinds must be among {ANOMALY_KINDS}")
        if self.n_anomaly_videos > 0 and not self.anomaly_kinds:
            raise ValueError("anomaly videos requested but no anomaly kinds given")
        if not 0.0 < self.segment_frac < 0.5:
            raise ValueError("segment_frac must lie in (0, 0.5)")
        if self.segments_per_video < 1:
            raise ValueError("segments_per_video must be >= 1")
        if not 0.0 <= self.amp_jitter < 1.0:
            raise ValueError("amp_jitter must lie in [0, 1)")
        if self.offset_jitter < 0.0 or self.phase_jitter < 0.0:
            raise ValueError("jitter widths must be non-negative")


def _smooth_base(
    rng: np.random.Generator,
    n_frames: int,
    dim: int,
    noise_scale: float,
    cycle_frames: float = CYCLE_FRAMES,
    amp_jitter: float = 0.2,
    offset_jitter: float = 0.4,
    phase_jitter: float = 0.3,
):
    """Raw smooth signal: per-dim sinusoid with jittered amplitude/phase."""
    freqs = 1.0 + 0.5 * (np.arange(dim) % 4)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    jitter = rng.uniform(-phase_jitter, phase_jitter, dim)
    amps = rng.uniform(1.0 - amp_jitter, 1.0 + amp_jitter, dim)
    offsets = rng.uniform(-offset_jitter, offset_jitter, dim) + 0.6 * np.where(
        np.arange(dim) % 2 == 0, 1.0, -1.0
    )
    t = np.arange(n_frames)[:, None]
    angles = 2.0 * np.pi * freqs[None, :] * t / cycle_frames + phase + jitter[None, :]
    raw = offsets[None, :] + amps[None, :] * np.sin(angles)
    return raw + rng.normal(0.0, noise_scale, (n_frames, dim))


def _normalize_rows(raw: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    if np.any(norms < 1e-9):
        raise ValueError("degenerate zero-norm row in synthetic signal")
    return raw / norms


def _place_segments(rng, n_frames: int, n_segments: int, frac: float):
    """Non-overlapping label segments, one per equal region, never at frame 0."""
    region = n_frames // n_segments
    seg_len = max(2, min(int(round(frac * n_frames)), region - 2))
    segments = []
    for k in range(n_segments):
        lo = max(1, k * region)
        hi = (k + 1) * region - seg_len
        start = int(rng.integers(lo, max(lo + 1, hi)))
        segments.append((start, start + seg_len))
    return segments


def generate_video_features(
    rng: np.random.Generator, spec: SyntheticSpec, anomalous: bool
):
    """One video's (features, labels); features rows are unit norm."""
    raw = _smooth_base(
        rng,
        spec.frames_per_video,
        spec.dim,
        spec.noise_scale,
        amp_jitter=spec.amp_jitter,
        offset_jitter=spec.offset_jitter,
        phase_jitter=spec.phase_jitter,
    )
    labels = np.zeros(spec.frames_per_video, dtype=np.int64)
    if anomalous:
        segments = _place_segments(
            rng, spec.frames_per_video, spec.segments_per_video, spec.segment_frac
        )
        for start, end in segments:
            kind = spec.anomaly_kinds[int(rng.integers(len(spec.anomaly_kinds)))]
            if kind == "jump":
                direction = rng.normal(0.0, 1.0, spec.dim)
                direction /= np.linalg.norm(direction)
                # Off-manifold component flipping sign every 3 frames.
                steps = np.arange(end - start)
                sign = np.where((steps // 3) % 2 == 0, 1.0, -1.0)
                raw[start:end] += spec.jump_scale * sign[:, None] * direction[None, :]
            else:  # freeze: hold the last pre-segment value
                raw[start:end] = raw[start - 1]
            labels[start:end] = 1
    return _normalize_rows(raw), labels


def make_smooth_sequences(
    n_seqs: int,
    length: int,
    dim: int,
    seed: int,
    noise_scale: float = 0.01,
    cycle_frames: float = CYCLE_FRAMES,
    amp_jitter: float = 0.2,
    offset_jitter: float = 0.4,
    phase_jitter: float = 0.3,
) -> list[np.ndarray]:
    """Short normalized smooth sequences, e.g. as a tiny training set.

    ``cycle_frames`` sets the tempo: frames per full carrier cycle at the
    base frequency, so larger values give slower, easier-to-fit signals.
    The jitter widths control per-sequence variation around the shared
    carrier (amplitude scale, per-dim offset, per-dim phase); narrowing
    them makes the set more homogeneous and faster to fit.
    """
    out = []
    for k in range(n_seqs):
        rng = np.random.default_rng([seed, k])
        out.append(
            _normalize_rows(
                _smooth_base(
                    rng,
                    length,
                    dim,
                    noise_scale,
                    cycle_frames,
                    amp_jitter=amp_jitter,
                    offset_jitter=offset_jitter,
                    phase_jitter=phase_jitter,
                )
            )
        )
    return out


def generate_synthetic(spec: SyntheticSpec, seed: int, out_dir) -> Path:
    """Write a synthetic dataset (feature files + manifest); returns manifest path.

    Each video gets its own subject, so subject-level splits are video-level
    splits. Output is a deterministic function of (spec, seed).
    """
    out_dir = Path(out_dir)
    feat_dir = out_dir / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)

    names = [f"normal{k:03d}" for k in range(spec.n_normal_videos)]
    names += [f"anom{k:03d}" for k in range(spec.n_anomaly_videos)]

    entries = []
    for index, video_id in enumerate(names):
        rng = np.random.default_rng([seed, index])
        features, labels = generate_video_features(
            rng, spec, anomalous=index >= spec.n_normal_videos
        )
        path = feat_dir / f"{video_id}.txt"
        write_feature_file(path, [VideoFeatures(video_id, features, labels)])
        entries.append(ManifestEntry(video_id, f"subj{index:03d}", str(path)))

    manifest_path = out_dir / "manifest.txt"
    write_manifest(manifest_path, entries)
    return manifest_path
