"""Clip windowing, confidence-rate labeling, subject splits, and batching.

Videos are cut into fixed-length clips by a sliding window over raw frame
indices, subsampling every k-th frame. A clip-level label is derived from
the per-frame labels of the *sampled* frames under a pair of confidence
rates: the clip is anomalous when its anomalous-frame fraction reaches the
anomaly rate, else normal when its normal-frame fraction reaches the normal
rate, else left unassigned. Training consumes normal clips only.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InsufficientSubjectsError,
    NoNormalClipsError,
    ParseError,
)
from .features import VideoFeatures


@dataclass(frozen=True)
class WindowSpec:
    """Sliding-window geometry over raw frame indices.

    ``clip_len`` sampled frames per clip, taking every ``sample_rate``-th raw
    frame, with ``stride`` raw frames between consecutive window starts. The
    defaults give roughly 3-second clips at 30 fps.
    """

    clip_len: int = 48
    sample_rate: int = 2
    stride: int = 23

    def __post_init__(self):
        for name in ("clip_len", "sample_rate", "stride"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")

    @property
    def span(self) -> int:
        """Raw frames covered by one window: (clip_len - 1) * sample_rate + 1."""
        return (self.clip_len - 1) * self.sample_rate + 1


class Label(enum.Enum):
    NORMAL = 0
    ANOMALOUS = 1
    UNASSIGNED = 2


@dataclass(frozen=True)
class RateConfig:
    """Minimum class fractions a clip needs to receive a clip-level label."""

    normal_rate: float = 0.5
    anomaly_rate: float = 0.5

    def __post_init__(self):
        for name in ("normal_rate", "anomaly_rate"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {v}")


def parse_rate(text: str) -> float:
    """Parse a rate given as a fraction ('2/3') or a decimal ('0.5')."""
    s = text.strip()
    if "/" in s:
        num, den = s.split("/", 1)
        value = float(num) / float(den)
    else:
        value = float(s)
    if not 0.0 < value <= 1.0:
        raise ValueError(f"rate {text!r} must lie in (0, 1]")
    return value


def window_video(n_frames: int, spec: WindowSpec) -> list[int]:
    """Start indices of all windows that fit in a video of ``n_frames``.

    Empty when the video is shorter than one window span.
    """
    if n_frames < 1:
        raise ValueError(f"n_frames must be >= 1, got {n_frames}")
    if n_frames < spec.span:
        return []
    return list(range(0, n_frames - spec.span + 1, spec.stride))


@dataclass
class Clip:
    """A windowed sample: sampled frame indices, labels, and features."""

    video_id: str
    start: int
    frame_indices: np.ndarray
    frame_labels: np.ndarray
    features: np.ndarray | None = None

    @property
    def clip_id(self) -> str:
        return f"{self.video_id}:{self.start:06d}"


def extract_clips(video: VideoFeatures, spec: WindowSpec) -> list[Clip]:
    """Window one video's feature sequence into clips."""
    n = video.features.shape[0]
    clips = []
    for start in window_video(n, spec):
        idx = start + spec.sample_rate * np.arange(spec.clip_len)
        clips.append(
            Clip(
                video_id=video.video_id,
                start=start,
                frame_indices=idx,
                frame_labels=video.labels[idx],
                features=video.features[idx],
            )
        )
    return clips


def assign_clip_label(frame_labels, rates: RateConfig) -> Label:
    """Clip label from sampled-frame labels under the given confidence rates.

    The anomaly condition is checked first, so a clip meeting both rates
    (possible at 1/2-1/2 with an exact tie) counts as anomalous.
    """
    labels = np.asarray(frame_labels)
    n = labels.size
    if n == 0:
        raise ValueError("frame_labels must be non-empty")
    n_anom = int(np.count_nonzero(labels))
    if n_anom / n >= rates.anomaly_rate:
        return Label.ANOMALOUS
    if (n - n_anom) / n >= rates.normal_rate:
        return Label.NORMAL
    return Label.UNASSIGNED


@dataclass
class Splits:
    train: list[str] = field(default_factory=list)
    val: list[str] = field(default_factory=list)
    test: list[str] = field(default_factory=list)

    def as_dict(self) -> dict[str, list[str]]:
        return {"train": self.train, "val": self.val, "test": self.test}


def build_splits(video_ids, subject_map: dict[str, str], fractions, seed: int) -> Splits:
    """Partition videos into train/val/test by subject.

    No subject ever spans two splits. Subject counts follow ``fractions``
    (largest-remainder rounding); the assignment is a deterministic function
    of the seed. A split with a positive fraction must receive at least one
    subject, otherwise :class:`InsufficientSubjectsError` is raised.
    """
    video_ids = list(video_ids)
    missing = [v for v in video_ids if v not in subject_map]
    if missing:
        raise ValueError(f"videos without subject mapping: {missing}")
    fractions = [float(f) for f in fractions]
    if len(fractions) != 3 or any(f < 0 for f in fractions) or sum(fractions) <= 0:
        raise ValueError(f"fractions must be 3 non-negative values, got {fractions}")

    subjects = sorted({subject_map[v] for v in video_ids})
    order = np.random.default_rng(seed).permutation(len(subjects))
    shuffled = [subjects[i] for i in order]

    total = sum(fractions)
    quotas = [f / total * len(subjects) for f in fractions]
    counts = [int(np.floor(q)) for q in quotas]
    leftover = len(subjects) - sum(counts)
    by_remainder = sorted(range(3), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in by_remainder[:leftover]:
        counts[i] += 1

    for frac, count, name in zip(fractions, counts, ("train", "val", "test")):
        if frac > 0 and count == 0:
            raise InsufficientSubjectsError(
                f"{len(subjects)} subjects cannot fill the {name} split"
            )

    groups = {
        "train": set(shuffled[: counts[0]]),
        "val": set(shuffled[counts[0] : counts[0] + counts[1]]),
        "test": set(shuffled[counts[0] + counts[1] :]),
    }
    splits = Splits()
    for v in video_ids:
        for name, members in groups.items():
            if subject_map[v] in members:
                getattr(splits, name).append(v)
                break
    return splits


def filter_normal_clips(clips, rates: RateConfig) -> list[Clip]:
    """Clips labeled NORMAL under ``rates``; error if none remain."""
    normal = [c for c in clips if assign_clip_label(c.frame_labels, rates) is Label.NORMAL]
    if not normal:
        raise NoNormalClipsError(
            f"no clips labeled normal at rates "
            f"({rates.normal_rate:g}, {rates.anomaly_rate:g})"
        )
    return normal


def training_batches(clips, rates: RateConfig, batch_size: int, seed: int):
    """Yield shuffled batches of feature sequences from normal clips only.

    One pass over the data; the final short batch is kept. Order is a
    deterministic function of the seed.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    normal = filter_normal_clips(clips, rates)
    order = np.random.default_rng(seed).permutation(len(normal))
    for lo in range(0, len(normal), batch_size):
        yield [normal[i].features for i in order[lo : lo + batch_size]]


@dataclass(frozen=True)
class ManifestEntry:
    """One dataset manifest line: a video, its subject, and its data path.

    Feature manifests have 3 columns (``video_id subject_id feature_path``);
    frame manifests append a labels path as a 4th column.
    """

    video_id: str
    subject_id: str
    path: str
    labels_path: str | None = None


def read_manifest(path) -> list[ManifestEntry]:
    entries = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            fields = line.split()
            if len(fields) not in (3, 4):
                raise ParseError(
                    f"{path}: line {lineno}: expected 3 or 4 fields, got {len(fields)}"
                )
            entries.append(ManifestEntry(*fields))
    if not entries:
        raise ParseError(f"{path}: empty manifest")
    ids = [e.video_id for e in entries]
    if len(set(ids)) != len(ids):
        raise ParseError(f"{path}: duplicate video ids")
    return entries


def write_manifest(path, entries) -> None:
    with open(path, "w") as fh:
        for e in entries:
            fields = [e.video_id, e.subject_id, e.path]
            if e.labels_path is not None:
                fields.append(e.labels_path)
            fh.write(" ".join(fields) + "\n")


def write_split_file(path, splits: Splits) -> None:
    """Persist a split assignment, one ``video_id split`` line per video."""
    with open(path, "w") as fh:
        for name, ids in splits.as_dict().items():
            for v in ids:
                fh.write(f"{v} {name}\n")


def read_split_file(path) -> Splits:
    splits = Splits()
    seen = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 2 or fields[1] not in ("train", "val", "test"):
                raise ParseError(f"{path}: line {lineno}: expected 'video_id split'")
            if fields[0] in seen:
                raise ParseError(f"{path}: line {lineno}: duplicate video {fields[0]!r}")
            seen.add(fields[0])
            getattr(splits, fields[1]).append(fields[0])
    return splits
