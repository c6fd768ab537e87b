"""Config-driven experiment pipeline with cached, deterministic stages.

Stages: featurize (optional CLAHE + patch-stats features, or precomputed
feature ingestion) -> subject split -> train (normal clips only) -> score
validation/test clips -> rate-grid report. Every stage writes its artifacts
plus a small meta file keyed by a hash of the relevant config subsection;
reruns reuse artifacts whose key still matches, so deleting a downstream
artifact resumes from the cached upstream ones. Per-stage random seeds are
derived from the master seed by fixed labels, keeping e.g. the split stable
when only training settings change.
"""

from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autoencoder import (
    TrainConfig,
    anomaly_score,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .clahe import ClaheConfig, clahe_enhance
from .dataset import (
    Clip,
    Label,
    RateConfig,
    WindowSpec,
    assign_clip_label,
    build_splits,
    extract_clips,
    filter_normal_clips,
    parse_rate,
    read_manifest,
    read_split_file,
    write_manifest,
    write_split_file,
)
from .errors import ConfigError, ParseError, StageError
from .evaluation import (
    EvalReport,
    GridReport,
    rate_grid_report,
    render_grid_text,
    write_grid_csv,
    write_histogram_file,
)
from .features import (
    PatchStatsFeaturizer,
    VideoFeatures,
    featurize_sequence,
    load_feature_file,
    write_feature_file,
)


def stage_seed(master_seed: int, label: str) -> int:
    """Per-stage integer seed derived from the master seed by a fixed label."""
    ss = np.random.SeedSequence([master_seed, zlib.crc32(label.encode())])
    return int(ss.generate_state(1)[0])


@dataclass
class ExperimentConfig:
    """Parsed experiment configuration (see load_config for the file schema)."""

    seed: int
    manifest: Path
    output_dir: Path
    window: WindowSpec = WindowSpec()
    clahe: ClaheConfig | None = None
    featurizer_kind: str = "precomputed"      # "precomputed" | "patch_stats"
    featurizer_grid: int = 4
    split_fractions: tuple[float, float, float] = (0.5, 0.25, 0.25)
    train_normal_rate: float = 0.5
    train_anomaly_rate: float = 0.5
    hidden: int = 128
    learning_rate: float = 0.01
    batch_size: int = 4
    epochs: int = 50
    grad_clip: float | None = None
    normal_rates: tuple[float, ...] = (0.5, 2 / 3, 1.0)
    anomaly_rates: tuple[float, ...] = (0.5, 2 / 3, 1.0)
    histogram_bins: int = 20
    threshold_on_test: bool = False

    def __post_init__(self):
        if self.featurizer_kind not in ("precomputed", "patch_stats"):
            raise ConfigError(f"unknown featurizer kind {self.featurizer_kind!r}")


def _rate_value(v) -> float:
    return parse_rate(v) if isinstance(v, str) else float(v)


def load_config(path) -> ExperimentConfig:
    """Read a JSON experiment config; raises ConfigError on any problem."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must hold a JSON object")

    known = {
        "seed", "manifest", "output_dir", "window", "clahe", "featurizer",
        "split", "train", "evaluate",
    }
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    try:
        window = WindowSpec(**raw.get("window", {}))

        clahe_raw = raw.get("clahe", "off")
        clahe = None
        if clahe_raw not in ("off", None):
            clahe = ClaheConfig(**clahe_raw)

        feat_raw = raw.get("featurizer", {"kind": "precomputed"})
        kind = feat_raw.get("kind", "precomputed")
        grid = int(feat_raw.get("grid", 4))

        split_raw = raw.get("split", {})
        fractions = tuple(float(f) for f in split_raw.get("fractions", (0.5, 0.25, 0.25)))
        if len(fractions) != 3:
            raise ConfigError("split.fractions must have 3 entries (train, val, test)")

        train_raw = dict(raw.get("train", {}))
        eval_raw = dict(raw.get("evaluate", {}))

        cfg = ExperimentConfig(
            seed=int(raw.get("seed", 0)),
            manifest=Path(raw["manifest"]),
            output_dir=Path(raw["output_dir"]),
            window=window,
            clahe=clahe,
            featurizer_kind=kind,
            featurizer_grid=grid,
            split_fractions=fractions,
            train_normal_rate=_rate_value(train_raw.get("normal_rate", 0.5)),
            train_anomaly_rate=_rate_value(train_raw.get("anomaly_rate", 0.5)),
            hidden=int(train_raw.get("hidden", 128)),
            learning_rate=float(train_raw.get("learning_rate", 0.01)),
            batch_size=int(train_raw.get("batch_size", 4)),
            epochs=int(train_raw.get("epochs", 50)),
            grad_clip=(
                None if train_raw.get("grad_clip") is None
                else float(train_raw["grad_clip"])
            ),
            normal_rates=tuple(
                _rate_value(r) for r in eval_raw.get("normal_rates", ("1/2", "2/3", "1"))
            ),
            anomaly_rates=tuple(
                _rate_value(r) for r in eval_raw.get("anomaly_rates", ("1/2", "2/3", "1"))
            ),
            histogram_bins=int(eval_raw.get("histogram_bins", 20)),
            threshold_on_test=bool(eval_raw.get("threshold_on_test", False)),
        )
    except ConfigError:
        raise
    except KeyError as exc:
        raise ConfigError(f"config {path}: missing required key {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config {path}: {exc}") from exc
    if not cfg.manifest.exists():
        raise ConfigError(f"manifest {cfg.manifest} does not exist")
    return cfg


def _hash_key(payload) -> str:
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def _stage_fresh(meta_dir: Path, name: str, key: str, outputs) -> bool:
    """True when the stage must run (missing outputs or changed key)."""
    meta_path = meta_dir / f"{name}.json"
    if not all(Path(p).exists() for p in outputs):
        return True
    if not meta_path.exists():
        return True
    try:
        return json.loads(meta_path.read_text()).get("key") != key
    except (OSError, json.JSONDecodeError):
        return True


def _stage_done(meta_dir: Path, name: str, key: str) -> None:
    (meta_dir / f"{name}.json").write_text(
        json.dumps({"stage": name, "key": key}, sort_keys=True) + "\n"
    )


def read_labels_file(path) -> np.ndarray:
    text = Path(path).read_text().strip()
    if not text or not set(text) <= {"0", "1"}:
        raise ParseError(f"{path}: expected one line of 0/1 characters")
    return np.array([int(c) for c in text], dtype=np.int64)


def _load_videos(manifest_path) -> tuple[list[VideoFeatures], dict[str, str]]:
    entries = read_manifest(manifest_path)
    videos = []
    subject_map = {}
    for entry in entries:
        loaded = load_feature_file(entry.path)
        for video in loaded:
            if len(loaded) == 1 and video.video_id != entry.video_id:
                raise ParseError(
                    f"{entry.path}: holds video {video.video_id!r}, "
                    f"manifest says {entry.video_id!r}"
                )
            videos.append(video)
            subject_map[video.video_id] = entry.subject_id
    return videos, subject_map


def featurize_frames_manifest(
    manifest_path,
    out_dir,
    grid: int,
    clahe_cfg: ClaheConfig | None,
) -> Path:
    """Turn a frames manifest (npy stacks + label files) into feature files.

    Returns the path of the written feature manifest.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    featurizer = PatchStatsFeaturizer(grid)
    new_entries = []
    for entry in read_manifest(manifest_path):
        if entry.labels_path is None:
            raise ParseError(
                f"frames manifest entry {entry.video_id!r} needs a labels path"
            )
        frames = np.load(entry.path)
        if frames.ndim != 3:
            raise ParseError(f"{entry.path}: expected a (frames, H, W) array")
        labels = read_labels_file(entry.labels_path)
        if labels.size != frames.shape[0]:
            raise ParseError(
                f"{entry.video_id!r}: {labels.size} labels for {frames.shape[0]} frames"
            )
        if clahe_cfg is not None:
            frames = np.stack([clahe_enhance(f, clahe_cfg) for f in frames])
        seq = featurize_sequence(list(frames), featurizer)
        path = out_dir / f"{entry.video_id}.txt"
        write_feature_file(path, [VideoFeatures(entry.video_id, seq, labels)])
        new_entries.append(
            type(entry)(entry.video_id, entry.subject_id, str(path))
        )
    manifest_out = out_dir / "feature_manifest.txt"
    write_manifest(manifest_out, new_entries)
    return manifest_out


def write_scores_file(path, scored_rows) -> None:
    """Rows of ``clip_id score true_label``; scores at full precision."""
    with open(path, "w") as fh:
        for clip_id, score, label in scored_rows:
            fh.write(f"{clip_id} {score:.16e} {label}\n")


def read_scores_file(path) -> list[tuple[str, float, int]]:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if len(fields) != 3:
                raise ParseError(f"{path}: line {lineno}: expected 'clip_id score label'")
            rows.append((fields[0], float(fields[1]), int(fields[2])))
    return rows


def write_clip_frames_file(path, clips) -> None:
    """Per-clip sampled frame labels, for later re-labeling at other rates."""
    with open(path, "w") as fh:
        for clip in clips:
            labels = "".join(str(int(v)) for v in clip.frame_labels)
            fh.write(f"{clip.clip_id} {labels}\n")


@dataclass
class ClipRecord:
    """Clip identity plus its sampled frame labels (enough to re-label)."""

    clip_id: str
    frame_labels: np.ndarray


def read_clip_frames_file(path) -> list[ClipRecord]:
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if len(fields) != 2 or not set(fields[1]) <= {"0", "1"}:
                raise ParseError(f"{path}: line {lineno}: expected 'clip_id 0/1-labels'")
            records.append(
                ClipRecord(fields[0], np.array([int(c) for c in fields[1]], dtype=np.int64))
            )
    return records


@dataclass
class PipelineResult:
    grid: GridReport
    output_dir: Path
    scores_path: Path
    report_dir: Path
    checkpoint_path: Path
    stages_run: dict[str, bool] = field(default_factory=dict)


def _window_split(videos, subject_map, splits, window: WindowSpec):
    by_split = {"train": [], "val": [], "test": []}
    assignment = {}
    for name, ids in splits.as_dict().items():
        for vid in ids:
            assignment[vid] = name
    for video in videos:
        name = assignment.get(video.video_id)
        if name is None:
            continue
        by_split[name].extend(extract_clips(video, window))
    return by_split


def run_pipeline(cfg: ExperimentConfig) -> PipelineResult:
    """Execute all stages; returns the test-set rate grid and artifact paths."""
    out = Path(cfg.output_dir)
    meta_dir = out / "meta"
    report_dir = out / "report"
    for d in (out, meta_dir, report_dir):
        d.mkdir(parents=True, exist_ok=True)

    manifest_digest = hashlib.sha256(Path(cfg.manifest).read_bytes()).hexdigest()

    # --- featurize -------------------------------------------------------
    if cfg.featurizer_kind == "patch_stats":
        feat_key = _hash_key(
            {
                "manifest": manifest_digest,
                "grid": cfg.featurizer_grid,
                "clahe": None if cfg.clahe is None else
                    [cfg.clahe.clip_limit, cfg.clahe.grid],
            }
        )
        feature_manifest = out / "features" / "feature_manifest.txt"
        if _stage_fresh(meta_dir, "featurize", feat_key, [feature_manifest]):
            try:
                featurize_frames_manifest(
                    cfg.manifest, out / "features", cfg.featurizer_grid, cfg.clahe
                )
            except Exception as exc:
                raise StageError("featurize", exc) from exc
            _stage_done(meta_dir, "featurize", feat_key)
            ran_featurize = True
        else:
            ran_featurize = False
    else:
        feat_key = _hash_key({"manifest": manifest_digest, "precomputed": True})
        feature_manifest = Path(cfg.manifest)
        ran_featurize = False

    try:
        videos, subject_map = _load_videos(feature_manifest)
    except Exception as exc:
        raise StageError("dataset", exc) from exc

    # --- split -----------------------------------------------------------
    split_key = _hash_key(
        {"parent": feat_key, "fractions": list(cfg.split_fractions), "seed": cfg.seed}
    )
    splits_path = out / "splits.txt"
    ran_split = _stage_fresh(meta_dir, "split", split_key, [splits_path])
    if ran_split:
        try:
            splits = build_splits(
                [v.video_id for v in videos],
                subject_map,
                cfg.split_fractions,
                stage_seed(cfg.seed, "split"),
            )
            write_split_file(splits_path, splits)
        except Exception as exc:
            raise StageError("split", exc) from exc
        _stage_done(meta_dir, "split", split_key)
    else:
        splits = read_split_file(splits_path)

    by_split = _window_split(videos, subject_map, splits, cfg.window)

    # --- train -----------------------------------------------------------
    train_key = _hash_key(
        {
            "parent": split_key,
            "window": [cfg.window.clip_len, cfg.window.sample_rate, cfg.window.stride],
            "rates": [cfg.train_normal_rate, cfg.train_anomaly_rate],
            "train": [
                cfg.hidden, cfg.learning_rate, cfg.batch_size, cfg.epochs,
                cfg.grad_clip, cfg.seed,
            ],
        }
    )
    checkpoint_path = out / "checkpoint.npz"
    training_clips_path = out / "training_clips.txt"
    trace_path = out / "loss_trace.txt"
    ran_train = _stage_fresh(
        meta_dir, "train", train_key,
        [checkpoint_path, training_clips_path, trace_path],
    )
    if ran_train:
        try:
            rates = RateConfig(cfg.train_normal_rate, cfg.train_anomaly_rate)
            normal_clips = filter_normal_clips(by_split["train"], rates)
            with open(training_clips_path, "w") as fh:
                for clip in normal_clips:
                    fh.write(clip.clip_id + "\n")
            result = train(
                [c.features for c in normal_clips],
                TrainConfig(
                    epochs=cfg.epochs,
                    hidden=cfg.hidden,
                    learning_rate=cfg.learning_rate,
                    batch_size=cfg.batch_size,
                    seed=stage_seed(cfg.seed, "train"),
                    grad_clip=cfg.grad_clip,
                ),
            )
            save_checkpoint(checkpoint_path, result.params)
            with open(trace_path, "w") as fh:
                for epoch, loss in enumerate(result.epoch_losses, start=1):
                    fh.write(f"{epoch} {loss:.16e}\n")
        except Exception as exc:
            raise StageError("train", exc) from exc
        _stage_done(meta_dir, "train", train_key)

    # --- score -----------------------------------------------------------
    score_key = _hash_key({"parent": train_key})
    scores_path = out / "scores.txt"
    scores_val_path = out / "scores_val.txt"
    frames_test_path = out / "clip_frames_test.txt"
    frames_val_path = out / "clip_frames_val.txt"
    score_outputs = [scores_path, scores_val_path, frames_test_path, frames_val_path]
    ran_score = _stage_fresh(meta_dir, "score", score_key, score_outputs)
    if ran_score:
        try:
            params = load_checkpoint(checkpoint_path)
            majority = RateConfig(0.5, 0.5)
            for clips, s_path, f_path in (
                (by_split["test"], scores_path, frames_test_path),
                (by_split["val"], scores_val_path, frames_val_path),
            ):
                rows = []
                for clip in clips:
                    label = assign_clip_label(clip.frame_labels, majority)
                    rows.append(
                        (
                            clip.clip_id,
                            anomaly_score(clip.features, params),
                            int(label is Label.ANOMALOUS),
                        )
                    )
                write_scores_file(s_path, rows)
                write_clip_frames_file(f_path, clips)
        except Exception as exc:
            raise StageError("score", exc) from exc
        _stage_done(meta_dir, "score", score_key)

    # --- report ----------------------------------------------------------
    report_key = _hash_key(
        {
            "parent": score_key,
            "normal_rates": list(cfg.normal_rates),
            "anomaly_rates": list(cfg.anomaly_rates),
            "bins": cfg.histogram_bins,
            "threshold_on_test": cfg.threshold_on_test,
        }
    )
    grid_csv = report_dir / "grid.csv"
    report_txt = report_dir / "report.txt"
    try:
        test_records = read_clip_frames_file(frames_test_path)
        test_scores = [row[1] for row in read_scores_file(scores_path)]
        if cfg.threshold_on_test:
            threshold_clips, threshold_scores = None, None
        else:
            threshold_clips = read_clip_frames_file(frames_val_path)
            threshold_scores = [row[1] for row in read_scores_file(scores_val_path)]
        grid = rate_grid_report(
            test_records,
            test_scores,
            cfg.normal_rates,
            cfg.anomaly_rates,
            threshold_clips=threshold_clips,
            threshold_scores=threshold_scores,
            n_bins=cfg.histogram_bins,
        )
        ran_report = _stage_fresh(meta_dir, "report", report_key, [grid_csv, report_txt])
        if ran_report:
            write_grid_csv(grid, grid_csv)
            report_txt.write_text(render_grid_text(grid))
            for (nr, ar), rep in sorted(grid.cells.items()):
                hist_path = report_dir / f"hist_nr{nr:.3f}_ar{ar:.3f}.txt"
                write_histogram_file(rep, hist_path)
            _stage_done(meta_dir, "report", report_key)
    except StageError:
        raise
    except Exception as exc:
        raise StageError("report", exc) from exc

    return PipelineResult(
        grid=grid,
        output_dir=out,
        scores_path=scores_path,
        report_dir=report_dir,
        checkpoint_path=checkpoint_path,
        stages_run={
            "featurize": ran_featurize,
            "split": ran_split,
            "train": ran_train,
            "score": ran_score,
            "report": ran_report,
        },
    )


def _as_metric_map(report) -> dict[str, float | None]:
    if isinstance(report, EvalReport):
        m = report.metrics
        return {
            "auc": report.auc,
            "accuracy": None if m is None else m.accuracy,
            "recall": None if m is None else m.recall,
            "precision": None if m is None else m.precision,
            "f1": None if m is None else m.f1,
        }
    if isinstance(report, dict):
        return {k: report.get(k) for k in ("auc", "accuracy", "recall", "precision", "f1")}
    return {"auc": float(report), "accuracy": None, "recall": None,
            "precision": None, "f1": None}


def compare_table(labeled_reports) -> str:
    """Side-by-side metric columns for several runs or settings.

    Accepts (label, report) pairs where report is an EvalReport, a mapping
    with metric keys, or a bare AUC number.
    """
    labeled = list(labeled_reports)
    if len(labeled) < 2:
        raise ValueError("need at least two reports to compare")
    maps = [(label, _as_metric_map(rep)) for label, rep in labeled]
    col = max(12, *(len(label) + 2 for label, _ in maps))
    lines = ["Metric".ljust(12) + "".join(label.rjust(col) for label, _ in maps)]
    for key in ("auc", "accuracy", "recall", "precision", "f1"):
        row = key.upper().ljust(12) if key == "auc" else key.capitalize().ljust(12)
        for _, metrics in maps:
            v = metrics.get(key)
            row += ("-" if v is None else f"{v:.4f}").rjust(col)
        lines.append(row)
    return "\n".join(lines) + "\n"
