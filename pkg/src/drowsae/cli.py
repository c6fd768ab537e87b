"""Command line front end.

Subcommands: synth, enhance, featurize, window, split, train, score,
evaluate, report, run. Exit codes: 0 success, 2 configuration error,
3 data error, 4 training divergence.
"""

from __future__ import annotations

import argparse
import sys
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
    window_video,
    write_split_file,
)
from .errors import (
    ConfigError,
    DivergenceError,
    DrowsaeError,
    StageError,
)
from .evaluation import ScoredClip, rate_grid_report, render_grid_text, write_grid_csv, write_histogram_file
from .pipeline import (
    _load_videos,
    compare_table,
    featurize_frames_manifest,
    load_config,
    read_clip_frames_file,
    read_scores_file,
    run_pipeline,
    stage_seed,
    write_clip_frames_file,
    write_scores_file,
)
from .synthetic import ANOMALY_KINDS, SyntheticSpec, generate_synthetic

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


def _add_clahe_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--clahe", default="on", choices=("on", "off"),
                   help="disable contrast enhancement with 'off'")
    p.add_argument("--clahe-limit", type=float, default=5.0,
                   help="histogram clip limit (default 5)")
    p.add_argument("--clahe-grid", type=int, default=8,
                   help="tile grid size per side (default 8)")


def _clahe_from_args(args) -> ClaheConfig | None:
    if args.clahe == "off":
        return None
    return ClaheConfig(clip_limit=args.clahe_limit, grid=args.clahe_grid)


def _add_window_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--clip-len", type=int, default=48, help="frames per clip (default 48)")
    p.add_argument("--sample-rate", type=int, default=2,
                   help="keep every k-th frame (default 2)")
    p.add_argument("--stride", type=int, default=23,
                   help="raw-frame step between clip starts (default 23)")


def _window_from_args(args) -> WindowSpec:
    return WindowSpec(clip_len=args.clip_len, sample_rate=args.sample_rate,
                      stride=args.stride)


def _add_rate_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--normal-rate", default="1/2",
                   help="min fraction of normal frames for a Normal clip (default 1/2)")
    p.add_argument("--anomaly-rate", default="1/2",
                   help="min fraction of anomalous frames for an Anomalous clip (default 1/2)")


def _rates_from_args(args) -> RateConfig:
    return RateConfig(parse_rate(args.normal_rate), parse_rate(args.anomaly_rate))


def _rate_list(text: str) -> tuple[float, ...]:
    return tuple(parse_rate(tok) for tok in text.split(",") if tok.strip())


def _parse_fraction(tok: str) -> float:
    # split fractions may be 0 (empty split), unlike confidence rates
    tok = tok.strip()
    if "/" in tok:
        num, den = tok.split("/", 1)
        value = float(num) / float(den)
    else:
        value = float(tok)
    if value < 0:
        raise ConfigError(f"fraction {tok!r} must be non-negative")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drowsae",
        description="Anomaly detection on driving video features with an LSTM autoencoder.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-normal", type=int, default=8)
    p.add_argument("--n-anomaly", type=int, default=4)
    p.add_argument("--frames", type=int, default=200, help="frames per video")
    p.add_argument("--dim", type=int, default=8, help="feature dimension")
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--anomaly-kinds", default=",".join(ANOMALY_KINDS),
                   help="comma list from {jump,freeze}")
    p.add_argument("--segments", type=int, default=2, help="anomaly segments per video")
    p.add_argument("--segment-frac", type=float, default=0.22)
    p.add_argument("--jump-scale", type=float, default=1.5)

    p = sub.add_parser("enhance", help="contrast-enhance a stack of grayscale frames")
    p.add_argument("--frames", required=True, help="input .npy array (frames, H, W)")
    p.add_argument("--out", required=True, help="output .npy path")
    _add_clahe_args(p)

    p = sub.add_parser("featurize", help="frames manifest -> per-video feature files")
    p.add_argument("--manifest", required=True,
                   help="4-column manifest: video_id subject_id frames.npy labels.txt")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--grid", type=int, default=4, help="patch grid per side (default 4)")
    _add_clahe_args(p)

    p = sub.add_parser("window", help="report clip windows per video")
    p.add_argument("--manifest", required=True, help="feature manifest")
    _add_window_args(p)
    p.add_argument("--out", help="also write 'clip_id video_id start labels' rows")

    p = sub.add_parser("split", help="assign videos to train/val/test by subject")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output split file")
    p.add_argument("--fractions", default="1/2,1/4,1/4",
                   help="subject fractions train,val,test (default 1/2,1/4,1/4)")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train the autoencoder on normal training clips")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", required=True, help="split file from the split command")
    p.add_argument("--out", required=True, help="checkpoint output path (.npz)")
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grad-clip", type=float, default=None,
                   help="global gradient norm cap (default off)")
    p.add_argument("--trace", help="write 'epoch loss' lines here")
    p.add_argument("--clips-out", help="write the ids of clips actually trained on")
    _add_window_args(p)
    _add_rate_args(p)

    p = sub.add_parser("score", help="score clips of one split with a checkpoint")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="scores file: clip_id score label")
    p.add_argument("--split-name", default="test", choices=("train", "val", "test"))
    p.add_argument("--clip-frames-out",
                   help="also record sampled frame labels per clip for re-labeling")
    _add_window_args(p)

    p = sub.add_parser("evaluate", help="rate-grid metrics from score files")
    p.add_argument("--scores", required=True)
    p.add_argument("--clip-frames", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--normal-rates", default="1/2,2/3,1")
    p.add_argument("--anomaly-rates", default="1/2,2/3,1")
    p.add_argument("--threshold-scores",
                   help="validation scores used to pick the operating threshold")
    p.add_argument("--threshold-clip-frames")
    p.add_argument("--threshold-on-test", action="store_true",
                   help="pick the threshold on the evaluated scores themselves")
    p.add_argument("--bins", type=int, default=20, help="histogram bins (default 20)")

    p = sub.add_parser("report", help="side-by-side table from saved grid CSVs")
    p.add_argument("--grids", required=True, nargs="+", help="grid.csv files to compare")
    p.add_argument("--labels", required=True, help="comma list, one label per grid")
    p.add_argument("--normal-rate", default="1/2")
    p.add_argument("--anomaly-rate", default="1/2")

    p = sub.add_parser("run", help="run the whole pipeline from a JSON config")
    p.add_argument("--config", required=True)

    return parser


def _cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n_normal_videos=args.n_normal,
        n_anomaly_videos=args.n_anomaly,
        frames_per_video=args.frames,
        dim=args.dim,
        noise_scale=args.noise,
        anomaly_kinds=tuple(k for k in args.anomaly_kinds.split(",") if k),
        segments_per_video=args.segments,
        segment_frac=args.segment_frac,
        jump_scale=args.jump_scale,
    )
    manifest = generate_synthetic(spec, args.seed, args.out)
    print(manifest)
    return EXIT_OK


def _cmd_enhance(args) -> int:
    cfg = _clahe_from_args(args)
    frames = np.load(args.frames)
    if frames.ndim == 2:
        frames = frames[None]
    if frames.ndim != 3:
        raise ConfigError(f"{args.frames}: expected a (frames, H, W) array")
    if cfg is None:
        out = frames.astype(np.uint8)
    else:
        out = np.stack([clahe_enhance(f, cfg) for f in frames])
    np.save(args.out, out)
    print(f"{out.shape[0]} frames -> {args.out}")
    return EXIT_OK


def _cmd_featurize(args) -> int:
    manifest = featurize_frames_manifest(
        args.manifest, args.out_dir, args.grid, _clahe_from_args(args)
    )
    print(manifest)
    return EXIT_OK


def _cmd_window(args) -> int:
    spec = _window_from_args(args)
    videos, _ = _load_videos(args.manifest)
    out_fh = open(args.out, "w") if args.out else None
    try:
        total = 0
        for video in videos:
            starts = window_video(video.n_frames, spec)
            total += len(starts)
            print(f"{video.video_id} frames={video.n_frames} clips={len(starts)}")
            if out_fh is not None:
                for clip in extract_clips(video, spec):
                    labels = "".join(str(int(v)) for v in clip.frame_labels)
                    out_fh.write(
                        f"{clip.clip_id} {video.video_id} {clip.start} {labels}\n"
                    )
        print(f"total clips={total} (span={spec.span})")
    finally:
        if out_fh is not None:
            out_fh.close()
    return EXIT_OK


def _cmd_split(args) -> int:
    fractions = tuple(_parse_fraction(tok) for tok in args.fractions.split(","))
    if len(fractions) != 3:
        raise ConfigError("--fractions needs exactly 3 comma-separated values")
    videos, subject_map = _load_videos(args.manifest)
    splits = build_splits(
        [v.video_id for v in videos], subject_map, fractions, args.seed
    )
    write_split_file(args.out, splits)
    for name, ids in splits.as_dict().items():
        print(f"{name}: {len(ids)} videos")
    return EXIT_OK


def _select_split_clips(manifest, split_path, spec, split_name):
    videos, _ = _load_videos(manifest)
    splits = read_split_file(split_path)
    wanted = set(splits.as_dict()[split_name])
    clips = []
    for video in videos:
        if video.video_id in wanted:
            clips.extend(extract_clips(video, spec))
    return clips


def _cmd_train(args) -> int:
    spec = _window_from_args(args)
    clips = _select_split_clips(args.manifest, args.split, spec, "train")
    normal_clips = filter_normal_clips(clips, _rates_from_args(args))
    if args.clips_out:
        with open(args.clips_out, "w") as fh:
            for clip in normal_clips:
                fh.write(clip.clip_id + "\n")
    result = train(
        [c.features for c in normal_clips],
        TrainConfig(
            epochs=args.epochs,
            hidden=args.hidden,
            learning_rate=args.lr,
            batch_size=args.batch_size,
            seed=args.seed,
            grad_clip=args.grad_clip,
        ),
    )
    save_checkpoint(args.out, result.params)
    if args.trace:
        with open(args.trace, "w") as fh:
            for epoch, loss in enumerate(result.epoch_losses, start=1):
                fh.write(f"{epoch} {loss:.16e}\n")
    print(
        f"trained on {len(normal_clips)} clips, "
        f"epoch loss {result.epoch_losses[0]:.6g} -> {result.epoch_losses[-1]:.6g}"
    )
    return EXIT_OK


def _cmd_score(args) -> int:
    spec = _window_from_args(args)
    clips = _select_split_clips(args.manifest, args.split, spec, args.split_name)
    params = load_checkpoint(args.checkpoint)
    majority = RateConfig(0.5, 0.5)
    rows = []
    for clip in clips:
        label = assign_clip_label(clip.frame_labels, majority)
        rows.append(
            (clip.clip_id, anomaly_score(clip.features, params),
             int(label is Label.ANOMALOUS))
        )
    write_scores_file(args.out, rows)
    if args.clip_frames_out:
        write_clip_frames_file(args.clip_frames_out, clips)
    print(f"scored {len(rows)} {args.split_name} clips -> {args.out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    records = read_clip_frames_file(args.clip_frames)
    score_rows = read_scores_file(args.scores)
    if len(records) != len(score_rows):
        raise ConfigError(
            f"{args.scores} has {len(score_rows)} rows but "
            f"{args.clip_frames} has {len(records)}"
        )
    scores = [row[1] for row in score_rows]
    if args.threshold_on_test:
        threshold_clips, threshold_scores = None, None
    elif args.threshold_scores:
        if not args.threshold_clip_frames:
            raise ConfigError("--threshold-scores needs --threshold-clip-frames")
        threshold_clips = read_clip_frames_file(args.threshold_clip_frames)
        threshold_scores = [row[1] for row in read_scores_file(args.threshold_scores)]
    else:
        raise ConfigError(
            "pass --threshold-scores/--threshold-clip-frames or --threshold-on-test"
        )
    grid = rate_grid_report(
        records,
        scores,
        _rate_list(args.normal_rates),
        _rate_list(args.anomaly_rates),
        threshold_clips=threshold_clips,
        threshold_scores=threshold_scores,
        n_bins=args.bins,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_grid_csv(grid, out_dir / "grid.csv")
    text = render_grid_text(grid)
    (out_dir / "report.txt").write_text(text)
    for (nr, ar), rep in sorted(grid.cells.items()):
        write_histogram_file(rep, out_dir / f"hist_nr{nr:.3f}_ar{ar:.3f}.txt")
    print(text, end="")
    return EXIT_OK


def _read_grid_cell(path, nr: float, ar: float) -> dict:
    import csv

    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if (abs(float(row["normal_rate"]) - nr) < 1e-9
                    and abs(float(row["anomaly_rate"]) - ar) < 1e-9):
                return {
                    k: (float(row[k]) if row.get(k) not in (None, "", "-") else None)
                    for k in ("auc", "accuracy", "recall", "precision", "f1")
                }
    raise ConfigError(f"{path}: no cell for rates ({nr:g}, {ar:g})")


def _cmd_report(args) -> int:
    labels = [tok.strip() for tok in args.labels.split(",") if tok.strip()]
    if len(labels) != len(args.grids):
        raise ConfigError(
            f"{len(args.grids)} grids but {len(labels)} labels"
        )
    nr = parse_rate(args.normal_rate)
    ar = parse_rate(args.anomaly_rate)
    pairs = [
        (label, _read_grid_cell(path, nr, ar))
        for label, path in zip(labels, args.grids)
    ]
    print(compare_table(pairs), end="")
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    result = run_pipeline(cfg)
    for name, ran in result.stages_run.items():
        print(f"{name}: {'ran' if ran else 'cached'}")
    print(f"report: {result.report_dir / 'report.txt'}")
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "enhance": _cmd_enhance,
    "featurize": _cmd_featurize,
    "window": _cmd_window,
    "split": _cmd_split,
    "train": _cmd_train,
    "score": _cmd_score,
    "evaluate": _cmd_evaluate,
    "report": _cmd_report,
    "run": _cmd_run,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except StageError as exc:
        cause = exc.cause
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(cause, DivergenceError):
            return EXIT_DIVERGED
        if isinstance(cause, ConfigError):
            return EXIT_CONFIG
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DrowsaeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
