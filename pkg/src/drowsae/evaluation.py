"""Turn per-clip anomaly scores into ROC curves, AUC, and report tables.

Scores are swept over their distinct values (predicting anomalous when
score >= threshold, ties grouped), giving a staircase ROC whose trapezoidal
area equals the pairwise Mann-Whitney statistic with half credit for ties.
A single operating point is chosen by maximizing Youden's J = tpr - fpr,
breaking ties toward the lower threshold (higher recall). The rate grid
re-labels the same scored clips under every combination of normal/anomaly
confidence rates and evaluates each cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Label, RateConfig, assign_clip_label
from .errors import SingleClassError

#: Sentinel for evaluate_scored: pick the threshold on the given scores.
AUTO = "auto"


@dataclass(frozen=True)
class ScoredClip:
    clip_id: str
    score: float
    true_label: int  # 0 = normal, 1 = anomalous

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError(f"score for {self.clip_id!r} is not finite")
        if self.true_label not in (0, 1):
            raise ValueError(f"true_label must be 0 or 1, got {self.true_label}")


def _split_scores(scored) -> tuple[np.ndarray, np.ndarray]:
    pos = np.array([s.score for s in scored if s.true_label == 1], dtype=np.float64)
    neg = np.array([s.score for s in scored if s.true_label == 0], dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise SingleClassError(
            f"need both classes, got {pos.size} anomalous / {neg.size} normal"
        )
    return pos, neg


def _sweep(scored):
    """(threshold, fpr, tpr) for each distinct score, descending."""
    pos, neg = _split_scores(scored)
    thresholds = np.unique(np.concatenate([pos, neg]))[::-1]
    points = []
    for thr in thresholds:
        tpr = float(np.count_nonzero(pos >= thr)) / pos.size
        fpr = float(np.count_nonzero(neg >= thr)) / neg.size
        points.append((float(thr), fpr, tpr))
    return points


def roc_curve(scored) -> list[tuple[float, float]]:
    """(fpr, tpr) staircase from (0, 0) to (1, 1), tied scores grouped."""
    return [(0.0, 0.0)] + [(fpr, tpr) for _, fpr, tpr in _sweep(scored)]


def auc(points) -> float:
    """Trapezoidal area under an ROC polyline."""
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def select_threshold(scored) -> float:
    """Score threshold maximizing Youden's J, ties going to the lower value."""
    best_thr = None
    best_j = -np.inf
    for thr, fpr, tpr in _sweep(scored):
        j = tpr - fpr
        if j >= best_j:  # descending sweep: >= prefers the lowest threshold
            best_j = j
            best_thr = thr
    return best_thr


@dataclass(frozen=True)
class ConfusionMetrics:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    recall: float
    precision: float
    f1: float
    # False when the corresponding denominator was 0 and the value forced to 0.
    recall_defined: bool = True
    precision_defined: bool = True
    f1_defined: bool = True


def confusion_metrics(scored, threshold: float) -> ConfusionMetrics:
    """Metrics for the rule "anomalous iff score >= threshold"."""
    if not np.isfinite(threshold):
        raise ValueError(f"threshold must be finite, got {threshold}")
    if not scored:
        raise ValueError("no scored clips")
    tp = fp = tn = fn = 0
    for s in scored:
        predicted = s.score >= threshold
        if predicted and s.true_label == 1:
            tp += 1
        elif predicted:
            fp += 1
        elif s.true_label == 1:
            fn += 1
        else:
            tn += 1
    accuracy = (tp + tn) / len(scored)
    recall_defined = (tp + fn) > 0
    precision_defined = (tp + fp) > 0
    recall = tp / (tp + fn) if recall_defined else 0.0
    precision = tp / (tp + fp) if precision_defined else 0.0
    f1_defined = precision + recall > 0
    f1 = 2 * precision * recall / (precision + recall) if f1_defined else 0.0
    return ConfusionMetrics(
        tp, fp, tn, fn, accuracy, recall, precision, f1,
        recall_defined, precision_defined, f1_defined,
    )


def score_histogram(scored, n_bins: int, value_range: tuple[float, float]):
    """Per-class equal-width bin counts; out-of-range scores clamp to end bins.

    Returns (edges, normal_counts, anomalous_counts).
    """
    if n_bins < 1:
        raise ValueError(f"n_bins must be >= 1, got {n_bins}")
    lo, hi = float(value_range[0]), float(value_range[1])
    if not hi > lo:
        raise ValueError(f"empty histogram range ({lo}, {hi})")
    edges = np.linspace(lo, hi, n_bins + 1)
    counts = {0: np.zeros(n_bins, dtype=np.int64), 1: np.zeros(n_bins, dtype=np.int64)}
    width = (hi - lo) / n_bins
    for s in scored:
        idx = int(np.floor((s.score - lo) / width))
        counts[s.true_label][min(max(idx, 0), n_bins - 1)] += 1
    return edges, counts[0], counts[1]


@dataclass
class EvalReport:
    """Evaluation of one scored clip set at one operating point."""

    roc: list[tuple[float, float]]
    auc: float
    threshold: float | None
    metrics: ConfusionMetrics | None
    hist_edges: np.ndarray
    hist_normal: np.ndarray
    hist_anomalous: np.ndarray
    n_normal: int
    n_anomalous: int
    n_unassigned: int = 0
    threshold_note: str = ""


def evaluate_scored(
    scored,
    threshold=AUTO,
    n_bins: int = 20,
    hist_range: tuple[float, float] | None = None,
    n_unassigned: int = 0,
    threshold_note: str = "",
) -> EvalReport:
    """Full report for a scored clip set.

    ``threshold`` may be a number (use as-is), ``AUTO`` (maximize Youden's J
    on this set), or None (report AUC/ROC only, no confusion metrics).
    """
    points = roc_curve(scored)
    if threshold == AUTO:
        threshold = select_threshold(scored)
        threshold_note = threshold_note or "in-sample"
    if hist_range is None:
        top = max(s.score for s in scored)
        hist_range = (0.0, top if top > 0 else 1.0)
    edges, h_norm, h_anom = score_histogram(scored, n_bins, hist_range)
    metrics = confusion_metrics(scored, threshold) if threshold is not None else None
    return EvalReport(
        roc=points,
        auc=auc(points),
        threshold=threshold,
        metrics=metrics,
        hist_edges=edges,
        hist_normal=h_norm,
        hist_anomalous=h_anom,
        n_normal=sum(1 for s in scored if s.true_label == 0),
        n_anomalous=sum(1 for s in scored if s.true_label == 1),
        n_unassigned=n_unassigned,
        threshold_note=threshold_note,
    )


@dataclass
class GridReport:
    """EvalReports for every (normal_rate, anomaly_rate) combination.

    Cells that cannot be evaluated (single-class test set) carry an error
    string instead of a report; their clip counts are still recorded.
    """

    normal_rates: list[float]
    anomaly_rates: list[float]
    cells: dict = field(default_factory=dict)         # (nr, ar) -> EvalReport
    cell_errors: dict = field(default_factory=dict)   # (nr, ar) -> str
    counts: dict = field(default_factory=dict)        # (nr, ar) -> (n_norm, n_anom, n_unassigned)


def _relabel(clips, scores, rates: RateConfig):
    scored = []
    n_unassigned = 0
    for clip, score in zip(clips, scores):
        label = assign_clip_label(clip.frame_labels, rates)
        if label is Label.UNASSIGNED:
            n_unassigned += 1
        else:
            scored.append(
                ScoredClip(clip.clip_id, float(score), int(label is Label.ANOMALOUS))
            )
    return scored, n_unassigned


def rate_grid_report(
    clips,
    scores,
    normal_rates,
    anomaly_rates,
    threshold_clips=None,
    threshold_scores=None,
    n_bins: int = 20,
) -> GridReport:
    """Evaluate the scored test clips under every rate combination.

    Each cell drops clips left unassigned by its rates and evaluates the
    rest. When ``threshold_clips``/``threshold_scores`` (e.g. a validation
    split) are given, the cell threshold is chosen there and applied here;
    otherwise it is chosen in-sample. A threshold source degenerating to a
    single class leaves the cell without an operating point but keeps AUC.
    """
    clips = list(clips)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(clips),):
        raise ValueError(f"{len(clips)} clips but {scores.shape} scores")
    hist_top = float(scores.max()) if len(clips) and scores.max() > 0 else 1.0
    grid = GridReport(list(normal_rates), list(anomaly_rates))
    for ar in grid.anomaly_rates:
        for nr in grid.normal_rates:
            rates = RateConfig(normal_rate=nr, anomaly_rate=ar)
            scored, n_unassigned = _relabel(clips, scores, rates)
            n_anom = sum(1 for s in scored if s.true_label == 1)
            grid.counts[(nr, ar)] = (len(scored) - n_anom, n_anom, n_unassigned)

            threshold = AUTO
            note = ""
            if threshold_clips is not None:
                val_scored, _ = _relabel(threshold_clips, threshold_scores, rates)
                try:
                    threshold = select_threshold(val_scored)
                    note = "from-validation"
                except SingleClassError:
                    threshold = None
                    note = "unavailable: validation set single-class"
            try:
                grid.cells[(nr, ar)] = evaluate_scored(
                    scored,
                    threshold=threshold,
                    n_bins=n_bins,
                    hist_range=(0.0, hist_top),
                    n_unassigned=n_unassigned,
                    threshold_note=note,
                )
            except SingleClassError as exc:
                grid.cell_errors[(nr, ar)] = str(exc)
    return grid


def _rate_label(r: float) -> str:
    return f"{r:.4g}"


def render_grid_text(grid: GridReport) -> str:
    """Fixed-width text table: one block per metric, anomaly rates as rows."""
    blocks = [
        ("AUC", lambda rep: f"{rep.auc:.4f}"),
        ("Accuracy (%)", lambda rep: _pct(rep, "accuracy")),
        ("Recall (%)", lambda rep: _pct(rep, "recall")),
        ("Precision (%)", lambda rep: _pct(rep, "precision")),
        ("F1 (%)", lambda rep: _pct(rep, "f1")),
        ("Test clips (norm/anom/dropped)", _count_cell),
    ]
    width = max(14, *(len(f"normal {_rate_label(nr)}") + 2 for nr in grid.normal_rates))
    lines = []
    for title, fmt in blocks:
        lines.append(f"== {title} ==")
        header = " " * 14 + "".join(
            f"normal {_rate_label(nr)}".rjust(width) for nr in grid.normal_rates
        )
        lines.append(header)
        for ar in grid.anomaly_rates:
            row = f"anomaly {_rate_label(ar)}".ljust(14)
            for nr in grid.normal_rates:
                if (nr, ar) in grid.cells:
                    cell = fmt(grid.cells[(nr, ar)])
                elif fmt is _count_cell:
                    n0, n1, nu = grid.counts[(nr, ar)]
                    cell = f"{n0}/{n1}/{nu}"
                else:
                    cell = "-"
                row += cell.rjust(width)
            lines.append(row)
        lines.append("")
    for key, err in sorted(grid.cell_errors.items()):
        lines.append(f"cell (normal {_rate_label(key[0])}, anomaly {_rate_label(key[1])}): {err}")
    return "\n".join(lines).rstrip() + "\n"


def _pct(rep: EvalReport, name: str) -> str:
    if rep.metrics is None:
        return "-"
    return f"{getattr(rep.metrics, name) * 100:.2f}"


def _count_cell(rep: EvalReport) -> str:
    return f"{rep.n_normal}/{rep.n_anomalous}/{rep.n_unassigned}"


def write_grid_csv(grid: GridReport, path) -> None:
    """Machine-readable grid: one row per cell."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "normal_rate", "anomaly_rate", "n_normal", "n_anomalous",
                "n_unassigned", "auc", "threshold", "accuracy", "recall",
                "precision", "f1", "error",
            ]
        )
        for ar in grid.anomaly_rates:
            for nr in grid.normal_rates:
                n0, n1, nu = grid.counts[(nr, ar)]
                row = [f"{nr:.10g}", f"{ar:.10g}", n0, n1, nu]
                rep = grid.cells.get((nr, ar))
                if rep is None:
                    row += ["", "", "", "", "", "", grid.cell_errors.get((nr, ar), "")]
                else:
                    m = rep.metrics
                    row += [f"{rep.auc:.10g}"]
                    row += [f"{rep.threshold:.10g}" if rep.threshold is not None else ""]
                    if m is None:
                        row += ["", "", "", ""]
                    else:
                        row += [
                            f"{m.accuracy:.10g}", f"{m.recall:.10g}",
                            f"{m.precision:.10g}", f"{m.f1:.10g}",
                        ]
                    row += [""]
                writer.writerow(row)


def write_histogram_file(report: EvalReport, path) -> None:
    """Bin edges and per-class counts, ready for external plotting."""
    with open(path, "w") as fh:
        fh.write(f"bins {len(report.hist_normal)}\n")
        fh.write("edges " + " ".join(f"{e:.16e}" for e in report.hist_edges) + "\n")
        fh.write("normal " + " ".join(str(int(c)) for c in report.hist_normal) + "\n")
        fh.write("anomalous " + " ".join(str(int(c)) for c in report.hist_anomalous) + "\n")
