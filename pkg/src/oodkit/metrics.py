"""Threshold-free detection metrics with integer-exact rank arithmetic.

Scores follow the negative-energy convention: in-distribution samples are
expected to score higher than out-of-distribution samples. AUROC uses the
symmetric half-credit tie convention; AUPR treats ID as the positive class
and sweeps thresholds over the distinct score values in descending order
with step interpolation.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import InputError


def _check_scores(scores, name) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise InputError(f"{name} must be a nonempty 1-D array")
    if not np.isfinite(scores).all():
        raise InputError(f"{name} contains non-finite values")
    return scores


def auroc(id_scores, ood_scores) -> float:
    """Probability that a random ID sample outscores a random OOD sample,
    with ties counted half. Win/tie counts are accumulated as integers, so
    the result is exact up to one final division."""
    ids = np.sort(_check_scores(id_scores, "id_scores"))
    oods = _check_scores(ood_scores, "ood_scores")
    n_id, n_ood = ids.size, oods.size
    le = np.searchsorted(ids, oods, side="right")  # id <= ood, per ood sample
    lt = np.searchsorted(ids, oods, side="left")  # id < ood
    wins = int(n_id) * int(n_ood) - int(le.sum())
    ties = int(le.sum()) - int(lt.sum())
    return (wins + 0.5 * ties) / (n_id * n_ood)


def aupr_in(id_scores, ood_scores) -> float:
    """Area under precision-recall with ID as positives, by descending sweep
    over distinct scores and step interpolation (sum of precision * d-recall)."""
    ids = np.sort(_check_scores(id_scores, "id_scores"))
    oods = np.sort(_check_scores(ood_scores, "ood_scores"))
    n_id, n_ood = ids.size, oods.size
    thresholds = np.unique(np.concatenate([ids, oods]))[::-1]
    tp = n_id - np.searchsorted(ids, thresholds, side="left")  # id >= threshold
    fp = n_ood - np.searchsorted(oods, thresholds, side="left")
    area = 0.0
    prev_tp = 0
    for tp_i, fp_i in zip(tp, fp):
        if tp_i == prev_tp:
            continue
        precision = tp_i / (tp_i + fp_i)
        area += precision * (tp_i - prev_tp)
        prev_tp = tp_i
    return area / n_id


def balanced_accuracy(predicted_labels, true_labels, k_classes: int) -> float:
    """Mean per-class recall; classes absent from the truth are excluded."""
    pred = np.asarray(predicted_labels, dtype=np.int64)
    true = np.asarray(true_labels, dtype=np.int64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise InputError("predicted and true labels must be 1-D of equal length")
    if pred.size and (
        pred.min() < 0 or pred.max() >= k_classes or true.min() < 0 or true.max() >= k_classes
    ):
        raise InputError("labels out of range")
    recalls = []
    for k in range(k_classes):
        mask = true == k
        if mask.any():
            recalls.append(float(np.mean(pred[mask] == k)))
    if not recalls:
        raise InputError("no class present in the true labels")
    return float(np.mean(recalls))


def histogram(id_scores, ood_scores, bins: int):
    """Equal-width bins over [min, max] of both score sets combined,
    right-open except the last bin. A degenerate range yields a single bin."""
    if bins < 1:
        raise InputError("bins must be >= 1")
    ids = _check_scores(id_scores, "id_scores") if len(id_scores) else np.zeros(0)
    oods = _check_scores(ood_scores, "ood_scores") if len(ood_scores) else np.zeros(0)
    merged = np.concatenate([ids, oods])
    if merged.size == 0:
        raise InputError("need at least one score to build a histogram")
    lo, hi = float(merged.min()), float(merged.max())
    if lo == hi:
        return [(lo, hi, int(ids.size), int(oods.size))]
    edges = np.linspace(lo, hi, bins + 1)
    idc, _ = np.histogram(ids, bins=edges)
    oodc, _ = np.histogram(oods, bins=edges)
    return [
        (float(edges[i]), float(edges[i + 1]), int(idc[i]), int(oodc[i]))
        for i in range(bins)
    ]


@dataclass(frozen=True)
class EvalReport:
    auroc: float
    aupr_in: float
    n_id: int
    n_ood: int
    histogram: list


def evaluate(id_scores, ood_scores, bins: int = 20) -> EvalReport:
    ids = _check_scores(id_scores, "id_scores")
    oods = _check_scores(ood_scores, "ood_scores")
    return EvalReport(
        auroc=auroc(ids, oods),
        aupr_in=aupr_in(ids, oods),
        n_id=int(ids.size),
        n_ood=int(oods.size),
        histogram=histogram(ids, oods, bins),
    )


def write_report_json(path, report: EvalReport) -> None:
    payload = {
        "auroc": report.auroc,
        "aupr_in": report.aupr_in,
        "n_id": report.n_id,
        "n_ood": report.n_ood,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def write_hist_csv(path, hist) -> None:
    rows = ["bin_low,bin_high,id_count,ood_count"]
    for lo, hi, idc, oodc in hist:
        rows.append(f"{float(lo)!r},{float(hi)!r},{idc},{oodc}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(rows) + "\n")


def write_hist_svg(path, hist, width: int = 640, height: int = 400) -> None:
    """Two overlaid step outlines (ID vs OOD counts), self-contained SVG."""
    margin = 50
    plot_w = width - 2 * margin
    plot_h = height - 2 * margin
    lo = hist[0][0]
    hi = hist[-1][1]
    span = (hi - lo) or 1.0
    top = max(max(b[2] for b in hist), max(b[3] for b in hist), 1)

    def x_of(v):
        return margin + (v - lo) / span * plot_w

    def y_of(count):
        return margin + plot_h - count / top * plot_h

    def step_path(idx):
        pts = [f"M {x_of(hist[0][0]):.2f} {y_of(0):.2f}"]
        for blo, bhi, idc, oodc in hist:
            c = (idc, oodc)[idx]
            pts.append(f"L {x_of(blo):.2f} {y_of(c):.2f}")
            pts.append(f"L {x_of(bhi):.2f} {y_of(c):.2f}")
        pts.append(f"L {x_of(hist[-1][1]):.2f} {y_of(0):.2f}")
        return " ".join(pts)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<path d="{step_path(0)}" fill="none" stroke="#4682b4" stroke-width="2"/>',
        f'<path d="{step_path(1)}" fill="none" stroke="#ff8c00" stroke-width="2"/>',
        f'<line x1="{margin}" y1="{margin + plot_h}" x2="{margin + plot_w}" '
        f'y2="{margin + plot_h}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{margin + plot_h}" '
        f'stroke="black"/>',
        f'<text x="{margin}" y="{height - 12}" font-size="12">{lo:.4g}</text>',
        f'<text x="{margin + plot_w - 40}" y="{height - 12}" font-size="12">{hi:.4g}</text>',
        f'<text x="{margin + 8}" y="{margin + 14}" font-size="12" fill="#4682b4">ID</text>',
        f'<text x="{margin + 8}" y="{margin + 30}" font-size="12" fill="#ff8c00">OOD</text>',
        "</svg>",
    ]
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(parts) + "\n")
