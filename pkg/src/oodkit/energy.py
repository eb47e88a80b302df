"""Free-energy scoring of logits and the thresholded detector rule.

Scores are reported as negative energy throughout: in-distribution inputs
get higher scores than outliers. The detector flags an input as an outlier
when its score falls at or below the threshold tau.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import FormatError, InputError

INLIER = "inlier"
OUTLIER = "outlier"

SCORE_HEADER = "id,score,label"


class EnergyScore(NamedTuple):
    value: float
    temperature: float


@dataclass(frozen=True)
class DetectorConfig:
    tau: float

    def __post_init__(self):
        if np.isnan(self.tau):
            raise InputError("tau must not be NaN")


def _check_logits(logits) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size == 0:
        raise InputError("logits must be nonempty")
    if not np.isfinite(logits).all():
        raise InputError("logits must be finite")
    return logits


def free_energy_values(logits, temperature: float = 1.0) -> np.ndarray:
    """Vectorized free energy -T logsumexp(logits / T) over the last axis."""
    logits = _check_logits(logits)
    if temperature <= 0:
        raise InputError("temperature must be positive")
    t = float(temperature)
    m = logits.max(axis=-1, keepdims=True)
    s = np.log(np.sum(np.exp((logits - m) / t), axis=-1))
    return -t * (np.squeeze(m, axis=-1) / t + s)


def free_energy(logits, temperature: float = 1.0) -> EnergyScore:
    """Free energy of one logit vector, computed with a shifted log-sum-exp."""
    logits = _check_logits(logits)
    if logits.ndim != 1:
        raise InputError("expected a 1-D logit vector")
    return EnergyScore(float(free_energy_values(logits, temperature)), float(temperature))


def latent_energy(head, t, temperature: float = 1.0) -> EnergyScore:
    """Free energy of a latent vector pushed through the linear head (W t + b)."""
    w, b = head
    t = np.asarray(t, dtype=np.float64)
    if t.shape != (w.shape[1],):
        raise InputError(f"latent dimension {t.shape} does not match head {w.shape}")
    return free_energy(w @ t + b, temperature)


def latent_energy_grad(head, t, temperature: float = 1.0) -> np.ndarray:
    """Gradient of latent_energy with respect to the latent vector."""
    w, b = head
    t = np.asarray(t, dtype=np.float64)
    logits = w @ t + b
    temp = float(temperature)
    if temp <= 0:
        raise InputError("temperature must be positive")
    z = logits / temp
    z -= z.max()
    p = np.exp(z)
    p /= p.sum()
    return -(w.T @ p)


def detect(score_neg_energy: float, cfg: DetectorConfig) -> str:
    """Outlier iff the negative-energy score is <= tau (boundary is outlier)."""
    if np.isnan(score_neg_energy):
        raise InputError("score must not be NaN")
    return OUTLIER if score_neg_energy <= cfg.tau else INLIER


def write_scores(path, ids, scores, labels) -> None:
    """Write a score CSV with header ``id,score,label``; label is ID or OOD."""
    rows = [SCORE_HEADER]
    for i, s, lab in zip(ids, scores, labels, strict=True):
        if lab not in ("ID", "OOD"):
            raise InputError(f"label must be ID or OOD, got {lab!r}")
        rows.append(f"{i},{float(s)!r},{lab}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(rows) + "\n")


def read_scores(path):
    """Read a score CSV; returns (ids, scores, labels)."""
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln for ln in f.read().splitlines() if ln]
    if not lines or lines[0] != SCORE_HEADER:
        raise FormatError(f"score file {path!s} must start with header {SCORE_HEADER!r}")
    ids, scores, labels = [], [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 3:
            raise FormatError(f"malformed score row: {ln!r}")
        if parts[2] not in ("ID", "OOD"):
            raise FormatError(f"score label must be ID or OOD, got {parts[2]!r}")
        try:
            scores.append(float(parts[1]))
        except ValueError as exc:
            raise FormatError(f"malformed score value: {parts[1]!r}") from exc
        ids.append(parts[0])
        labels.append(parts[2])
    return ids, np.array(scores, dtype=np.float64), labels
