"""Low-likelihood tail sampling from the fitted class Gaussians.

For each class, draw N candidates from its Gaussian, rank them by log
density ascending, and keep the n least likely. The n-th smallest log
density acts as the operational density threshold: every kept sample sits
at or below it. The same ranked draw serves two training roles and only
the loss routing differs: virtual inliers pulled toward the class mean, or
boundary outliers pushed away (the latent-outlier baseline).
"""

from dataclasses import dataclass

import numpy as np

from . import gda
from .errors import InputError


@dataclass(frozen=True)
class TailSamplerConfig:
    draws_n_total: int = 10000
    rank_n: int = 64
    per_class_batch: int = 1

    def __post_init__(self):
        if not 1 <= self.rank_n <= self.draws_n_total:
            raise InputError("rank_n must satisfy 1 <= rank_n <= draws_n_total")
        if not 1 <= self.per_class_batch <= self.rank_n:
            raise InputError("per_class_batch must satisfy 1 <= per_class_batch <= rank_n")


@dataclass(frozen=True)
class TailSample:
    vector: np.ndarray
    class_id: int
    density_log: float
    implied_delta_log: float


def sample_tails(model, k, cfg: TailSamplerConfig, rng) -> list[TailSample]:
    """Return the cfg.rank_n lowest-density draws out of cfg.draws_n_total.

    Ties in log density are broken by draw index (earlier draw wins).
    Consumers typically take cfg.per_class_batch of the result uniformly at
    random per training step; see ``take_batch``.
    """
    k = gda._check_class(model, k)
    z = rng.standard_normal((cfg.draws_n_total, model.dim))
    draws = model.means[k] + z @ model.chol.T
    dens = gda.log_density_batch(model, draws, k)
    order = np.argsort(dens, kind="stable")
    keep = order[: cfg.rank_n]
    delta_log = float(dens[keep[-1]])
    return [
        TailSample(
            vector=draws[i].copy(),
            class_id=k,
            density_log=float(dens[i]),
            implied_delta_log=delta_log,
        )
        for i in keep
    ]


def sample_boundary_outliers(model, k, cfg: TailSamplerConfig, rng) -> list[TailSample]:
    """Identical draw mechanism to ``sample_tails``; the trainer routes these
    into the outlier loss instead of the inlier loss."""
    return sample_tails(model, k, cfg, rng)


def take_batch(samples: list[TailSample], cfg: TailSamplerConfig, rng) -> np.ndarray:
    """Pick cfg.per_class_batch sample vectors uniformly without replacement."""
    if len(samples) < cfg.per_class_batch:
        raise InputError("not enough tail samples for the requested batch")
    idx = rng.choice(len(samples), size=cfg.per_class_batch, replace=False)
    return np.stack([samples[i].vector for i in idx])
