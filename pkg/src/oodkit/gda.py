"""Class-conditional Gaussian model of a classifier's latent space.

All classes share one covariance, so the induced posterior is a softmax
over logits that are linear in the feature vector, and each class carries
a well-defined energy,

    energy(h, k) = -mu_k' S^-1 h + 1/2 mu_k' S^-1 mu_k - log prior_k,

with posterior(h) = softmax(-energy(h, .)). Densities are handled in log
space throughout, and the covariance receives a trace-scaled ridge before
Cholesky factorization so nearly-degenerate latent clouds still factor.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_triangular

from .errors import EstimationError, FormatError, InputError, NumericalError

_LOG_2PI = float(np.log(2.0 * np.pi))

GDA_MAGIC = b"GDA1"


@dataclass(frozen=True)
class ClassGaussianModel:
    """Per-class means with a shared, ridge-regularized covariance.

    Attributes
    ----------
    means : (K, d) array of class means.
    covariance : (d, d) pooled covariance, before regularization.
    chol : (d, d) lower Cholesky factor of ``covariance + epsilon * I``.
    priors : (K,) class prior probabilities.
    epsilon : ridge added to the covariance diagonal prior to factorization.
    """

    means: np.ndarray
    covariance: np.ndarray
    chol: np.ndarray
    priors: np.ndarray
    epsilon: float

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        cov = np.asarray(self.covariance, dtype=np.float64)
        priors = np.asarray(self.priors, dtype=np.float64)
        if means.ndim != 2 or means.shape[0] < 1:
            raise InputError("means must be a (K, d) array with K >= 1")
        k, d = means.shape
        if cov.shape != (d, d):
            raise InputError("covariance shape does not match feature dimension")
        if priors.shape != (k,):
            raise InputError("priors length does not match class count")
        if not (np.isfinite(means).all() and np.isfinite(cov).all() and np.isfinite(priors).all()):
            raise InputError("model parameters must be finite")
        scale = max(np.abs(cov).max(), 1.0)
        if np.abs(cov - cov.T).max() > 1e-12 * scale:
            raise InputError("covariance must be symmetric")
        if priors.min() < 0.0 or abs(priors.sum() - 1.0) > 1e-12:
            raise InputError("priors must be nonnegative and sum to 1")

    @property
    def k_classes(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @cached_property
    def _log_det_chol(self) -> float:
        return float(np.sum(np.log(np.diag(self.chol))))

    @cached_property
    def _white_means(self) -> np.ndarray:
        # L^-1 mu_k stacked column-wise, so mu_j' S^-1 x = white[:, j] . (L^-1 x)
        return solve_triangular(self.chol, self.means.T, lower=True)

    @cached_property
    def _half_mean_quad(self) -> np.ndarray:
        # 1/2 mu_k' S^-1 mu_k per class
        return 0.5 * np.sum(self._white_means**2, axis=0)

    @cached_property
    def _log_priors(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.priors)


def _build(means, covariance, priors, epsilon) -> ClassGaussianModel:
    covariance = np.asarray(covariance, dtype=np.float64)
    reg = covariance + epsilon * np.eye(covariance.shape[0])
    try:
        chol = np.linalg.cholesky(reg)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"regularized covariance is not positive definite (epsilon={epsilon:g})"
        ) from exc
    return ClassGaussianModel(
        means=np.array(means, dtype=np.float64),
        covariance=covariance,
        chol=chol,
        priors=np.array(priors, dtype=np.float64),
        epsilon=float(epsilon),
    )


def from_moments(means, covariance, priors, epsilon_scale=1e-6) -> ClassGaussianModel:
    """Build a model from explicit moments.

    The ridge is ``epsilon_scale * trace(covariance) / d``; pass
    ``epsilon_scale=0`` for exact, unregularized parameters (the covariance
    must then already be positive definite).
    """
    covariance = np.asarray(covariance, dtype=np.float64)
    d = covariance.shape[0]
    epsilon = float(epsilon_scale) * float(np.trace(covariance)) / d
    return _build(means, covariance, priors, epsilon)


def fit(embeddings, labels, k_classes, epsilon_scale=1e-6) -> ClassGaussianModel:
    """Fit per-class means and the pooled maximum-likelihood covariance.

    The covariance divides by the total sample count M and is shared across
    classes; priors are empirical class frequencies.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InputError("embeddings must be a nonempty (M, d) array")
    if y.shape != (x.shape[0],):
        raise InputError("labels length does not match embedding count")
    if k_classes < 1:
        raise InputError("k_classes must be >= 1")
    if not np.isfinite(x).all():
        raise InputError("embeddings contain non-finite values")
    if y.min() < 0 or y.max() >= k_classes:
        raise InputError("labels out of range")

    m, d = x.shape
    counts = np.bincount(y, minlength=k_classes)
    if (counts == 0).any():
        missing = int(np.flatnonzero(counts == 0)[0])
        raise EstimationError(f"class {missing} has no samples")

    means = np.zeros((k_classes, d))
    np.add.at(means, y, x)
    means /= counts[:, None]

    centered = x - means[y]
    covariance = centered.T @ centered / m
    priors = counts / m
    return from_moments(means, covariance, priors, epsilon_scale)


def _check_vector(model: ClassGaussianModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise InputError(f"expected a vector of dimension {model.dim}, got shape {x.shape}")
    return x


def _check_class(model: ClassGaussianModel, k) -> int:
    k = int(k)
    if not 0 <= k < model.k_classes:
        raise InputError(f"class id {k} out of range [0, {model.k_classes})")
    return k


def mahalanobis_sq(model: ClassGaussianModel, x, k) -> float:
    """Squared Mahalanobis distance of x to class k under the shared covariance."""
    x = _check_vector(model, x)
    k = _check_class(model, k)
    w = solve_triangular(model.chol, x - model.means[k], lower=True)
    return float(w @ w)


def log_density(model: ClassGaussianModel, x, k) -> float:
    """Log Gaussian density of x under class k (regularized covariance)."""
    m = mahalanobis_sq(model, x, k)
    return -0.5 * model.dim * _LOG_2PI - model._log_det_chol - 0.5 * m


def log_density_batch(model: ClassGaussianModel, xs, k) -> np.ndarray:
    """Vectorized ``log_density`` over the rows of xs."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != model.dim:
        raise InputError("expected an (N, d) array")
    k = _check_class(model, k)
    w = solve_triangular(model.chol, (xs - model.means[k]).T, lower=True, check_finite=False)
    maha = np.sum(w**2, axis=0)
    return -0.5 * model.dim * _LOG_2PI - model._log_det_chol - 0.5 * maha


def _logits(model: ClassGaussianModel, h: np.ndarray) -> np.ndarray:
    wh = solve_triangular(model.chol, h, lower=True)
    return model._white_means.T @ wh - model._half_mean_quad + model._log_priors


def posterior(model: ClassGaussianModel, h) -> np.ndarray:
    """Class posterior probabilities for a latent vector (softmax over GDA logits)."""
    h = _check_vector(model, h)
    logits = _logits(model, h)
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def gda_energy(model: ClassGaussianModel, h, k) -> float:
    """Per-class energy; posterior(h) == softmax(-gda_energy(h, .))."""
    h = _check_vector(model, h)
    k = _check_class(model, k)
    if model.priors[k] <= 0.0:
        raise InputError(f"class {k} has zero prior; its energy is undefined")
    return float(-_logits(model, h)[k])


def sample(model: ClassGaussianModel, k, rng, z=None) -> np.ndarray:
    """Draw from class k's Gaussian as mean + L z; pass z to pin the draw."""
    k = _check_class(model, k)
    if z is None:
        z = rng.standard_normal(model.dim)
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (model.dim,):
        raise InputError("z dimension mismatch")
    return model.means[k] + model.chol @ z


@dataclass(frozen=True)
class EnergyGapCheck:
    """Result of the energy-gap and free-energy bound checks for one tail point.

    ``gap_holds`` is the strict inequality
    energy(mean_k, k) - energy(t, k) < 1/2 (t - mu_k)' S^-1 (t + mu_k);
    ``free_energy_holds`` is the matching lower bound on the free energy of t.
    """

    gap_holds: bool
    gap_lhs: float
    gap_rhs: float
    free_energy: float
    free_energy_bound: float
    free_energy_holds: bool
    is_boundary: bool


def _neg_logsumexp(values: np.ndarray) -> float:
    m = values.max()
    return float(-(m + np.log(np.sum(np.exp(values - m)))))


def check_energy_gap_bound(model: ClassGaussianModel, t, k) -> EnergyGapCheck:
    """Check the strict energy gap for tail t of class k, and the induced
    free-energy lower bound. Equality (t at the class mean) is reported as a
    boundary case with ``gap_holds=False``."""
    t = _check_vector(model, t)
    k = _check_class(model, k)

    e_mean = gda_energy(model, model.means[k], k)
    e_tail = gda_energy(model, t, k)

    def cross_term(j: int) -> float:
        # solve on the difference so t == mean_j gives exactly zero
        wd = solve_triangular(model.chol, t - model.means[j], lower=True)
        ws = solve_triangular(model.chol, t + model.means[j], lower=True)
        return float(0.5 * wd @ ws)

    gap_lhs = e_mean - e_tail
    gap_rhs = cross_term(k)

    neg_energies = np.array([-gda_energy(model, t, j) for j in range(model.k_classes)])
    free_e = _neg_logsumexp(neg_energies)
    bound_args = np.array(
        [-gda_energy(model, model.means[j], j) + cross_term(j) for j in range(model.k_classes)]
    )
    bound = _neg_logsumexp(bound_args)

    return EnergyGapCheck(
        gap_holds=bool(gap_lhs < gap_rhs),
        gap_lhs=gap_lhs,
        gap_rhs=gap_rhs,
        free_energy=free_e,
        free_energy_bound=bound,
        free_energy_holds=bool(free_e > bound),
        is_boundary=bool(np.array_equal(t, model.means[k])),
    )


def save_model(model: ClassGaussianModel, path) -> None:
    """Write the model in the GDA1 binary format (little-endian f64 arrays)."""
    k, d = model.means.shape
    blob = bytearray()
    blob += GDA_MAGIC
    blob += struct.pack("<II", k, d)
    blob += model.means.astype("<f8").tobytes()
    blob += model.covariance.astype("<f8").tobytes()
    blob += model.priors.astype("<f8").tobytes()
    blob += struct.pack("<d", model.epsilon)
    with open(path, "wb") as f:
        f.write(bytes(blob))


def load_model(path) -> ClassGaussianModel:
    """Read a GDA1 file and re-factorize the stored covariance."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != GDA_MAGIC:
        raise FormatError(f"bad magic in {path!s}: expected GDA1")
    if len(raw) < 12:
        raise FormatError("truncated GDA1 header")
    k, d = struct.unpack_from("<II", raw, 4)
    need = 12 + 8 * (k * d + d * d + k + 1)
    if len(raw) != need:
        raise FormatError(f"GDA1 payload size mismatch: expected {need} bytes, got {len(raw)}")
    off = 12
    means = np.frombuffer(raw, dtype="<f8", count=k * d, offset=off).reshape(k, d)
    off += 8 * k * d
    cov = np.frombuffer(raw, dtype="<f8", count=d * d, offset=off).reshape(d, d)
    off += 8 * d * d
    priors = np.frombuffer(raw, dtype="<f8", count=k, offset=off)
    off += 8 * k
    (epsilon,) = struct.unpack_from("<d", raw, off)
    return _build(means, cov, priors, epsilon)
