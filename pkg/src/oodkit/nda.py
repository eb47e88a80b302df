"""Severe corruptions that manufacture synthetic outliers, plus the mild
augmentation variant used to perturb inliers.

Two pixel-space branches, chosen at random per call:

* a chain-mix of geometric/photometric ops at high severity followed by a
  random patch permutation, and
* a random convolution with a very large kernel, min-max renormalized.

Geometric ops use nearest-neighbor resampling with zero fill so outputs are
exactly reproducible. Vector analogues of both branches (coordinate
scramble / random linear mix) serve datasets that are plain feature vectors
rather than rasters.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .seeding import derive_seed, make_rng

DEFAULT_KERNEL_SIZES = (9, 11, 13, 15, 17, 19)


@dataclass(frozen=True)
class NdaConfig:
    augmix_severity: int = 11
    augmix_width: int = 3
    augmix_depth_range: tuple[int, int] = (1, 3)
    jigsaw_grid: int = 4
    randconv_kernel_sizes: tuple[int, ...] = DEFAULT_KERNEL_SIZES
    branch_prob_augjig: float = 0.5

    def __post_init__(self):
        if self.augmix_severity < 1:
            raise InputError("augmix_severity must be >= 1")
        if self.augmix_width < 1:
            raise InputError("augmix_width must be >= 1")
        lo, hi = self.augmix_depth_range
        if not 1 <= lo <= hi:
            raise InputError("augmix_depth_range must be an increasing range from >= 1")
        if self.jigsaw_grid < 2:
            raise InputError("jigsaw_grid must be >= 2")
        if not self.randconv_kernel_sizes:
            raise InputError("randconv_kernel_sizes must be nonempty")
        for k in self.randconv_kernel_sizes:
            if k < 3 or k % 2 == 0:
                raise InputError("randconv kernel sizes must be odd and >= 3")
        if not 0.0 <= self.branch_prob_augjig <= 1.0:
            raise InputError("branch_prob_augjig must lie in [0, 1]")


def _check_image(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise InputError("image must be (H, W, C) with 1 or 3 channels")
    if not np.isfinite(img).all():
        raise InputError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise InputError("image values must lie in [0, 1]")
    return img


# ---------------------------------------------------------------------------
# jigsaw


def jigsaw(img, grid: int, permutation) -> np.ndarray:
    """Move the patch in grid cell i to cell permutation[i] (pixel conservative)."""
    img = _check_image(img)
    h, w, _ = img.shape
    if grid < 1 or h % grid or w % grid:
        raise InputError(f"image {h}x{w} is not divisible into a {grid}x{grid} grid")
    perm = np.asarray(permutation, dtype=np.int64)
    n = grid * grid
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise InputError("permutation must rearrange all grid cells exactly once")
    ph, pw = h // grid, w // grid
    out = np.empty_like(img)
    for src, dst in enumerate(perm):
        sr, sc = divmod(src, grid)
        dr, dc = divmod(int(dst), grid)
        out[dr * ph : (dr + 1) * ph, dc * pw : (dc + 1) * pw] = img[
            sr * ph : (sr + 1) * ph, sc * pw : (sc + 1) * pw
        ]
    return out


def random_non_identity_permutation(n: int, rng) -> np.ndarray:
    if n < 2:
        raise InputError("need at least 2 cells for a non-identity permutation")
    identity = np.arange(n)
    while True:
        perm = rng.permutation(n)
        if not np.array_equal(perm, identity):
            return perm


# ---------------------------------------------------------------------------
# chain-mix augmentation ops


def _affine_nearest(img, inv_mat, inv_off) -> np.ndarray:
    """Resample with the inverse map src = inv_mat @ (dst - c) + c + inv_off,
    nearest neighbor, zero fill outside the frame."""
    h, w, c = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w]
    dx = xx - cx
    dy = yy - cy
    sx = inv_mat[0, 0] * dx + inv_mat[0, 1] * dy + cx + inv_off[0]
    sy = inv_mat[1, 0] * dx + inv_mat[1, 1] * dy + cy + inv_off[1]
    xi = np.rint(sx).astype(np.int64)
    yi = np.rint(sy).astype(np.int64)
    mask = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
    out = np.zeros_like(img)
    out[mask] = img[yi[mask], xi[mask]]
    return out


def _op_rotate(img, mag):
    theta = np.deg2rad(30.0 * mag)
    cs, sn = np.cos(theta), np.sin(theta)
    return _affine_nearest(img, np.array([[cs, sn], [-sn, cs]]), (0.0, 0.0))


def _op_translate_x(img, mag):
    shift = min(int(round(mag * img.shape[1] / 3.0)), img.shape[1] - 1)
    return _affine_nearest(img, np.eye(2), (-float(shift), 0.0))


def _op_translate_y(img, mag):
    shift = min(int(round(mag * img.shape[0] / 3.0)), img.shape[0] - 1)
    return _affine_nearest(img, np.eye(2), (0.0, -float(shift)))


def _op_shear_x(img, mag):
    return _affine_nearest(img, np.array([[1.0, -0.3 * mag], [0.0, 1.0]]), (0.0, 0.0))


def _op_shear_y(img, mag):
    return _affine_nearest(img, np.array([[1.0, 0.0], [-0.3 * mag, 1.0]]), (0.0, 0.0))


def _op_posterize(img, mag):
    bits = int(np.clip(round(8.0 - 5.0 * mag), 1, 8))
    q = np.rint(img * 255.0).astype(np.uint8)
    q &= np.uint8(0xFF << (8 - bits) & 0xFF)
    return q.astype(np.float64) / 255.0


def _op_solarize(img, mag):
    threshold = float(np.clip(1.0 - mag, 0.0, 1.0))
    return np.where(img >= threshold, 1.0 - img, img)


def _op_invert(img, mag):
    return 1.0 - img


def _op_identity(img, mag):
    return img


AUGMIX_OPS = {
    "rotate": _op_rotate,
    "translate_x": _op_translate_x,
    "translate_y": _op_translate_y,
    "shear_x": _op_shear_x,
    "shear_y": _op_shear_y,
    "posterize": _op_posterize,
    "solarize": _op_solarize,
    "invert": _op_invert,
    "identity": _op_identity,  # test hook only, never drawn by default
}

_DEFAULT_POOL = (
    "rotate",
    "translate_x",
    "translate_y",
    "shear_x",
    "shear_y",
    "posterize",
    "solarize",
    "invert",
)


def augmix_lite(img, severity, width, depth_range, rng, *, m_override=None, op_pool=None):
    """Convex mix of `width` op chains with the input image.

    Each chain applies `depth` ops (depth uniform over depth_range) at
    magnitude (severity / 10) * op_max. The mix weight m is uniform on
    [0, 1] (Beta(1,1)) and chain weights are Dirichlet(1, ..., 1); pass
    m_override or op_pool to pin either for testing.
    """
    img = _check_image(img)
    if severity < 1:
        raise InputError("severity must be >= 1")
    pool = _DEFAULT_POOL if op_pool is None else tuple(op_pool)
    mag = severity / 10.0
    weights = rng.dirichlet(np.ones(width))
    m = float(rng.uniform()) if m_override is None else float(m_override)
    lo, hi = depth_range
    mix = np.zeros_like(img)
    for i in range(width):
        depth = int(rng.integers(lo, hi + 1))
        chain = img
        for _ in range(depth):
            name = pool[int(rng.integers(len(pool)))]
            chain = AUGMIX_OPS[name](chain, mag)
        mix += weights[i] * chain
    return np.clip((1.0 - m) * img + m * mix, 0.0, 1.0)


def mild_augmix(img, rng, *, m_override=None):
    """Low-severity chain mix (severity 3, no patch permutation) for inliers."""
    return augmix_lite(img, 3, 3, (1, 3), rng, m_override=m_override)


# ---------------------------------------------------------------------------
# random convolution


def randconv(img, kernel_size: int, rng, *, weights=None) -> np.ndarray:
    """Convolve with an iid N(0, 1/(k^2 C)) kernel, zero padded to the same
    size, then min-max renormalize the image to [0, 1] (constant output maps
    to all 0.5). Pass `weights` (C_out, C_in, k, k) to pin the kernel."""
    img = _check_image(img)
    h, w, c = img.shape
    k = int(kernel_size)
    if k % 2 == 0 or k < 3:
        raise InputError("kernel_size must be odd and >= 3")
    if k > min(h, w):
        raise InputError(f"kernel size {k} exceeds image side {min(h, w)}")
    if weights is None:
        weights = rng.standard_normal((c, c, k, k)) / np.sqrt(k * k * c)
    else:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (c, c, k, k):
            raise InputError("weights must have shape (C, C, k, k)")
    pad = k // 2
    padded = np.zeros((h + 2 * pad, w + 2 * pad, c))
    padded[pad : pad + h, pad : pad + w] = img
    out = np.zeros_like(img)
    # accumulation order (c_in, di, dj) fixed so results match a naive loop bit for bit
    for co in range(c):
        acc = np.zeros((h, w))
        for ci in range(c):
            for di in range(k):
                for dj in range(k):
                    acc += weights[co, ci, di, dj] * padded[di : di + h, dj : dj + w, ci]
        out[..., co] = acc
    lo = out.min()
    hi = out.max()
    if hi > lo:
        return (out - lo) / (hi - lo)
    return np.full_like(out, 0.5)


# ---------------------------------------------------------------------------
# full pipeline


def nda_sample(img, cfg: NdaConfig, rng) -> np.ndarray:
    """One severe corruption: chain-mix + patch permutation with probability
    branch_prob_augjig, otherwise a random wide-kernel convolution."""
    img = _check_image(img)
    if rng.random() < cfg.branch_prob_augjig:
        out = augmix_lite(
            img, cfg.augmix_severity, cfg.augmix_width, cfg.augmix_depth_range, rng
        )
        grid = cfg.jigsaw_grid
        perm = random_non_identity_permutation(grid * grid, rng)
        return jigsaw(out, grid, perm)
    sizes = cfg.randconv_kernel_sizes
    k = sizes[int(rng.integers(len(sizes)))]
    return randconv(img, k, rng)


def nda_batch(images, cfg: NdaConfig, seed: int, threads: int | None = None) -> list:
    """Corrupt a batch with per-item derived seeds; output i depends only on
    (seed, i, images[i]), so the processing order never matters."""
    def one(i_img):
        i, img = i_img
        return nda_sample(img, cfg, make_rng(derive_seed(seed, i)))

    items = list(enumerate(images))
    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, items))
    return [one(it) for it in items]


# ---------------------------------------------------------------------------
# vector analogues (for datasets that are plain feature vectors)


def nda_sample_vector_batch(batch, rng, repeats: int = 1) -> np.ndarray:
    """Severe corruption of a batch of feature vectors.

    The vector analogue of the pixel pipeline. Each output draws one of
    four sub-corruptions (the first three with weight 5/21 each, the halo
    with weight 2/7):

    * scramble: a coordinate permutation with random sign flips (the patch
      permutation analogue; destroys cluster identity, preserves scale);
    * scaled mix: a random dense linear mix rescaled to a random multiple
      (0.5 to 2.5) of the input norm, giving direction- and radius-diverse
      negatives;
    * box mix: a random dense linear mix min-max renormalized onto the
      batch's per-coordinate bounding box grown by up to 1.5x (the wide
      random convolution analogue, which renormalizes onto the pixel box);
    * outer halo: the sample pushed to 1.4-2.8x the batch's largest norm
      along a noise-blended version of its own direction. Plain isotropic
      noise almost never lands near the data cones in moderate dimension,
      so without this branch the far field along class directions keeps
      scoring confidently.

    With ``repeats`` > 1 the batch is corrupted that many times and the
    results concatenated; detection quality improves with the coverage.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] < 2:
        raise InputError("expected a (B, d) batch with d >= 2")
    if repeats < 1:
        raise InputError("repeats must be >= 1")
    return np.concatenate([_corrupt_vectors_once(batch, rng) for _ in range(repeats)])


def _corrupt_vectors_once(batch, rng) -> np.ndarray:
    b, d = batch.shape
    u = rng.random(b)
    branch = np.select([u < 5.0 / 21.0, u < 10.0 / 21.0, u < 15.0 / 21.0], [0, 1, 2], default=3)

    keys = rng.random((b, d))
    perms = np.argsort(keys, axis=1)
    signs = np.where(rng.random((b, d)) < 0.5, -1.0, 1.0)
    scrambled = signs * np.take_along_axis(batch, perms, axis=1)

    w = rng.standard_normal((b, d, d)) / np.sqrt(d)
    mixed = np.einsum("bij,bj->bi", w, batch)

    norms_in = np.linalg.norm(batch, axis=1)
    norms_mix = np.linalg.norm(mixed, axis=1)
    norms_mix = np.where(norms_mix == 0.0, 1.0, norms_mix)
    scales = rng.uniform(0.5, 2.5, size=b)
    scaled_mix = mixed * (scales * norms_in / norms_mix)[:, None]

    box_lo = batch.min(axis=0)
    box_hi = batch.max(axis=0)
    center = (box_lo + box_hi) / 2.0
    m_lo = mixed.min(axis=1, keepdims=True)
    m_hi = mixed.max(axis=1, keepdims=True)
    span = np.where(m_hi > m_lo, m_hi - m_lo, 1.0)
    unit = (mixed - m_lo) / span
    grow = rng.uniform(1.0, 1.5, size=(b, 1))
    box_mix = (center + (box_lo - center) * grow) + unit * ((box_hi - box_lo) * grow)

    g = rng.standard_normal((b, d))
    unit_in = batch / np.maximum(norms_in, 1e-12)[:, None]
    lam = rng.uniform(0.5, 2.0, size=(b, 1))
    dirs = g + lam * unit_in * np.sqrt(d)
    dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-12)
    r_max = norms_in.max()
    radius = rng.uniform(1.4 * r_max, 2.8 * r_max, size=(b, 1))
    halo = dirs * radius

    return np.where(
        branch[:, None] == 0,
        scrambled,
        np.where(
            branch[:, None] == 1,
            scaled_mix,
            np.where(branch[:, None] == 2, box_mix, halo),
        ),
    )


def mild_augment_vector_batch(batch, rng, scale: float = 0.15) -> np.ndarray:
    """Mild inlier jitter for vector datasets (the augmented-inlier baselines)."""
    batch = np.asarray(batch, dtype=np.float64)
    return batch + scale * rng.standard_normal(batch.shape)
