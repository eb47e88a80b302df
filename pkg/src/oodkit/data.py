"""Synthetic benchmark generation, embedding files, and run configuration.

The benchmark mirrors a known/novel class protocol at desk scale: known
classes are isotropic Gaussian clusters split 90:10 into train and held-out
test; novel classes are extra clusters with disjoint labels (semantic
shift); modality-shift samples come from an off-manifold generator scaled
to 1.5x the data's bounding box.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EstimationError, FormatError, InputError
from .nda import NdaConfig
from .seeding import make_rng
from .tails import TailSamplerConfig
from .training import TrainConfig

EMBEDDING_MAGIC = b"OODE"

MODALITY_KINDS = ("uniform_cube", "scaled_shifted_mixture")


@dataclass(frozen=True)
class SyntheticSpec:
    dim: int = 8
    k_known: int = 4
    k_novel: int = 2
    n_per_class: int = 500
    cluster_spread: float = 1.0
    cluster_separation: float = 6.0
    modality_kind: str = "uniform_cube"
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise InputError("dim must be >= 1")
        if self.k_known < 2:
            raise InputError("k_known must be >= 2")
        if self.k_novel < 0:
            raise InputError("k_novel must be >= 0")
        if self.n_per_class < self.dim + 2:
            raise InputError("n_per_class must be >= dim + 2")
        if self.cluster_spread <= 0:
            raise InputError("cluster_spread must be positive")
        if self.cluster_separation < 0:
            raise InputError("cluster_separation must be >= 0")
        if self.modality_kind not in MODALITY_KINDS:
            raise InputError(f"modality_kind must be one of {MODALITY_KINDS}")


@dataclass(frozen=True)
class DatasetBundle:
    train_x: np.ndarray
    train_y: np.ndarray
    test_id_x: np.ndarray
    test_id_y: np.ndarray
    test_semantic_x: np.ndarray
    test_semantic_y: np.ndarray
    test_modality_x: np.ndarray
    k_known: int


def _place_means(spec: SyntheticSpec, rng) -> np.ndarray:
    """Cluster means at separation * (random unit directions) with pairwise
    distance >= separation. Known-class means keep the first valid draw;
    novel-class means keep the tightest valid draw, so the semantic split
    hugs the minimum-distance constraint instead of drifting trivially far
    from the training classes."""
    k_total = spec.k_known + spec.k_novel
    sep = spec.cluster_separation
    means = []
    rounds = 0
    while len(means) < k_total:
        tight = len(means) >= spec.k_known
        best = None
        best_dist = np.inf
        for _ in range(40):
            u = rng.standard_normal(spec.dim)
            norm = np.linalg.norm(u)
            if norm == 0.0:
                continue
            candidate = sep * u / norm
            dist = min(
                (float(np.linalg.norm(candidate - m)) for m in means), default=np.inf
            )
            if dist < sep:
                continue
            if not tight:
                best = candidate
                break
            if best is None or dist < best_dist:
                best = candidate
                best_dist = dist
        if best is None:
            rounds += 1
            if rounds > 1000:
                raise EstimationError(
                    "failed to place separated cluster means after 1000 rejections"
                )
            continue
        means.append(best)
    return np.array(means)


def gen_synthetic(spec: SyntheticSpec, rng=None) -> DatasetBundle:
    """Generate the benchmark bundle deterministically from spec.seed."""
    rng = make_rng(spec.seed) if rng is None else rng
    k_total = spec.k_known + spec.k_novel
    means = _place_means(spec, rng)

    samples = [
        means[k] + spec.cluster_spread * rng.standard_normal((spec.n_per_class, spec.dim))
        for k in range(k_total)
    ]

    train_x, train_y, test_x, test_y = [], [], [], []
    for k in range(spec.k_known):
        order = rng.permutation(spec.n_per_class)
        n_train = int(round(0.9 * spec.n_per_class))
        train_x.append(samples[k][order[:n_train]])
        train_y.append(np.full(n_train, k, dtype=np.int64))
        test_x.append(samples[k][order[n_train:]])
        test_y.append(np.full(spec.n_per_class - n_train, k, dtype=np.int64))

    sem_x = [samples[spec.k_known + j] for j in range(spec.k_novel)]
    sem_y = [
        np.full(spec.n_per_class, spec.k_known + j, dtype=np.int64)
        for j in range(spec.k_novel)
    ]

    everything = np.concatenate(samples) if samples else np.zeros((0, spec.dim))
    lo = everything.min(axis=0)
    hi = everything.max(axis=0)
    center = (lo + hi) / 2.0
    half = (hi - lo) / 2.0
    box_lo = center - 1.5 * half
    box_hi = center + 1.5 * half

    n_modality = max(spec.k_novel, 1) * spec.n_per_class
    if spec.modality_kind == "uniform_cube":
        modality = rng.uniform(box_lo, box_hi, size=(n_modality, spec.dim))
    else:
        classes = rng.integers(k_total, size=n_modality)
        raw = means[classes] + spec.cluster_spread * rng.standard_normal(
            (n_modality, spec.dim)
        )
        rlo = raw.min(axis=0)
        rhi = raw.max(axis=0)
        span = np.where(rhi > rlo, rhi - rlo, 1.0)
        modality = box_lo + (raw - rlo) / span * (box_hi - box_lo)

    return DatasetBundle(
        train_x=np.concatenate(train_x),
        train_y=np.concatenate(train_y),
        test_id_x=np.concatenate(test_x),
        test_id_y=np.concatenate(test_y),
        test_semantic_x=np.concatenate(sem_x) if sem_x else np.zeros((0, spec.dim)),
        test_semantic_y=np.concatenate(sem_y) if sem_y else np.zeros(0, dtype=np.int64),
        test_modality_x=modality,
        k_known=spec.k_known,
    )


# ---------------------------------------------------------------------------
# embedding files


def write_embeddings(path, vectors, labels=None) -> None:
    """Write vectors (and optional labels) in the OODE binary format.

    Data is stored as little-endian f32 row-major; labels as u32.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2:
        raise InputError("vectors must be a (count, dim) array")
    count, dim = vectors.shape
    blob = bytearray()
    blob += EMBEDDING_MAGIC
    blob += struct.pack("<IIB", count, dim, 0 if labels is None else 1)
    blob += vectors.astype("<f4").tobytes()
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (count,):
            raise InputError("labels length does not match vector count")
        if count and labels.min() < 0:
            raise InputError("labels must be nonnegative")
        blob += labels.astype("<u4").tobytes()
    with open(path, "wb") as f:
        f.write(bytes(blob))


def read_embeddings(path):
    """Read an OODE file; returns (vectors float64, labels or None)."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != EMBEDDING_MAGIC:
        raise FormatError(f"bad magic in {path!s}: expected OODE")
    if len(raw) < 13:
        raise FormatError("truncated OODE header")
    count, dim, has_labels = struct.unpack_from("<IIB", raw, 4)
    need = 13 + 4 * count * dim + (4 * count if has_labels else 0)
    if len(raw) != need:
        raise FormatError(f"OODE payload size mismatch: expected {need} bytes, got {len(raw)}")
    vectors = (
        np.frombuffer(raw, dtype="<f4", count=count * dim, offset=13)
        .reshape(count, dim)
        .astype(np.float64)
    )
    labels = None
    if has_labels:
        labels = np.frombuffer(raw, dtype="<u4", count=count, offset=13 + 4 * count * dim)
        labels = labels.astype(np.int64)
    return vectors, labels


# ---------------------------------------------------------------------------
# labels CSV (associates image files with integer class labels)

LABELS_HEADER = "filename,label"


def write_labels_csv(path, filenames, labels) -> None:
    rows = [LABELS_HEADER]
    for name, label in zip(filenames, labels, strict=True):
        name = str(name)
        if "," in name or "\n" in name:
            raise InputError(f"filename {name!r} must not contain commas or newlines")
        rows.append(f"{name},{int(label)}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(rows) + "\n")


def read_labels_csv(path):
    """Read a ``filename,label`` CSV; returns (filenames, labels)."""
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln for ln in f.read().splitlines() if ln]
    if not lines or lines[0] != LABELS_HEADER:
        raise FormatError(f"labels file {path!s} must start with header {LABELS_HEADER!r}")
    names, labels = [], []
    for ln in lines[1:]:
        name, sep, label = ln.rpartition(",")
        if not sep or not name:
            raise FormatError(f"malformed labels row: {ln!r}")
        try:
            labels.append(int(label))
        except ValueError as exc:
            raise FormatError(f"malformed label value: {label!r}") from exc
        names.append(name)
    return names, np.array(labels, dtype=np.int64)


# ---------------------------------------------------------------------------
# run configuration


@dataclass(frozen=True)
class RunConfig:
    synthetic: SyntheticSpec
    train: TrainConfig
    nda: NdaConfig
    tails: TailSamplerConfig


_SECTIONS = {
    "synthetic": SyntheticSpec,
    "train": TrainConfig,
    "nda": NdaConfig,
    "tails": TailSamplerConfig,
}

# JSON stores lists; these dataclass fields expect tuples.
_TUPLE_FIELDS = {"augmix_depth_range", "randconv_kernel_sizes"}


def _build_section(name: str, cls, payload: dict):
    fields = {f.name for f in dataclasses.fields(cls)}
    for key in payload:
        if key not in fields:
            raise ConfigError(f"unknown key: {name}.{key}")
    kwargs = {
        k: tuple(v) if k in _TUPLE_FIELDS and isinstance(v, list) else v
        for k, v in payload.items()
    }
    try:
        return cls(**kwargs)
    except InputError as exc:
        raise ConfigError(f"{name}: {exc}") from exc
    except TypeError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def config_from_dict(payload: dict) -> RunConfig:
    if not isinstance(payload, dict):
        raise ConfigError("configuration root must be a JSON object")
    for key in payload:
        if key not in _SECTIONS:
            raise ConfigError(f"unknown key: {key}")
    built = {
        name: _build_section(name, cls, payload.get(name, {}))
        for name, cls in _SECTIONS.items()
    }
    return RunConfig(**built)


def config_to_dict(config: RunConfig) -> dict:
    out = {}
    for name in _SECTIONS:
        section = dataclasses.asdict(getattr(config, name))
        out[name] = {
            k: list(v) if isinstance(v, tuple) else v for k, v in section.items()
        }
    return out


def load_config(path) -> RunConfig:
    """Load and validate a JSON run configuration; absent fields take their
    defaults and unknown keys are rejected by name."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path!s}: invalid JSON: {exc}") from exc
    return config_from_dict(payload)


def dump_config(config: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config_to_dict(config), f, indent=2, sort_keys=True)
        f.write("\n")
