"""Classifier training with the energy-margin objective.

The model is a small fully connected feature extractor (ReLU) with a linear
head. The objective is cross-entropy on the real batch, plus a squared
hinge pulling virtual-inlier energies below m_id (weight alpha) and a
squared hinge pushing synthetic-outlier energies above m_ood (weight beta):

    loss = CE + alpha * mean(max(0, E_tail - m_id)^2)
              + beta * mean(max(0, m_ood - E_out)^2)

Virtual inliers are latent vectors and are scored through the head only;
corrupted inputs take the full forward pass. All gradients are hand-written
reverse mode and checked against central finite differences in the tests.

Training modes:

* CE_ONLY   - cross-entropy only.
* OURS      - latent tail inliers (alpha term) + severe corruption outliers
              (beta term).
* NDA_ONLY  - corruption outliers only.
* AUG_NDA   - NDA_ONLY with mildly augmented inlier batches.
* VOS_LIKE  - latent boundary samples routed into the outlier term.
* AUG_VOS   - VOS_LIKE with mildly augmented inlier batches.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import gda
from .energy import free_energy_values
from .errors import FormatError, InputError, TrainingError
from .nda import mild_augment_vector_batch, nda_sample_vector_batch
from .seeding import make_rng
from .store import EmbeddingStore
from .tails import TailSamplerConfig, sample_boundary_outliers, sample_tails, take_batch

MODES = ("CE_ONLY", "OURS", "NDA_ONLY", "AUG_NDA", "VOS_LIKE", "AUG_VOS")
GDA_MODES = ("OURS", "VOS_LIKE", "AUG_VOS")
NDA_MODES = ("OURS", "NDA_ONLY", "AUG_NDA")
AUG_MODES = ("AUG_NDA", "AUG_VOS")
VOS_MODES = ("VOS_LIKE", "AUG_VOS")

CHECKPOINT_MAGIC = b"OODM"

HISTORY_HEADER = "epoch,ce,l_id,l_ood,acc,lr"

DEFAULT_WIDTHS = (64, 64, 16)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    lr: float = 1e-3
    lr_halve_every: int = 10
    weight_decay: float = 5e-4
    batch_size: int = 128
    alpha: float = 0.1
    beta: float = 0.1
    m_id: float = -20.0
    m_ood: float = -7.0
    temperature: float = 1.0
    regularizer_start_epoch: int | None = None
    mode: str = "OURS"
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise InputError("epochs must be >= 1")
        if self.lr <= 0:
            raise InputError("lr must be positive")
        if self.lr_halve_every < 1:
            raise InputError("lr_halve_every must be >= 1")
        if self.weight_decay < 0:
            raise InputError("weight_decay must be >= 0")
        if self.batch_size < 1:
            raise InputError("batch_size must be >= 1")
        if self.alpha < 0 or self.beta < 0:
            raise InputError("alpha and beta must be >= 0")
        if not self.m_id < self.m_ood:
            raise InputError("m_id must be < m_ood")
        if self.temperature <= 0:
            raise InputError("temperature must be positive")
        if self.mode not in MODES:
            raise InputError(f"mode must be one of {MODES}")

    def start_epoch(self) -> int:
        """Epoch at which the energy regularizers switch on. Defaults to 0,
        or 40% of the schedule for the latent-boundary-outlier modes."""
        if self.regularizer_start_epoch is not None:
            return self.regularizer_start_epoch
        if self.mode in VOS_MODES:
            return int(round(0.4 * self.epochs))
        return 0


@dataclass
class ModelParams:
    """Feature-extractor layers plus the linear head. Each entry is (W, b)
    with W of shape (out, in)."""

    hidden: list
    head: tuple

    @property
    def in_dim(self) -> int:
        return self.hidden[0][0].shape[1]

    @property
    def latent_dim(self) -> int:
        return self.head[0].shape[1]

    @property
    def k_classes(self) -> int:
        return self.head[0].shape[0]

    def layers(self) -> list:
        return list(self.hidden) + [self.head]

    def copy(self) -> "ModelParams":
        return ModelParams(
            hidden=[(w.copy(), b.copy()) for w, b in self.hidden],
            head=(self.head[0].copy(), self.head[1].copy()),
        )


def init_params(in_dim: int, k_classes: int, rng, widths=DEFAULT_WIDTHS) -> ModelParams:
    hidden = []
    fan_in = in_dim
    for width in widths:
        w = rng.standard_normal((width, fan_in)) * np.sqrt(2.0 / fan_in)
        hidden.append((w, np.zeros(width)))
        fan_in = width
    # zero head: initial logits are all zero, so every input starts at the
    # uniform free energy -T log K and cross-entropy starts at log K
    return ModelParams(hidden=hidden, head=(np.zeros((k_classes, fan_in)), np.zeros(k_classes)))


def _zeros_like_params(params: ModelParams) -> ModelParams:
    return ModelParams(
        hidden=[(np.zeros_like(w), np.zeros_like(b)) for w, b in params.hidden],
        head=(np.zeros_like(params.head[0]), np.zeros_like(params.head[1])),
    )


def _forward_cache(params: ModelParams, x: np.ndarray, relu: bool = True):
    """Forward pass keeping post-activation values for backprop.

    Returns (activations, latent, logits) where activations[0] is the input
    and activations[i] the output of hidden layer i.
    """
    acts = [x]
    a = x
    for w, b in params.hidden:
        z = a @ w.T + b
        a = np.maximum(z, 0.0) if relu else z
        acts.append(a)
    head_w, head_b = params.head
    logits = a @ head_w.T + head_b
    return acts, a, logits


def forward(params: ModelParams, x, relu: bool = True):
    """Latent (penultimate activation) and logits for one input or a batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != params.in_dim:
        raise InputError(f"input dimension {x.shape[1]} does not match {params.in_dim}")
    _, latent, logits = _forward_cache(params, x, relu)
    if single:
        return latent[0], logits[0]
    return latent, logits


def loss_id(energies, m_id: float) -> float:
    """Squared hinge pulling inlier energies below m_id, averaged."""
    e = np.atleast_1d(np.asarray(energies, dtype=np.float64))
    return float(np.mean(np.maximum(0.0, e - m_id) ** 2))


def loss_ood(energies, m_ood: float) -> float:
    """Squared hinge pushing outlier energies above m_ood, averaged."""
    e = np.atleast_1d(np.asarray(energies, dtype=np.float64))
    return float(np.mean(np.maximum(0.0, m_ood - e) ** 2))


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _backprop_from_logits(params, acts, dlogits, grads: ModelParams) -> None:
    """Accumulate parameter gradients given d(loss)/d(logits)."""
    head_w, _ = params.head
    latent = acts[-1]
    grads.head = (
        grads.head[0] + dlogits.T @ latent,
        grads.head[1] + dlogits.sum(axis=0),
    )
    da = dlogits @ head_w
    for i in range(len(params.hidden) - 1, -1, -1):
        w, _ = params.hidden[i]
        dz = da * (acts[i + 1] > 0.0)
        gw, gb = grads.hidden[i]
        grads.hidden[i] = (gw + dz.T @ acts[i], gb + dz.sum(axis=0))
        da = dz @ w


def _head_energy_and_grad(params, latents, temperature):
    """Energies of latent vectors through the head, with dE/dlogits rows."""
    head_w, head_b = params.head
    logits = latents @ head_w.T + head_b
    energies = free_energy_values(logits, temperature)
    probs = _softmax_rows(logits / temperature)
    return logits, energies, -probs  # dE/dlogits = -softmax(logits / T)


@dataclass(frozen=True)
class LossParts:
    ce: float
    l_id: float
    l_ood: float
    accuracy: float


def total_loss(params: ModelParams, batch, tails, outliers, cfg: TrainConfig):
    """Full objective and its gradients.

    batch     (X, y) real training samples, required.
    tails     (B_t, latent_dim) virtual inliers scored through the head,
              or None when the inlier term is inactive.
    outliers  (B_o, in_dim) corrupted inputs for the full forward pass, or
              (B_o, latent_dim) latent boundary samples in the VOS modes,
              or None when the outlier term is inactive.

    Returns (loss, grads, parts); inactive terms contribute exactly zero.
    """
    x, y = batch
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InputError("batch must be a nonempty (B, in_dim) array")
    grads = _zeros_like_params(params)

    acts, _, logits = _forward_cache(params, x)
    if not np.isfinite(logits).all():
        raise TrainingError("non-finite logits in forward pass")
    probs = _softmax_rows(logits)
    n = x.shape[0]
    ce = float(-np.mean(np.log(probs[np.arange(n), y] + 1e-300)))
    accuracy = float(np.mean(np.argmax(logits, axis=1) == y))
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    _backprop_from_logits(params, acts, dlogits / n, grads)

    l_id_val = 0.0
    if tails is not None and cfg.alpha > 0.0:
        tails = np.asarray(tails, dtype=np.float64)
        _, energies, de_dlogits = _head_energy_and_grad(params, tails, cfg.temperature)
        if not np.isfinite(energies).all():
            raise TrainingError("non-finite tail energies")
        l_id_val = loss_id(energies, cfg.m_id)
        coeff = 2.0 * np.maximum(0.0, energies - cfg.m_id) / energies.size
        dlogits_t = cfg.alpha * coeff[:, None] * de_dlogits
        grads.head = (
            grads.head[0] + dlogits_t.T @ tails,
            grads.head[1] + dlogits_t.sum(axis=0),
        )

    l_ood_val = 0.0
    if outliers is not None and cfg.beta > 0.0:
        outliers = np.asarray(outliers, dtype=np.float64)
        if cfg.mode in VOS_MODES:
            _, energies, de_dlogits = _head_energy_and_grad(params, outliers, cfg.temperature)
            if not np.isfinite(energies).all():
                raise TrainingError("non-finite boundary-outlier energies")
            l_ood_val = loss_ood(energies, cfg.m_ood)
            coeff = -2.0 * np.maximum(0.0, cfg.m_ood - energies) / energies.size
            dlogits_o = cfg.beta * coeff[:, None] * de_dlogits
            grads.head = (
                grads.head[0] + dlogits_o.T @ outliers,
                grads.head[1] + dlogits_o.sum(axis=0),
            )
        else:
            acts_o, _, logits_o = _forward_cache(params, outliers)
            if not np.isfinite(logits_o).all():
                raise TrainingError("non-finite outlier logits")
            energies = free_energy_values(logits_o, cfg.temperature)
            l_ood_val = loss_ood(energies, cfg.m_ood)
            probs_o = _softmax_rows(logits_o / cfg.temperature)
            coeff = -2.0 * np.maximum(0.0, cfg.m_ood - energies) / energies.size
            dlogits_o = cfg.beta * coeff[:, None] * (-probs_o)
            _backprop_from_logits(params, acts_o, dlogits_o, grads)

    loss = ce + cfg.alpha * l_id_val + cfg.beta * l_ood_val
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss: ce={ce} l_id={l_id_val} l_ood={l_ood_val}")
    return loss, grads, LossParts(ce=ce, l_id=l_id_val, l_ood=l_ood_val, accuracy=accuracy)


class AdamW:
    """Adam with decoupled weight decay. With zero gradients the update is a
    pure shrink by lr * weight_decay; with lr = 0 parameters never move."""

    def __init__(self, params: ModelParams, weight_decay: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = _zeros_like_params(params)
        self.v = _zeros_like_params(params)

    def step(self, params: ModelParams, grads: ModelParams, lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t

        def update(p, g, m, v):
            m1 = self.beta1 * m + (1.0 - self.beta1) * g
            v1 = self.beta2 * v + (1.0 - self.beta2) * g * g
            step_ = (m1 / bc1) / (np.sqrt(v1 / bc2) + self.eps)
            return p - lr * (step_ + self.weight_decay * p), m1, v1

        new_hidden, m_hidden, v_hidden = [], [], []
        for (w, b), (gw, gb), (mw, mb), (vw, vb) in zip(
            params.hidden, grads.hidden, self.m.hidden, self.v.hidden
        ):
            w1, mw1, vw1 = update(w, gw, mw, vw)
            b1, mb1, vb1 = update(b, gb, mb, vb)
            new_hidden.append((w1, b1))
            m_hidden.append((mw1, mb1))
            v_hidden.append((vw1, vb1))
        hw, hb = params.head
        ghw, ghb = grads.head
        mhw, mhb = self.m.head
        vhw, vhb = self.v.head
        hw1, mhw1, vhw1 = update(hw, ghw, mhw, vhw)
        hb1, mhb1, vhb1 = update(hb, ghb, mhb, vhb)

        params.hidden = new_hidden
        params.head = (hw1, hb1)
        self.m = ModelParams(hidden=m_hidden, head=(mhw1, mhb1))
        self.v = ModelParams(hidden=v_hidden, head=(vhw1, vhb1))


def train(
    dataset,
    cfg: TrainConfig,
    rng=None,
    *,
    tail_cfg: TailSamplerConfig | None = None,
    widths=DEFAULT_WIDTHS,
    queue_capacity: int = 1000,
    refit_every: int = 25,
    min_per_class: int | None = None,
    corrupt_fn=None,
    augment_fn=None,
    epsilon_scale: float = 1e-6,
):
    """Train on (X, y) and return (params, history).

    Per step, in the latent-Gaussian modes, batch latents are pushed into
    the per-class queues; the Gaussian model refits every `refit_every`
    steps once every queue holds `min_per_class` entries, refreshing the
    per-class pool of ranked tail samples. Each step then consumes
    tail_cfg.per_class_batch samples per class uniformly from the pool.
    Corruption outliers are manufactured from the current batch.

    `corrupt_fn(batch, rng)` defaults to the severe vector corruption;
    `augment_fn(batch, rng)` defaults to the mild vector jitter used by the
    augmented-inlier modes.
    """
    x, y = dataset
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise InputError("dataset must be (X, y) with matching first dimension")
    k_classes = int(y.max()) + 1
    if k_classes < 2:
        raise InputError("dataset must contain at least 2 classes")

    rng = make_rng(cfg.seed) if rng is None else rng
    tail_cfg = tail_cfg or TailSamplerConfig()
    if corrupt_fn is None:
        # seven corrupted outputs per batch item: negative coverage of the
        # off-manifold region drives modality-shift detection quality
        def corrupt_fn(batch, batch_rng):
            return nda_sample_vector_batch(batch, batch_rng, repeats=7)

    augment_fn = augment_fn or mild_augment_vector_batch

    params = init_params(x.shape[1], k_classes, rng, widths)
    optimizer = AdamW(params, cfg.weight_decay)
    latent_dim = widths[-1]
    min_per_class = latent_dim + 2 if min_per_class is None else min_per_class
    start_epoch = cfg.start_epoch()

    use_gda = cfg.mode in GDA_MODES
    use_nda = cfg.mode in NDA_MODES
    use_aug = cfg.mode in AUG_MODES
    store = EmbeddingStore(k_classes, latent_dim, queue_capacity) if use_gda else None

    gaussian = None
    tail_pools = None
    steps_since_fit = 0
    history = []
    m_total = x.shape[0]

    for epoch in range(cfg.epochs):
        lr = cfg.lr * 0.5 ** (epoch // cfg.lr_halve_every)
        order = rng.permutation(m_total)
        ep_ce, ep_id, ep_ood, ep_acc, ep_n = 0.0, 0.0, 0.0, 0.0, 0
        active = epoch >= start_epoch

        for lo in range(0, m_total, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            xb, yb = x[idx], y[idx]
            if use_aug:
                xb = augment_fn(xb, rng)

            if use_gda:
                latents, _ = forward(params, xb)
                store.push_batch(yb, latents)
                steps_since_fit += 1
                # queues warm up from epoch 0; fitting and tail sampling only
                # matter once the regularizer is active
                if active and store.ready(min_per_class) and (
                    gaussian is None or steps_since_fit >= refit_every
                ):
                    emb, lab = store.snapshot()
                    gaussian = gda.fit(emb, lab, k_classes, epsilon_scale)
                    sampler = (
                        sample_tails if cfg.mode == "OURS" else sample_boundary_outliers
                    )
                    tail_pools = [
                        sampler(gaussian, k, tail_cfg, rng) for k in range(k_classes)
                    ]
                    steps_since_fit = 0

            tails_batch = None
            outliers = None
            if active:
                if use_gda and tail_pools is not None:
                    picks = np.concatenate(
                        [take_batch(pool, tail_cfg, rng) for pool in tail_pools]
                    )
                    if cfg.mode == "OURS":
                        tails_batch = picks
                    else:
                        outliers = picks  # latent boundary samples -> outlier loss
                if use_nda:
                    outliers = corrupt_fn(xb, rng)

            try:
                loss, grads, parts = total_loss(params, (xb, yb), tails_batch, outliers, cfg)
            except TrainingError as exc:
                raise TrainingError(str(exc), params=params, history=history) from exc
            optimizer.step(params, grads, lr)

            b = len(idx)
            ep_ce += parts.ce * b
            ep_id += parts.l_id * b
            ep_ood += parts.l_ood * b
            ep_acc += parts.accuracy * b
            ep_n += b

        history.append(
            {
                "epoch": epoch,
                "ce": ep_ce / ep_n,
                "l_id": ep_id / ep_n,
                "l_ood": ep_ood / ep_n,
                "acc": ep_acc / ep_n,
                "lr": lr,
            }
        )

    return params, history


def write_history_csv(path, history) -> None:
    rows = [HISTORY_HEADER]
    for h in history:
        rows.append(
            f"{h['epoch']},{h['ce']!r},{h['l_id']!r},{h['l_ood']!r},{h['acc']!r},{h['lr']!r}"
        )
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(rows) + "\n")


def _config_to_dict(cfg: TrainConfig) -> dict:
    return {
        "epochs": cfg.epochs,
        "lr": cfg.lr,
        "lr_halve_every": cfg.lr_halve_every,
        "weight_decay": cfg.weight_decay,
        "batch_size": cfg.batch_size,
        "alpha": cfg.alpha,
        "beta": cfg.beta,
        "m_id": cfg.m_id,
        "m_ood": cfg.m_ood,
        "temperature": cfg.temperature,
        "regularizer_start_epoch": cfg.regularizer_start_epoch,
        "mode": cfg.mode,
        "seed": cfg.seed,
    }


def save_checkpoint(path, params: ModelParams, cfg: TrainConfig) -> None:
    """Write the OODM checkpoint: layer shapes, f64 parameters, config echo."""
    layers = params.layers()
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", len(layers))
    for w, _ in layers:
        blob += struct.pack("<II", w.shape[0], w.shape[1])
    for w, b in layers:
        blob += np.ascontiguousarray(w, dtype="<f8").tobytes()
        blob += np.ascontiguousarray(b, dtype="<f8").tobytes()
    cfg_json = json.dumps(_config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    payload = cfg_json.encode("utf-8")
    blob += struct.pack("<I", len(payload))
    blob += payload
    with open(path, "wb") as f:
        f.write(bytes(blob))


def load_checkpoint(path):
    """Read an OODM checkpoint; returns (params, config_dict)."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"bad magic in {path!s}: expected OODM")
    try:
        (n_layers,) = struct.unpack_from("<I", raw, 4)
        off = 8
        shapes = []
        for _ in range(n_layers):
            out_d, in_d = struct.unpack_from("<II", raw, off)
            shapes.append((out_d, in_d))
            off += 8
        layers = []
        for out_d, in_d in shapes:
            w = np.frombuffer(raw, dtype="<f8", count=out_d * in_d, offset=off).reshape(
                out_d, in_d
            )
            off += 8 * out_d * in_d
            b = np.frombuffer(raw, dtype="<f8", count=out_d, offset=off)
            off += 8 * out_d
            layers.append((w.copy(), b.copy()))
        (cfg_len,) = struct.unpack_from("<I", raw, off)
        off += 4
        cfg_dict = json.loads(raw[off : off + cfg_len].decode("utf-8"))
        if off + cfg_len != len(raw):
            raise FormatError("trailing bytes in checkpoint")
    except (struct.error, ValueError, IndexError) as exc:
        raise FormatError(f"truncated or corrupt checkpoint {path!s}") from exc
    if len(layers) < 2:
        raise FormatError("checkpoint must contain at least one hidden layer and a head")
    params = ModelParams(hidden=layers[:-1], head=layers[-1])
    return params, cfg_dict
