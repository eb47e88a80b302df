"""Energy-based out-of-distribution detection at desk scale.

The package trains a small classifier whose free-energy score separates
in-distribution data from outliers. Two synthetic-data mechanisms shape the
score landscape during training: virtual inliers drawn from the low-density
tails of class-conditional latent Gaussians (pulled toward the data), and
severely corrupted training inputs used as synthetic outliers (pushed
away). Evaluation ships with rank-exact AUROC/AUPR and histogram tooling.
"""

from .data import DatasetBundle, RunConfig, SyntheticSpec, gen_synthetic, load_config
from .energy import DetectorConfig, EnergyScore, detect, free_energy, latent_energy
from .gda import ClassGaussianModel, check_energy_gap_bound, fit, gda_energy, posterior
from .metrics import EvalReport, aupr_in, auroc, balanced_accuracy, evaluate, histogram
from .nda import NdaConfig, augmix_lite, jigsaw, mild_augmix, nda_sample, randconv
from .store import EmbeddingStore
from .tails import TailSample, TailSamplerConfig, sample_boundary_outliers, sample_tails
from .training import ModelParams, TrainConfig, forward, loss_id, loss_ood, total_loss, train

__version__ = "0.1.0"

__all__ = [
    "ClassGaussianModel",
    "DatasetBundle",
    "DetectorConfig",
    "EmbeddingStore",
    "EnergyScore",
    "EvalReport",
    "ModelParams",
    "NdaConfig",
    "RunConfig",
    "SyntheticSpec",
    "TailSample",
    "TailSamplerConfig",
    "TrainConfig",
    "aupr_in",
    "auroc",
    "augmix_lite",
    "balanced_accuracy",
    "check_energy_gap_bound",
    "detect",
    "evaluate",
    "fit",
    "forward",
    "free_energy",
    "gda_energy",
    "gen_synthetic",
    "histogram",
    "jigsaw",
    "latent_energy",
    "load_config",
    "loss_id",
    "loss_ood",
    "mild_augmix",
    "nda_sample",
    "posterior",
    "randconv",
    "sample_boundary_outliers",
    "sample_tails",
    "total_loss",
    "train",
]
