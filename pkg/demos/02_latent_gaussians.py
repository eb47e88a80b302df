"""Class-conditional Gaussians in a latent space: fit, posterior, energies,
low-density tail sampling, and the energy-gap bound.

Run:  python demos/02_latent_gaussians.py
"""

import numpy as np

from oodkit import gda
from oodkit.seeding import make_rng
from oodkit.tails import TailSamplerConfig, sample_tails

rng = make_rng(7)

# three latent clusters with a shared covariance
means_true = np.array([[0.0, 0.0], [6.0, 1.0], [2.0, 5.0]])
chol_true = np.linalg.cholesky(np.array([[1.0, 0.3], [0.3, 0.8]]))
latents = np.concatenate(
    [m + rng.standard_normal((400, 2)) @ chol_true.T for m in means_true]
)
labels = np.repeat([0, 1, 2], 400)

model = gda.fit(latents, labels, 3)
print("fitted means:\n", np.round(model.means, 3))
print("fitted shared covariance:\n", np.round(model.covariance, 3))
print("priors:", np.round(model.priors, 3), "\n")

probe = np.array([3.0, 2.0])
post = gda.posterior(model, probe)
energies = [gda.gda_energy(model, probe, k) for k in range(3)]
print(f"probe {probe}: posterior={np.round(post, 4)}")
print(f"             energies ={np.round(energies, 4)}")
print("argmax posterior == argmin energy:", int(np.argmax(post)) == int(np.argmin(energies)), "\n")

cfg = TailSamplerConfig(draws_n_total=5000, rank_n=32)
tails = sample_tails(model, 0, cfg, rng)
print(f"sampled {len(tails)} low-density tails of class 0")
print(f"  tail log-density threshold: {tails[0].implied_delta_log:.3f}")
print(f"  log-density at the class mean: {gda.log_density(model, model.means[0], 0):.3f}")

check = gda.check_energy_gap_bound(model, tails[0].vector, 0)
print("\nenergy-gap check on the least likely tail:")
print(f"  E(mean) - E(tail) = {check.gap_lhs:.4f} < bound {check.gap_rhs:.4f} -> {check.gap_holds}")
print(f"  free energy {check.free_energy:.4f} > lower bound {check.free_energy_bound:.4f}"
      f" -> {check.free_energy_holds}")
