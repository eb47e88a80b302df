"""Free-energy scoring and the threshold detector, on hand-made logits.

Run:  python demos/01_energy_scores.py
"""

import numpy as np

from oodkit.energy import DetectorConfig, detect, free_energy

print("Free energy of a logit vector is -T log sum exp(logits / T).")
print("Scores used everywhere in this package are NEGATIVE energies:")
print("higher score = more in-distribution.\n")

confident = np.array([9.0, 0.5, -1.0, 0.3])
uncertain = np.array([0.2, 0.1, -0.1, 0.0])

for name, logits in (("confident", confident), ("uncertain", uncertain)):
    for t in (0.5, 1.0, 2.0):
        e = free_energy(logits, temperature=t)
        print(f"{name:10s} T={t:3.1f}  energy={e.value:8.3f}  score={-e.value:8.3f}")
print()

cfg = DetectorConfig(tau=2.0)
print(f"Detector with tau={cfg.tau}: outlier iff score <= tau (boundary is outlier).")
for logits in (confident, uncertain):
    score = -free_energy(logits).value
    print(f"  score={score:6.3f} -> {detect(score, cfg)}")

print("\nA constant shift of all logits shifts the energy by the same constant:")
shifted = free_energy(confident + 5.0).value
print(f"  E(logits+5) = {shifted:.6f} = E(logits) - 5 = {free_energy(confident).value - 5.0:.6f}")
