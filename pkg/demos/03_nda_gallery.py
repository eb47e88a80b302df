"""Severe image corruptions: patch shuffling, high-severity chain mixes,
wide random convolutions, and the combined outlier sampler. Writes a small
gallery of PPM images to demos/out/.

Run:  python demos/03_nda_gallery.py
"""

from pathlib import Path

import numpy as np

from oodkit.nda import NdaConfig, augmix_lite, jigsaw, mild_augmix, nda_sample, randconv
from oodkit.ppm import write_image
from oodkit.seeding import make_rng

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

# a 32x32 synthetic "scan": soft blob plus a bright ring
h = w = 32
yy, xx = np.mgrid[0:h, 0:w]
r = np.hypot(yy - h / 2, xx - w / 2)
img = np.stack(
    [
        np.exp(-(r / 9.0) ** 2),
        np.clip(1.0 - np.abs(r - 10.0) / 3.0, 0.0, 1.0),
        0.25 + 0.5 * (xx / w),
    ],
    axis=-1,
)
img = np.clip(img, 0.0, 1.0)
write_image(out_dir / "original.ppm", img)

rng = make_rng(11)
gallery = {
    "jigsaw": jigsaw(img, 4, rng.permutation(16)),
    "augmix_severe": augmix_lite(img, 11, 3, (1, 3), rng),
    "augmix_mild": mild_augmix(img, rng),
    "randconv_k9": randconv(img, 9, rng),
    "randconv_k19": randconv(img, 19, rng),
}
cfg = NdaConfig()
for i in range(3):
    gallery[f"nda_sample_{i}"] = nda_sample(img, cfg, make_rng(100 + i))

for name, image in gallery.items():
    write_image(out_dir / f"{name}.ppm", image)
    print(f"wrote {out_dir / (name + '.ppm')}  range=[{image.min():.2f}, {image.max():.2f}]")

print("\nEvery output stays inside [0, 1] and keeps the input geometry.")
print("View the gallery with any PPM-capable viewer.")
