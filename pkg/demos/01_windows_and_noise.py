"""Gaussian context windows and multivariate Laplace noise.

Shows how the window length L and width sigma shape the weights a token
borrows from its neighbours, why every interior token donates exactly one
unit of weight in total, and how large the added noise is for a given eta.

    python demos/01_windows_and_noise.py
"""

import numpy as np

from casper import NoiseParams, contribution_profile, radial_cdf, sample_noise, stencil_weights

print("Window weights (offset: weight)")
for L, sigma in [(3, 1.0), (4, 1.0), (5, 0.5), (5, 5.0)]:
    w = stencil_weights(L, sigma)
    pretty = "  ".join(f"{o:+d}:{v:.3f}" for o, v in w.as_dict().items())
    print(f"  L={L} sigma={sigma:<4} {pretty}")
# Even windows peak between the focal token and its right neighbour, so the
# token itself never holds a majority of the weight.

print("\nTotal weight donated by each position of a 12-token sentence (L=4, sigma=1)")
prof = contribution_profile(12, 4, 1.0)
print("  " + " ".join(f"{v:.2f}" for v in prof.values))
print(f"  interior positions {prof.interior(4).tolist()} donate exactly 1; edges donate more")

print("\nNoise radius for 50-dim embeddings")
rng = np.random.default_rng(0)
for eta in (1.0, 10.0, 100.0):
    p = NoiseParams(50, eta)
    norms = [np.linalg.norm(sample_noise(p, rng)) for _ in range(2000)]
    print(f"  eta={eta:<6} mean |noise| = {np.mean(norms):7.3f}   (expected {50 / eta:.3f}),"
          f" P(|noise| <= 1) = {radial_cdf(p, 1.0):.3f}")
