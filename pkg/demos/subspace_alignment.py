#!/usr/bin/env python3
"""Subspace-alignment diagnostics: how much question geometry does a twin share?

Compares three twins of the same human matrix: a faithful one (identical
latent factors plus noise), a distorted-but-aligned one, and pure noise.
Each is scored by principal-angle cosines and projector distance against the
human row space, with Gaussian and column-shuffled baselines for reference.
"""

import numpy as np

import twincal as tc

SEED = 3
_, human, twin_faithful, _ = tc.generate_latent_world(
    200, 40, 4, alignment="identical", noise_sigma=0.2, seed=SEED
)
_, _, twin_distorted, _ = tc.generate_latent_world(
    200, 40, 4, alignment="linear_distortion", noise_sigma=0.2,
    row_bias_scale=0.5, seed=SEED
)
rng = np.random.default_rng(SEED)
twin_noise = tc.MaskedMatrix.from_dense(rng.normal(size=(200, 40)))

twins = {
    "faithful": tc.MaskedMatrix.from_dense(twin_faithful.values[:, :40]),
    "distorted": tc.MaskedMatrix.from_dense(twin_distorted.values[:, :40]),
    "noise": twin_noise,
}

for name, twin in twins.items():
    rep = tc.alignment_report(human, twin, "row_space", seed=SEED, rank=4)
    print(f"\n== twin: {name} (r={rep.rank}, r_max={rep.r_max}) ==")
    print("  cosines           ", np.round(rep.cosines, 3))
    print("  proj distance     ", np.round(rep.proj_frobenius, 3))
    print("  gaussian baseline ", np.round(rep.gaussian_proj_frobenius, 3))
    print("  shuffled baseline ", np.round(rep.shuffled_proj_frobenius, 3))

print("\nLeading directions of the faithful and distorted twins align almost")
print("perfectly with the human row space while the noise twin tracks the")
print("random baselines; the distorted twin shows that value-level bias")
print("does not destroy the shared question geometry calibration relies on.")

print("\n-- cumulative variance explained (human matrix) --")
curve = tc.variance_explained(human)
for k in range(6):
    print(f"  k={k + 1}: {curve[k]:.4f}")
