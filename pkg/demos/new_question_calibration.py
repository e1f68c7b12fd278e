#!/usr/bin/env python3
"""Benchmark all ten calibration methods on a synthetic biased-twin world.

The twin answers every question through a distorted-but-invertible question
geometry plus a per-user offset, so its raw predictions correlate poorly with
the humans even though the cross-question structure is shared. Leave-one-
question-out evaluation shows every calibration method recovering most of
that structure.
"""

import warnings

import twincal as tc

# the tiny-penalty solvers legitimately hit their budgets at demo tolerances
warnings.filterwarnings("ignore", category=tc.ConvergenceWarning)

SEED = 7

print("Generating a 200-user x 30-question world (rank 5, twin distorted)...")
_, human, twin, _ = tc.generate_latent_world(
    200, 30, 5,
    alignment="linear_distortion",
    noise_sigma=0.1,
    row_bias_scale=0.5,
    distortion_noise=0.05,
    missing_frac=0.1,
    seed=SEED,
)
twin_features = tc.MaskedMatrix(twin.values[:, :30], twin.mask[:, :30])

methods = {
    "ridge": tc.RegressConfig(family="ridge", lam=0.1),
    "lasso": tc.RegressConfig(family="lasso", alpha=0.05),
    "en": tc.RegressConfig(family="en", alpha=0.2, l1_ratio=0.1),
    "sc": tc.RegressConfig(family="sc", lam=1e-4),
    "si": tc.RegressConfig(family="si", rank=10, lam=0.1),
    "nn": tc.RegressConfig(family="nn", hidden_sizes=(16,), epochs=30,
                           learning_rate=1e-2, weight_decay=0.01, seed=SEED),
    "hsv": tc.CompletionConfig("hsv", rank=6, max_iters=100),
    "ssv": tc.CompletionConfig("ssv", rank=10, lam=1.0, max_iters=100),
    "als": tc.CompletionConfig("als", rank=6, lam=1.0, max_iters=60),
    "sp": tc.CompletionConfig("sp", rank=6, max_iters=100),
}

print(f"{'method':>8} {'corr':>8} {'se':>8} {'%gain':>8}")
baseline_shown = False
for name, cfg in methods.items():
    rep = tc.loo_evaluate(human, twin_features, cfg, impute_rank=6, seed=SEED)
    if not baseline_shown:
        print(f"{'twin':>8} {rep.baseline_mean:8.3f} {rep.baseline_se:8.3f} {'---':>8}")
        baseline_shown = True
    print(f"{name:>8} {rep.mean:8.3f} {rep.se:8.3f} {rep.pct_improvement:8.1f}")

print()
print("The per-user offset sinks the raw twin correlation, but the shared")
print("question geometry lets every fit-and-transfer and completion method")
print("recover it. Pearson is affine-invariant, so the twin's global bias")
print("and scale never mattered; only its structure did.")
