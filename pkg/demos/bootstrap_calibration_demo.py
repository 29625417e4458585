#!/usr/bin/env python3
"""Sanity-check the uncertainty machinery against known answers.

Two quick experiments on synthetic raters with known accuracy:
- percentile bootstrap CIs: empirical coverage of the true value, and
  how interval width reacts to a 4x sample-size increase
- paired bootstrap MCC comparison: p-values for a real gap vs. a null

Trial counts are kept small here so the demo finishes in seconds; the
test suite runs the full-size versions.
"""

import numpy as np

from triagemon.stats import bootstrap_ci, paired_bootstrap_mcc

TRUE_ACCURACY = 0.80


def coverage_experiment(n: int, trials: int = 50) -> tuple[int, float]:
    covered = 0
    widths = []
    for trial in range(trials):
        rng = np.random.default_rng(1000 + trial)
        ref = rng.random(n) < 0.5
        agree = rng.random(n) < TRUE_ACCURACY
        pred = np.where(agree, ref, ~ref)
        ci = bootstrap_ci(pred.tolist(), ref.tolist(), "accuracy",
                          n_boot=500, seed=trial)
        widths.append(ci.high - ci.low)
        if ci.low <= TRUE_ACCURACY <= ci.high:
            covered += 1
    return covered, float(np.mean(widths))


def main() -> None:
    print(f"rater with true accuracy {TRUE_ACCURACY} against a fair-coin reference\n")

    cov_small, width_small = coverage_experiment(1500)
    cov_large, width_large = coverage_experiment(6000)
    print("95% percentile bootstrap CI calibration (50 trials each):")
    print(f"  n=1500: covered {cov_small}/50, mean width {width_small:.4f}")
    print(f"  n=6000: covered {cov_large}/50, mean width {width_large:.4f}")
    print(f"  width ratio {width_large / width_small:.3f} "
          f"(idealized 1/sqrt(4) = 0.500)\n")

    print("paired bootstrap MCC comparison (n=2000, 1000 resamples):")
    rng = np.random.default_rng(42)
    ref = rng.random(2000) < 0.5
    strong = np.where(rng.random(2000) < 0.10, ~ref, ref)   # 10% flips
    weaker = np.where(rng.random(2000) < 0.15, ~ref, ref)   # 15% flips
    twin = np.where(rng.random(2000) < 0.10, ~ref, ref)     # strong's peer

    gap = paired_bootstrap_mcc(strong.tolist(), weaker.tolist(), ref.tolist(),
                               n_boot=1000, seed=1)
    null = paired_bootstrap_mcc(strong.tolist(), twin.tolist(), ref.tolist(),
                                n_boot=1000, seed=2)
    print(f"  real gap:  mcc {gap.mcc_a:.3f} vs {gap.mcc_b:.3f}, "
          f"p = {gap.p_value:.4f}  (should be small)")
    print(f"  true null: mcc {null.mcc_a:.3f} vs {null.mcc_b:.3f}, "
          f"p = {null.p_value:.4f}  (should be large)")


if __name__ == "__main__":
    main()
