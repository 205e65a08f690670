import numpy as np

from nclearn.bound import compute_bound, dkw_band, empirical_cdf, epsilon_for_target, sup_deviation

rng = np.random.default_rng(0)

# Pretend these are residuals (observed gap minus NC estimate) from 1000
# held-out hypotheses.
residuals = rng.normal(0.0, 0.3, size=1000)

# The band term alone caps how confident we can ever be with n samples.
for n in (100, 1000, 10_000):
    print(f"n={n:6d}  best possible bound at delta=0.05: {1 - 2 * dkw_band(n, 0.05):.4f}")

# Bound for a few slack values.
for eps in (0.1, 0.3, 0.6, 1.0):
    rep = compute_bound(residuals, eps, delta=0.05)
    print(f"eps={eps:.1f}  violations={rep.count_exceeding:4d}  P >= {rep.probability_lower_bound:.4f}")

# The other direction: how much slack buys 80% confidence?
eps = epsilon_for_target(residuals, delta=0.05, target_prob=0.8)
print(f"smallest eps with bound >= 0.8: {eps:.4f}")

# The ECDF behind all of this, and its distance to the true normal CDF.
from math import erf, sqrt

cdf = np.vectorize(lambda t: 0.5 * (1 + erf(t / (0.3 * sqrt(2)))))
print("F_n(0) =", empirical_cdf(residuals, 0.0))
print(f"sup |F_n - F| = {sup_deviation(residuals, cdf):.4f}, band at delta=0.05: {dkw_band(1000, 0.05):.4f}")
