"""
Precision gating and the variance split
=======================================

Three experts predict one value each with their own variance.  Weighting by
normalised precision favours the confident expert; the spread of the means
becomes epistemic variance, the weighted variances become aleatoric.
"""
import numpy as np

from mogu.mixture import combine_mean, uncertainty_gating_weights, variance_decomposition

means = np.array([1.0, 1.4, 3.0])
variances = np.array([0.1, 0.2, 2.0])

w = uncertainty_gating_weights(variances)
yhat = combine_mean(w, means)
alea, epi, total = variance_decomposition(w, means, variances, yhat)

for i, (m, s, wi) in enumerate(zip(means, variances, w)):
    print(f"expert {i}: mean {m:4.1f}  variance {s:4.2f}  weight {wi:.3f}")
print(f"combined mean {yhat:.4f}")
print(f"aleatoric {alea:.4f}  (harmonic mean of variances: {len(variances) / np.sum(1 / variances):.4f})")
print(f"epistemic {epi:.4f}")
print(f"total {total:.4f}")

# a uniform gate would trust the noisy expert as much as the others
u = np.full(3, 1 / 3)
print(f"uniform-gate mean {combine_mean(u, means):.4f}")
