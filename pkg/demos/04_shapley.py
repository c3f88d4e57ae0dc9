"""Explaining the stacked model with Shapley values.

The value of a feature coalition is the model's mean output when the
coalition takes the explained row's values and every other feature comes
from a background sample. Exact enumeration is used when there are few
features; permutation sampling otherwise, converging as orderings are added.
"""

import numpy as np

from losml.ensemble import fit_stacking
from losml.explain import explain_rows, sample_background, shap_exact, shap_permutation, shap_summarize

rng = np.random.default_rng(4)
X = rng.normal(size=(800, 8))
X[:, 5] = (X[:, 5] > 0.3).astype(float)  # a binary feature
eta = 1.2 * X[:, 0] - 0.8 * X[:, 1] + 0.9 * X[:, 5] + 0.5 * X[:, 2] * X[:, 3]
y = (rng.random(800) < 1 / (1 + np.exp(-eta))).astype(int)
fast = {"forest": {"n_trees": 30}, "gbt_levelwise": {"n_rounds": 40, "max_depth": 3},
        "gbt_leafwise": {"n_rounds": 40, "max_leaves": 8}, "gbt_oblivious": {"n_rounds": 40, "max_depth": 3}}
model = fit_stacking(X[:600], y[:600], fast, seed=4)
predict = lambda Z: model.predict_proba(Z)[:, 1]

bg = X[sample_background(X[:600], y[:600], size=40, seed=4)]
x = X[650]
phi, base = shap_exact(predict, x, bg)
print(f"base value {base:.4f} + sum of attributions {phi.sum():+.4f} = {base + phi.sum():.4f}; "
      f"model output {predict(x[None])[0]:.4f}")
for n in (25, 100, 400, 1600):
    est, _ = shap_permutation(predict, x, bg, n, seed=0)
    print(f"{n:>5} permutations: mean |error| vs exact {np.mean(np.abs(est - phi)):.5f}")

names = [f"x{j}" for j in range(8)]
names[5] = "flag"
matrix = explain_rows(predict, X[600:680], bg, names)
summary = shap_summarize(matrix, X[600:680], n_boot=500, seed=4)
print()
print(summary.to_csv())
