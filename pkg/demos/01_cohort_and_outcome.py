"""Generate an audit-shaped cohort and turn length of stay into a binary outcome.

The synthetic generator plants a log-linear stay model, so the true risk of
a prolonged stay is known for every row. This demo shows the shape of the
data, the 75th-percentile cut-off, and how well the true risk separates the
realised outcome (the ceiling any model can reach).
"""

import numpy as np

from losml.data import OutcomeSpec, dichotomize_outcome, stratified_split
from losml.evaluation import auc
from losml.synth import default_specs, generate

spec = default_specs(seed=0)["haemorrhagic-like"]
table, truth = generate(spec)
print(f"{spec.name}: {table.n_rows} rows, predictors per domain {spec.domain_counts()}")

missing = {n: float(table.mask(n).mean()) for n in table.predictor_names()}
gappy = {n: round(m, 3) for n, m in missing.items() if m > 0}
print(f"columns with missing cells: {gappy}")

labels, threshold_days = dichotomize_outcome(table, OutcomeSpec("los_days", 0.75))
print(f"prolonged stay = at least {threshold_days:.0f} days; event rate {labels.mean():.3f}")

risk = truth.true_risk(threshold_days, spec.dispersion)
print(f"AUC of the true risk against the realised outcome: {auc(risk, labels):.3f}")

split = stratified_split(labels, 0.8, seed=0)
print(f"stratified split: {split.train.size} train / {split.test.size} test, "
      f"event rates {labels[split.train].mean():.3f} / {labels[split.test].mean():.3f}")
print("planted signal columns:", ", ".join(truth.signal_columns))
print("clone groups:", truth.clone_groups)
