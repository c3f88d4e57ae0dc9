"""Missing-data tiers, category rebalancing, and the four selection workflows.

Preparation drops columns with more than 15% missing, fills the nearly
complete ones with the median or mode, and imputes the rest with iterative
random forests. Near-constant categorical columns are dropped and rare
levels merged. The selection benchmark then compares the four workflows by
the size and test AUC of the logistic model trained on what they keep.
"""

from losml.data import OutcomeSpec, dichotomize_outcome, stratified_split
from losml.featsel import benchmark_csv, benchmark_selection
from losml.prep import ForestImputeParams, run_prep
from losml.synth import default_specs, generate

table, truth = generate(default_specs(seed=1)["haemorrhagic-like"])
labels, _ = dichotomize_outcome(table, OutcomeSpec("los_days"))
split = stratified_split(labels, 0.8, seed=1)

res = run_prep(table, rows=split.train,
               forest_params=ForestImputeParams(max_iter=4, n_trees=10, max_depth=6, seed=1))
for cp in res.plan.columns.values():
    if cp.action != "keep" or cp.rebalance != "keep":
        extra = cp.merge_map or (f"dominant {cp.dominant_fraction:.3f}" if cp.dominant_fraction
                                 and cp.rebalance != "keep" else "")
        print(f"{cp.name:>4}  missing {cp.missing_fraction:.3f}  {cp.action:<20} {cp.rebalance:<18} {extra}")
print("forest imputation change per sweep:", res.forest_history)

rows = benchmark_selection(res.table, labels, ["vif", "spearman", "univariate", "hybrid"], split)
print()
print(benchmark_csv(rows))
kept = [r for r in rows if r.method == "univariate"][0]
print(f"univariate selection keeps {kept.n_predictors} of {rows[0].n_predictors} predictors")
