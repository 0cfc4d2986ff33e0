"""Presmoothing each curve first: how close it gets to the fully observed estimator."""

from sparsefpca.experiments import ExperimentConfig, run_transition_study

cfg = ExperimentConfig(kind="transition-study", n_ladder=[100, 200], replicates=10)
report = run_transition_study(cfg)
for n, rules in report["summary"].items():
    for rule, row in rules.items():
        print(f"n={n:>4s} m=ceil(n^{rule}): median ratio {row['median_ratio_theta']:.3f}")
