"""Two models that agree on a regular grid but not between its points."""

from sparsefpca.experiments import ExperimentConfig, run_design_demo

cfg = ExperimentConfig(kind="design-demo", n_ladder=[400], replicates=5, options={"meta_replicates": 4})
report = run_design_demo(cfg)
for design, by_n in report["tests"].items():
    for n, row in by_n.items():
        print(design, n, {k: v for k, v in row.items() if k.startswith("fraction")})
