"""A small convergence-rate study; the acceptance run uses the defaults (n up to 800, 100 reps)."""

import sys

from sparsefpca.experiments import ExperimentConfig, run_rate_study

threads = int(sys.argv[1]) if len(sys.argv) > 1 else 1
cfg = ExperimentConfig(kind="rate-study", n_ladder=[100, 200, 400], replicates=20)
report = run_rate_study(cfg, threads)

for regime, stats in report.slopes.items():
    for name, s in stats.items():
        print(f"{regime:13s} {name:12s} slope {s['slope']:+.3f} +- {s['stderr']:.3f}")
for key, v in sorted(report.verdicts.items()):
    print(f"{'PASS' if v['pass'] else 'FAIL'} {key}: {v['value']}")
