"""
Root cluster across percolation regimes
=======================================

Run small replicate studies with p_n -> 1 at different speeds and compare the
root cluster fraction with the predicted limit.
"""

from cmjtrees import ExperimentConfig, RegimeSchedule, families, predict, run_experiment

fam = families.preset("rrt")
n_values = (1e3, 1e4, 1e5)

for sched in (RegimeSchedule("weak"), RegimeSchedule("super", c=1.0), RegimeSchedule("strong")):
    cfg = ExperimentConfig(fam, sched, n_values, replicates=40, master_seed=1)
    rep = run_experiment(cfg)
    print(sched.describe(), " limit:", round(predict(fam, sched).giant_fraction, 4))
    for a in rep.aggregates:
        print(f"   n={a['n']:8g}  p={a['p']:.4f}  C/n={a['mean_frac']:.4f} +- {a['se_frac']:.4f}"
              f"  finite-n prediction={a['predicted_frac']:.4f}")
