"""Compare the MLE and the quadratic-form estimator on G(100, p) graphs.

Draws one graph and design per cell, simulates 100 responses at each rho
and prints the mean and spread of both estimators next to the realized
precision floor. Run from the repository root:

    python3 demos/compare_estimators.py
"""

from netdisturb.simlab import DesignSpec, ExperimentConfig, GraphSpec, run_experiment

cfg = ExperimentConfig.grid(
    GraphSpec("gnp", 100),
    DesignSpec("gaussian", 3),
    rho_values=[-0.2, 0.0, 0.2],
    p_values=[0.0975, 0.36],
    replicates=100,
    methods=("qf_w", "mle"),
    master_seed=2024,
)
table = run_experiment(cfg)

print(f"{'p':>7} {'rho':>5} {'method':>6} {'mean':>7} {'se':>6} {'gamma':>6} {'fail':>4}")
for r in table.rows:
    print(f"{r.graph_param:7.4f} {r.rho:5.2f} {r.method:>6} {r.mean:7.3f} {r.se_single:6.3f} {r.gamma:6.3f} {r.failures:4d}")

# The MLE drifts downward as the graph gets denser; the quadratic-form
# estimate stays centred, at the price of a spread somewhat above gamma.
