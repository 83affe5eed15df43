"""What happens on a complete graph.

With W = J / (n - 1) and an intercept, every rho explains the data about
equally well: the profile likelihood is monotone and the bias-corrected
estimating function never changes sign.

    python3 demos/degenerate_complete_graph.py
"""

import numpy as np

from netdisturb import DisturbanceModel, crlb, fit_mle, fit_quadform, row_normalized_weights, simulate, special_graph
from netdisturb.quadform import estimating_fn

n = 50
w = row_normalized_weights(special_graph("complete", n))
model = DisturbanceModel.intercept_only(w)
y = simulate(model, [1.0], 1.0, 0.3, seed=1)

ml = fit_mle(model, y)
qf = fit_quadform(model, y)
print(f"MLE status: {ml.status} (rho_hat = {ml.rho_hat:.4f}, the interval end)")
print(f"quadratic-form status: {qf.status}")

print("\nU^W(rho) on a few points:")
for rho in np.linspace(-0.9, 0.9, 7):
    print(f"  rho={rho:+.2f}  U={estimating_fn(model, y, rho):+.4f}")

pr = crlb(w, 0.0)
print(f"\nprecision floor at rho=0: gamma = {pr.gamma:.4f}; warnings: {list(pr.warnings)}")
