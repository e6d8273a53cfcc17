"""
Small seeds reach a fixed amplitude
===================================

Full MHD perturbation dynamics on the box that carries the growing mode.
Smaller seeds take longer, by ln(1/delta) / lambda each. The default run uses
a low threshold and takes about three minutes; pass --full for the 10%
threshold with three seeds (about twelve minutes on one core).
"""
import sys

import numpy as np

from alpha_dynamo import alpha_zero as az
from alpha_dynamo import continuation as co
from alpha_dynamo import fourier_field as ff
from alpha_dynamo import mhd_dns as mhd

full = "--full" in sys.argv
eps = 0.5
U = ff.abc_flow(1, 1, 1, N=2)
sol = az.select_xi(az.alpha(U), denominator_bound=100)
lam, _, _ = co.newton_lambda(U, sol.xi, eps, sol.lam)
mode = co.build_mode(U, sol.xi, eps, lam)
print("box", mode.box.T, " lambda =", lam.real, " 1/lambda =", 1 / lam.real)

# %% threshold as a fraction of |U|_{H^3}
deltas = [1e-2, 1e-3, 1e-4] if full else [1e-2, 5e-3]
frac = 0.1 if full else 1e-3
rep = mhd.run_instability(U, mode, eps, deltas, threshold_frac=frac, record_every=10)
for d, t, sh in zip(rep.delta_list, rep.t_delta, rep.shadowing):
    print(f"delta={d:g}  t_delta={t:.1f}  early shadowing={sh:.4f}")
print("slope of t_delta against ln(1/delta):", rep.slope_fit)
print("affine residual / spread:", rep.residual)

# %% estimate probe: the quadratic term is bounded by the interpolated norms
mx, ratios = mhd.q_estimate_probe(40, 4.0, eps, seed=0)
print(f"Q-ratio over 40 random states: median {np.median(ratios):.3g}, max {mx:.3g}")
