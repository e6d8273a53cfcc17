"""
Alpha tensor and the most unstable mean mode
============================================

The cell problem turns a small-scale flow into a 3x3 tensor acting on the
large-scale field. For ABC flows the tensor is diagonal; the selection then
picks the growing direction and wavenumber.
"""
import numpy as np

from alpha_dynamo import alpha_zero as az
from alpha_dynamo import fourier_field as ff

# %% ABC(1,1,1) on a small spectral cube
U = ff.abc_flow(1, 1, 1, N=4)
a = az.alpha(U)
print("alpha =\n", np.round(a.real, 12))
print("closed form -1/(2 pi) =", -1 / (2 * np.pi))

# the closed Fourier sum gives the same matrix without forming b~
b = az.alpha_fourier_sum(U)
print("route disagreement:", np.abs(a.entries - b.entries).max())

# %% the growth rate along a direction is gamma r - r^2, best at r = gamma / 2
sol = az.select_xi(a, denominator_bound=100)
print("gamma       :", sol.gamma)
print("xi (exact)  :", sol.xi_opt, " lambda0 =", sol.lam_opt.real)
print("xi (snapped):", sol.xi, " fractions", [str(f) for f in sol.fractions])
print("1/(16 pi^2) :", 1 / (16 * np.pi ** 2))

# %% a random flow: alpha is real symmetric but no longer diagonal
V = ff.random_profile(6, rng=1, decay=3.0)
av = az.alpha(V)
print("random flow alpha eigenvalues:", np.linalg.eigvalsh(av.real))
try:
    s = az.select_xi(av, denominator_bound=1000)
    print("growing direction", s.direction, "rate", s.lam.real)
except az.NoUnstableDirection as exc:
    print("no growth:", exc)
