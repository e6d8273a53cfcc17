"""Alpha-effect dynamo modes for steady periodic flows at low magnetic Reynolds number.

Modules: fourier_field (spectral fields on the torus), alpha_zero (cell problem,
alpha tensor, wavevector selection), continuation (lambda(eps) branch and Bloch
modes), induction_dns (linear Bloch-frame time integration), mhd_dns (nonlinear
box integration), cli.
"""
from .alpha_zero import AlphaMatrix, MeanModeSolution, NoUnstableDirection, alpha, select_xi
from .continuation import BlochMode, ContinuationBranch, build_mode, continue_branch, newton_lambda
from .fourier_field import (
    BoxSpec,
    SpectralVectorField,
    VelocityProfile,
    abc_flow,
    load_field,
    make_profile,
    random_profile,
    save_field,
)

__version__ = "0.1.0"
