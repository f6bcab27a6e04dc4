"""Rayleigh-Bénard convection: Boussinesq and rotating infinite-Prandtl solvers,
Nusselt diagnostics, the operator B and the kernel sums K(x, z)."""

from .boussinesq import BoussinesqState, linear_growth_rates, run_boussinesq, step_boussinesq
from .nusselt import fluctuation_n, nusselt_and_identities, nusselt_bounds
from .operators import KernelParams, apply_B, kernel_sum, thm8_check
from .rotating import RotatingIPState, run_rotating, step_infinite_prandtl_rotating

__all__ = [
    "BoussinesqState",
    "KernelParams",
    "RotatingIPState",
    "apply_B",
    "fluctuation_n",
    "kernel_sum",
    "linear_growth_rates",
    "nusselt_and_identities",
    "nusselt_bounds",
    "run_boussinesq",
    "run_rotating",
    "step_boussinesq",
    "step_infinite_prandtl_rotating",
    "thm8_check",
]
