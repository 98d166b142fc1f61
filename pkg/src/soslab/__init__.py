"""soslab: a numerical laboratory for a solid-on-solid interface in a weak
quadratic well.

The model assigns a height path s_0..s_N energy sum |s_x - s_{x-1}| (vertical
interface length, generalized to any symmetric increment law) plus sum s_x^2/N
(a well that stiffens the interface).  The package computes the transfer
kernel's principal eigenpair exactly up to controlled truncation, samples
stationary paths through the h-transform chain, and reproduces the model's
scaling laws: lambda_N^sqrt(N) -> exp(-sigma/sqrt(2)), a Gaussian
eigenfunction limit, N^{1/4} height fluctuations, and a stationary
Ornstein-Uhlenbeck limit for the rescaled trajectory.
"""

__version__ = "0.1.0"

from . import analysis, increments, oracle, sampler, transfer  # noqa: F401
from .increments import custom, double_geometric, from_spec, lazy_simple_walk  # noqa: F401
from .transfer import build_kernel, principal_eigenpair, solve_eigenpair  # noqa: F401
