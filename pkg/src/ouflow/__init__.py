"""Spectral stochastic vorticity dynamics coupled to an Ornstein-Uhlenbeck reference.

Subpackage map:

- lattice: truncated wave-vector lattice, conjugate-symmetric mode fields, norms
- forcing: power-law forcing spectrum and shared Brownian mode increments
- dynamics: nonlinearity, coupled exponential integrators, auxiliary process
- estimates: envelope constants, trap sets, residual/energy/tail bounds, mode sums
- girsanov: log density ratios, stopping times, relative entropy, 1D toy checks
- stats: mode rescaling, autocovariance, KS distance, weak-convergence tables
- cli: config-driven experiment runner
"""

__version__ = "0.1.0"
