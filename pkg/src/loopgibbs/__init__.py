"""Gibbs measures of anharmonic lattice systems in the temperature-loop representation.

The package builds finite-volume Gibbs measures whose single-site state space is
a space of periodic paths ("temperature loops") carried in a truncated Fourier
basis, samples them with a prior-preserving Crank-Nicolson chain, and compares
them against their classical (point-particle) counterparts as the particle mass
grows.  Submodules:

- lattice: boxes, radial couplings, polynomial on-site potentials
- loops: Fourier mode basis, loops, configurations, boundary data
- gaussian: covariance spectra, exact Gaussian sampling, trace distances
- energy: interaction energy functionals (path-space and classical, free and periodic)
- gibbs: Gibbs targets, Markov chains, estimators
- observables: order parameters, mass sweeps, monotonicity checks
- oracle: dense Gauss-Hermite quadrature oracle for tiny instances
- config / harness / cli: experiment configs, manifests, commands
"""

__version__ = "0.1.0"
