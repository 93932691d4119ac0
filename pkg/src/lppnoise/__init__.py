"""Noise sensitivity of geometric last-passage percolation: simulation and
exact verification tools (lattice fields, resampling dynamics, stationary
boundary models, Boolean-cube semigroup calculus, Monte Carlo estimators)."""

__version__ = "0.1.0"
