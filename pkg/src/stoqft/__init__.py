"""Desk-scale simulations of noise-driven quantum dynamics.

Modules:
  noise      Wiener and spacetime white-noise sampling, momentum modes.
  oscillator Stochastic Schrodinger / Lindblad oscillator with exact oracles.
  fock       Truncated occupation-number bases and ladder operators.
  freefield  Random S-matrix theory of a free scalar field coupled to noise.
  phi4       Order-g quartic interaction: paired diagrams and collisions.
  mcstats    Monte Carlo estimates and statistical test harness.
  cli        Command-line experiment runner.
"""

__all__ = ["noise", "oscillator", "fock", "freefield", "phi4", "mcstats",
           "rng", "experiments", "cli"]

__version__ = "0.1.0"
