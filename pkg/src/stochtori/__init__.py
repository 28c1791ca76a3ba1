"""Stochastic perturbations of integrable Hamiltonian flows on tori.

Simulates action-angle dynamics driven by Brownian or Lévy noise and checks
the Gaussian fluctuations of time-normalised angle sums across replicas.
"""
__version__ = "0.1.0"
