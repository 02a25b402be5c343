"""Finite-size spacing distributions of the circular ensembles."""
