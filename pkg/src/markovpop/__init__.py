"""Simulation and approximate inference for Markov population models."""
__version__ = "0.1.0"
