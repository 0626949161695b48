"""Benchmark MCMC backends on four synthetic Bayesian models."""

__version__ = "0.1.0"
