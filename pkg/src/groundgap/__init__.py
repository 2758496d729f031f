"""Minimum spectral gap of QUBO-encoded linear systems, and sampler-seeded Krylov solves."""

__version__ = "0.1.0"
