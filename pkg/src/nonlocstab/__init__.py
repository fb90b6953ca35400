"""Solvers and stability audits for 1D nonlocal Poisson problems with volume constraints."""

__version__ = "0.1.0"
