"""Least-squares finite elements, reduced bases and residual-trained neural
operators for parametric diffusion and linear elasticity."""

__version__ = "0.1.0"
