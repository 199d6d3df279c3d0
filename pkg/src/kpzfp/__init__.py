"""Exact TASEP formulas, lattice kernels and KPZ fixed point numerics."""

__version__ = "0.1.0"
