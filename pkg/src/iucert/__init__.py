"""Numerical certificates for intrinsic ultracontractivity of radial Schrodinger semigroups."""

__version__ = "0.1.0"
