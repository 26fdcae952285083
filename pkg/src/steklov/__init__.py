"""Dirichlet-to-Neumann spectra on model surfaces.

Forward solvers for parametric Steklov problems on the disk and annulus,
eigenvalue asymptotics derived from a boundary symbol calculus, and an
inverse-spectral decoupler recovering boundary lengths and curvature
invariants from a merged spectrum.
"""

from .periodic import PeriodicFunction, multiply, differentiate, mean, antiderivative

__version__ = "0.1.0"

__all__ = [
    "PeriodicFunction",
    "multiply",
    "differentiate",
    "mean",
    "antiderivative",
    "__version__",
]
