"""Hard-sphere gas laboratory in the Boltzmann-Grad scaling."""

__version__ = "0.1.0"
