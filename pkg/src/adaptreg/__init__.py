"""Adaptive regularisation and mesh refinement for linear-quadratic optimal control."""
from .kernels import BACKEND

__version__ = "0.1.0"
