"""Intrinsic calculus on low-codimension intrinsic graphs in the Heisenberg group."""
__version__ = "0.1.0"

from . import hgroup, expr, split, intrinsic, approx, measure  # noqa: E402,F401
