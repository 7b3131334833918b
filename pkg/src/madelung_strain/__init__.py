"""Madelung hydrodynamics, frame strain and metric strain on uniform grids."""

__version__ = "0.1.0"

from . import errors, grid

__all__ = ["__version__", "errors", "grid"]
