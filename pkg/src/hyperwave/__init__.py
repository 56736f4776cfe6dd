"""Wave maps into hyperbolic space, the harmonic-map heat flow and the caloric gauge."""

__version__ = "0.1.0"

from .geometry import Hyperboloid  # noqa: E402
from .grid import Grid2D, MapField  # noqa: E402

__all__ = ["Hyperboloid", "Grid2D", "MapField", "__version__"]
