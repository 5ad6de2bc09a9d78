"""Monocular 3D box lifting: closed-form translation from a 2D box, plus a learned refiner.

The solver lives in ``monolift.lift.lift``; see the README for the module map.
"""

from monolift.geometry import Box2D, Dims3D, Translation

__all__ = ["Box2D", "Dims3D", "Translation"]
__version__ = "0.1.0"
