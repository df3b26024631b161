"""Linear and nonlinear instability toolkit for anisotropic micropolar fluids on the 3-torus."""
from .params import (FINITE_K_PRESET, OBLATE_PRESET, PRESETS, ZERO_MODE_PRESET, PhysicalParams,
                     derive_constants, validate)

__all__ = ["PhysicalParams", "ZERO_MODE_PRESET", "FINITE_K_PRESET", "OBLATE_PRESET", "PRESETS",
           "derive_constants", "validate"]
__version__ = "0.1.0"
