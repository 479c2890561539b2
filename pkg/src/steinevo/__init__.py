"""Stein variational evolution strategies: gradient-free SVGD driven by CMA-ES or OpenAI-ES steps."""
from ._accel import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
