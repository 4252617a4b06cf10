"""Quadratic CSBP toolkit.

Closed-form analytics, exact samplers, finite pointed/marked tree
algebra with Gromov-Hausdorff bounds, backbone constructions and
conditioning-limit experiments for the quadratic continuous-state
branching process.
"""

from .params import ModelParams
from .rng import RandomStream

__version__ = "0.1.0"

__all__ = ["ModelParams", "RandomStream", "__version__"]
