"""Candidate classification for node-like lesions in volumetric scans.

Combines per-candidate 3D CNN appearance features, tumor-relative
spatial priors, and relational message passing between candidates of
the same study, trained and evaluated on synthetic phantom studies
with FROC metrics.
"""

__version__ = "0.1.0"

from .autodiff import Mlp, MlpSpec, Parameter, Tensor, adam_step
from .edt import DistanceMap, distance_at, distance_transform
from .volumes import BinaryMask, Volume3D
from .priors import SpatialPrior, assemble_prior

__all__ = [
    "Mlp",
    "MlpSpec",
    "Parameter",
    "Tensor",
    "adam_step",
    "BinaryMask",
    "Volume3D",
    "DistanceMap",
    "distance_transform",
    "distance_at",
    "SpatialPrior",
    "assemble_prior",
    "__version__",
]
