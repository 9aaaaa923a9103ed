"""Per-candidate spatial context relative to the lung field and tumor.

The prior is a 6-vector: x and y normalized against the lung bounding
box, z normalized against the scan extent, distance to the tumor in
units of 100 mm, and the elevation/azimuth of the candidate as seen
from the tumor centroid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .edt import DistanceMap, distance_at
from .volumes import BinaryMask


@dataclass(frozen=True)
class SpatialPrior:
    x_norm: float
    y_norm: float
    z_norm: float
    tumor_dist: float
    elevation: float
    azimuth: float

    def __post_init__(self):
        vec = self.as_array()
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"spatial prior has non-finite components: {vec}")
        if not -math.pi / 2 <= self.elevation <= math.pi / 2:
            raise ValueError(f"elevation {self.elevation} outside [-pi/2, pi/2]")
        if not -math.pi < self.azimuth <= math.pi:
            raise ValueError(f"azimuth {self.azimuth} outside (-pi, pi]")

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.x_norm, self.y_norm, self.z_norm,
             self.tumor_dist, self.elevation, self.azimuth]
        )


PRIOR_WIDTH = 6


def normalize_xy(center_yx, lung_mask: BinaryMask) -> tuple[float, float]:
    """Map (y, x) voxel coordinates into [0, 1] using the lung bounding box."""
    if lung_mask.is_empty():
        raise ValueError("lung mask is empty")
    _, _, y0, y1, x0, x1 = lung_mask.bounding_box()
    cy, cx = (float(v) for v in center_yx)

    def scaled(c, lo, hi):
        # hi is one past the last foreground voxel; the box spans [lo, hi - 1]
        span = (hi - 1) - lo
        if span == 0:
            return 0.5
        return min(1.0, max(0.0, (c - lo) / span))

    return scaled(cy, y0, y1), scaled(cx, x0, x1)


def normalize_z(center_z: int, extent_z: int) -> float:
    if extent_z < 2:
        raise ValueError("z extent must be at least 2")
    return float(center_z) / float(extent_z - 1)


def tumor_angles(candidate_mm, centroid_mm) -> tuple[float, float]:
    """Elevation and azimuth of the candidate relative to the tumor centroid.

    Both are zero when the points coincide.
    """
    delta = np.asarray(candidate_mm, dtype=np.float64) - np.asarray(
        centroid_mm, dtype=np.float64
    )
    r = float(np.linalg.norm(delta))
    if r == 0.0:
        return 0.0, 0.0
    elevation = math.asin(max(-1.0, min(1.0, delta[0] / r)))
    azimuth = math.atan2(delta[1], delta[2])
    if azimuth <= -math.pi:
        azimuth = math.pi
    return elevation, azimuth


def assemble_prior(
    center_voxel,
    lung_mask: BinaryMask,
    tumor_dt: DistanceMap,
    tumor_centroid_mm,
) -> SpatialPrior:
    """Build the full 6-component prior for one candidate center voxel."""
    cz, cy, cx = (int(v) for v in center_voxel)
    spacing = np.asarray(tumor_dt.spacing_mm)
    center_mm = np.array([cz, cy, cx], dtype=np.float64) * spacing
    y_norm, x_norm = normalize_xy((cy, cx), lung_mask)
    z_norm = normalize_z(cz, tumor_dt.shape[0])
    dist = distance_at(tumor_dt, center_mm) / 100.0
    elevation, azimuth = tumor_angles(center_mm, tumor_centroid_mm)
    return SpatialPrior(
        x_norm=x_norm,
        y_norm=y_norm,
        z_norm=z_norm,
        tumor_dist=dist,
        elevation=elevation,
        azimuth=azimuth,
    )
