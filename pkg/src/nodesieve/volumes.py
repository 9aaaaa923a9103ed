"""Dense 3d grids with physical voxel spacing, plus their on-disk format.

A volume file is a short ASCII header followed by the raw voxel data:

    volgrid 1
    shape <d> <h> <w>
    spacing <sz> <sy> <sx>
    dtype f8|f4|u1
    end
    <row-major little-endian values>

Axis order is (z, y, x) everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = "volgrid 1"

_DTYPES = {"f8": "<f8", "f4": "<f4", "u1": "|u1"}


@dataclass
class Volume3D:
    """A scalar grid in (z, y, x) order with spacing in mm."""

    values: np.ndarray
    spacing_mm: tuple[float, float, float]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ValueError(f"volume must be 3d, got shape {self.values.shape}")
        self.spacing_mm = tuple(float(s) for s in self.spacing_mm)
        if len(self.spacing_mm) != 3 or any(s <= 0 for s in self.spacing_mm):
            raise ValueError(f"spacing must be three positive values, got {self.spacing_mm}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape


@dataclass
class BinaryMask:
    """A boolean grid in (z, y, x) order with spacing in mm."""

    voxels: np.ndarray
    spacing_mm: tuple[float, float, float]

    def __post_init__(self):
        self.voxels = np.asarray(self.voxels).astype(bool)
        if self.voxels.ndim != 3:
            raise ValueError(f"mask must be 3d, got shape {self.voxels.shape}")
        self.spacing_mm = tuple(float(s) for s in self.spacing_mm)
        if len(self.spacing_mm) != 3 or any(s <= 0 for s in self.spacing_mm):
            raise ValueError(f"spacing must be three positive values, got {self.spacing_mm}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.voxels.shape

    def is_empty(self) -> bool:
        return not bool(self.voxels.any())

    def bounding_box(self) -> tuple[int, int, int, int, int, int]:
        """Half-open (z0, z1, y0, y1, x0, x1) box around the foreground."""
        if self.is_empty():
            raise ValueError("bounding box of an empty mask")
        zs, ys, xs = np.nonzero(self.voxels)
        return (
            int(zs.min()), int(zs.max()) + 1,
            int(ys.min()), int(ys.max()) + 1,
            int(xs.min()), int(xs.max()) + 1,
        )

    def centroid_mm(self) -> np.ndarray:
        """Mean foreground voxel position in mm (z, y, x)."""
        if self.is_empty():
            raise ValueError("centroid of an empty mask")
        idx = np.argwhere(self.voxels).astype(np.float64)
        return idx.mean(axis=0) * np.asarray(self.spacing_mm)


def write_volume(path, array: np.ndarray, spacing_mm, dtype: str = "f8") -> None:
    if dtype not in _DTYPES:
        raise ValueError(f"unsupported volume dtype {dtype!r}")
    array = np.asarray(array)
    if array.ndim != 3:
        raise ValueError(f"volume must be 3d, got shape {array.shape}")
    spacing = tuple(float(s) for s in spacing_mm)
    header = "\n".join(
        [
            MAGIC,
            "shape {} {} {}".format(*array.shape),
            "spacing {!r} {!r} {!r}".format(*spacing),
            f"dtype {dtype}",
            "end",
        ]
    )
    payload = np.ascontiguousarray(array).astype(_DTYPES[dtype]).tobytes()
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(b"\n")
        fh.write(payload)


def read_volume(path) -> tuple[np.ndarray, tuple[float, float, float]]:
    """Read a volume file, returning (float64 array, spacing)."""
    path = Path(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    lines = []
    pos = 0
    while True:
        nl = blob.index(b"\n", pos)
        line = blob[pos:nl].decode("ascii")
        pos = nl + 1
        lines.append(line)
        if line == "end":
            break
        if len(lines) > 16:
            raise ValueError(f"{path}: malformed volume header")
    if lines[0] != MAGIC:
        raise ValueError(f"{path}: not a volume file (bad magic)")
    fields = {}
    for line in lines[1:-1]:
        key, _, rest = line.partition(" ")
        fields[key] = rest
    shape = tuple(int(v) for v in fields["shape"].split())
    spacing = tuple(float(v) for v in fields["spacing"].split())
    dtype = fields["dtype"]
    if dtype not in _DTYPES:
        raise ValueError(f"{path}: unsupported dtype {dtype!r}")
    raw = np.frombuffer(blob, dtype=_DTYPES[dtype], offset=pos)
    expected = shape[0] * shape[1] * shape[2]
    if raw.size != expected:
        raise ValueError(f"{path}: expected {expected} voxels, found {raw.size}")
    return raw.astype(np.float64).reshape(shape), spacing
