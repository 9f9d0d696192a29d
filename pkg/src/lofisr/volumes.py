"""Geometry-aware 3D volume containers and resampling primitives.

A volume couples a scalar grid with its voxel spacing (mm) and a 4x4
homogeneous voxel-to-world affine.  Data arrays are indexed ``(x, y, z)``;
the canonical flat layout is x-fastest (``ravel(order="F")``), which is
also the on-disk order used by the NIfTI writer.

Conventions fixed here and relied on everywhere else:

* voxel *centers* sit at integer indices, so ``affine @ (i, j, k, 1)`` is
  the world position of the center of voxel ``(i, j, k)``;
* interpolation outside the source extent returns 0 (background);
* nearest-neighbor ties (coordinate exactly halfway between two voxel
  centers) round toward the lower index.

Volumes are immutable after construction: the data array is marked
read-only, and every operation returns a new instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import BoundsError, GeometryError, InputError

__all__ = [
    "Grid",
    "Volume",
    "LabelVolume",
    "default_affine",
    "validate_affine",
    "voxel_to_world",
    "world_to_voxel",
    "trilinear_sample",
    "nearest_sample",
    "resample_trilinear",
    "resample_nearest",
    "min_max_normalize",
    "crop",
]


def default_affine(spacing: Sequence[float]) -> np.ndarray:
    """Axis-aligned affine with the given spacing and origin at voxel (0,0,0)."""
    a = np.eye(4, dtype=np.float64)
    a[0, 0], a[1, 1], a[2, 2] = (float(s) for s in spacing)
    return a


def validate_affine(affine: np.ndarray) -> np.ndarray:
    """Check shape, last row, finiteness, and invertibility of the 3x3 part."""
    a = np.asarray(affine, dtype=np.float64)
    if a.shape != (4, 4):
        raise GeometryError(f"affine must be 4x4, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise GeometryError("affine contains non-finite entries")
    if not np.array_equal(a[3], [0.0, 0.0, 0.0, 1.0]):
        raise GeometryError(f"affine last row must be (0, 0, 0, 1), got {a[3]}")
    if abs(np.linalg.det(a[:3, :3])) < 1e-12:
        raise GeometryError("affine is not invertible (singular 3x3 part)")
    return a


def _validate_spacing(spacing) -> tuple[float, float, float]:
    s = tuple(float(v) for v in spacing)
    if len(s) != 3 or any(not np.isfinite(v) or v <= 0 for v in s):
        raise GeometryError(f"spacing must be three positive numbers, got {spacing}")
    return s


@dataclass(frozen=True)
class Grid:
    """Target geometry for resampling: voxel counts, spacing, and affine."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    affine: np.ndarray

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise GeometryError(f"grid dims must be three counts >= 1, got {self.dims}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", _validate_spacing(self.spacing))
        a = validate_affine(self.affine)
        a.flags.writeable = False
        object.__setattr__(self, "affine", a)

    def matches(self, other: "Grid", tol: float = 1e-9) -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.spacing, other.spacing, atol=tol)
            and np.allclose(self.affine, other.affine, atol=tol)
        )


def _freeze_array(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Volume:
    """A 3D scalar image on a world-space grid.

    ``data`` is a float64 array of shape ``(nx, ny, nz)`` with all values
    finite.  ``spacing`` is the nominal voxel size in mm and ``affine`` the
    voxel-to-world transform.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    affine: np.ndarray | None = None

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 3 or min(d.shape) < 1:
            raise GeometryError(f"volume data must be 3D with dims >= 1, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise InputError("volume data contains non-finite values")
        object.__setattr__(self, "data", _freeze_array(d))
        object.__setattr__(self, "spacing", _validate_spacing(self.spacing))
        aff = default_affine(self.spacing) if self.affine is None else self.affine
        aff = validate_affine(aff)
        aff.flags.writeable = False
        object.__setattr__(self, "affine", aff)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def grid(self) -> Grid:
        return Grid(self.dims, self.spacing, self.affine)

    def with_data(self, data: np.ndarray) -> "Volume":
        """New volume with the same geometry and different values."""
        return Volume(data, self.spacing, self.affine)


@dataclass(frozen=True)
class LabelVolume:
    """An integer-labeled 3D grid plus its label table.

    Every label value present in ``data`` must have an entry in
    ``label_table``; label 0 is reserved for background and always present.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    affine: np.ndarray | None = None
    label_table: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self):
        d = np.asarray(self.data)
        if not np.issubdtype(d.dtype, np.integer):
            if not np.all(d == np.round(d)):
                raise InputError("label data must be integer-valued")
            d = d.astype(np.int32)
        d = d.astype(np.int32, copy=False)
        if d.ndim != 3 or min(d.shape) < 1:
            raise GeometryError(f"label data must be 3D with dims >= 1, got shape {d.shape}")
        if d.min() < 0:
            raise InputError("labels must be non-negative")
        table = {int(k): str(v) for k, v in dict(self.label_table).items()}
        table.setdefault(0, "background")
        present = set(int(v) for v in np.unique(d))
        missing = sorted(present - set(table))
        if missing:
            raise InputError(f"labels {missing} present in data but absent from label_table")
        object.__setattr__(self, "data", _freeze_array(d))
        object.__setattr__(self, "spacing", _validate_spacing(self.spacing))
        aff = default_affine(self.spacing) if self.affine is None else self.affine
        aff = validate_affine(aff)
        aff.flags.writeable = False
        object.__setattr__(self, "affine", aff)
        object.__setattr__(self, "label_table", dict(sorted(table.items())))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def grid(self) -> Grid:
        return Grid(self.dims, self.spacing, self.affine)

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(self.label_table)

    def with_data(self, data: np.ndarray, label_table: Mapping[int, str] | None = None) -> "LabelVolume":
        return LabelVolume(data, self.spacing, self.affine,
                           self.label_table if label_table is None else label_table)


def voxel_to_world(affine: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Map voxel indices ``(..., 3)`` to world coordinates ``(..., 3)``."""
    idx = np.asarray(idx, dtype=np.float64)
    return idx @ affine[:3, :3].T + affine[:3, 3]


def world_to_voxel(affine: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Map world coordinates ``(..., 3)`` to continuous voxel indices."""
    inv = np.linalg.inv(validate_affine(affine))
    pts = np.asarray(pts, dtype=np.float64)
    return pts @ inv[:3, :3].T + inv[:3, 3]


def trilinear_sample(data: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of ``data`` at continuous voxel coordinates.

    ``coords`` has shape ``(..., 3)``.  Corners outside the array contribute
    the value 0, so samples fade to background past the boundary.
    """
    data = np.asarray(data, dtype=np.float64)
    c = np.asarray(coords, dtype=np.float64)
    i0 = np.floor(c).astype(np.int64)
    f = c - i0
    out = np.zeros(c.shape[:-1], dtype=np.float64)
    nx, ny, nz = data.shape
    for dx in (0, 1):
        wx = f[..., 0] if dx else 1.0 - f[..., 0]
        ix = i0[..., 0] + dx
        okx = (ix >= 0) & (ix < nx)
        for dy in (0, 1):
            wy = f[..., 1] if dy else 1.0 - f[..., 1]
            iy = i0[..., 1] + dy
            oky = (iy >= 0) & (iy < ny)
            for dz in (0, 1):
                wz = f[..., 2] if dz else 1.0 - f[..., 2]
                iz = i0[..., 2] + dz
                ok = okx & oky & (iz >= 0) & (iz < nz)
                vals = data[ix.clip(0, nx - 1), iy.clip(0, ny - 1), iz.clip(0, nz - 1)]
                out += wx * wy * wz * np.where(ok, vals, 0.0)
    return out


def nearest_sample(data: np.ndarray, coords: np.ndarray, fill=0) -> np.ndarray:
    """Nearest-neighbor lookup at continuous voxel coordinates.

    Half-way coordinates round toward the lower index.  Samples outside the
    array return ``fill``.
    """
    data = np.asarray(data)
    c = np.asarray(coords, dtype=np.float64)
    # ceil(c - 0.5) is the nearest integer with halves rounded down
    idx = np.ceil(c - 0.5).astype(np.int64)
    nx, ny, nz = data.shape
    ok = ((idx[..., 0] >= 0) & (idx[..., 0] < nx)
          & (idx[..., 1] >= 0) & (idx[..., 1] < ny)
          & (idx[..., 2] >= 0) & (idx[..., 2] < nz))
    vals = data[idx[..., 0].clip(0, nx - 1),
                idx[..., 1].clip(0, ny - 1),
                idx[..., 2].clip(0, nz - 1)]
    return np.where(ok, vals, np.asarray(fill, dtype=data.dtype))


def _index_grid(dims: tuple[int, int, int]) -> np.ndarray:
    ii, jj, kk = np.meshgrid(np.arange(dims[0]), np.arange(dims[1]), np.arange(dims[2]),
                             indexing="ij")
    return np.stack([ii, jj, kk], axis=-1).astype(np.float64)


def source_coords(src_affine: np.ndarray, target: Grid) -> np.ndarray:
    """Continuous source voxel coordinates of every target voxel center."""
    m = np.linalg.inv(validate_affine(src_affine)) @ target.affine
    idx = _index_grid(target.dims)
    return idx @ m[:3, :3].T + m[:3, 3]


def resample_trilinear(src: Volume, target: Grid) -> Volume:
    """Resample a volume onto a target grid with trilinear interpolation."""
    coords = source_coords(src.affine, target)
    return Volume(trilinear_sample(src.data, coords), target.spacing, target.affine)


def resample_nearest(src: LabelVolume, target: Grid) -> LabelVolume:
    """Resample a label volume onto a target grid with nearest-neighbor lookup."""
    coords = source_coords(src.affine, target)
    data = nearest_sample(src.data, coords, fill=0)
    return LabelVolume(data, target.spacing, target.affine, src.label_table)


def min_max_normalize(v: Volume) -> Volume:
    """Rescale to [0, 1]; a constant volume maps to all zeros."""
    lo = float(v.data.min())
    hi = float(v.data.max())
    if hi <= lo:
        return v.with_data(np.zeros(v.dims))
    return v.with_data((v.data - lo) / (hi - lo))


def crop(v: Volume | LabelVolume, origin: Sequence[int], size: Sequence[int]):
    """Extract a sub-volume; the affine is shifted so world coordinates are kept."""
    origin = tuple(int(o) for o in origin)
    size = tuple(int(s) for s in size)
    if len(origin) != 3 or len(size) != 3:
        raise BoundsError("origin and size must have three components")
    if any(s < 1 for s in size) or any(o < 0 for o in origin):
        raise BoundsError(f"invalid crop origin {origin} / size {size}")
    if any(o + s > d for o, s, d in zip(origin, size, v.dims)):
        raise BoundsError(f"crop origin {origin} + size {size} exceeds dims {v.dims}")
    sl = tuple(slice(o, o + s) for o, s in zip(origin, size))
    aff = np.array(v.affine)
    aff[:3, 3] = voxel_to_world(v.affine, np.asarray(origin, dtype=np.float64))
    if isinstance(v, LabelVolume):
        return LabelVolume(v.data[sl], v.spacing, aff, v.label_table)
    return Volume(v.data[sl], v.spacing, aff)
