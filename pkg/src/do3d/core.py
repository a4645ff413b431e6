"""Grid types, input validation helpers and bilinear sampling.

Fields are plain numpy arrays in float64:

* scalar field  -- shape ``(H, W)`` (depth in meters, loss maps, ...)
* color image   -- shape ``(H, W, 3)`` with values in ``[0, 1]``
* vector field  -- shape ``(H, W, 3)`` (x, y, z components in meters)
* binary mask   -- shape ``(H, W)``, values in ``{0, 1}`` (soft masks: ``[0, 1]``)

Pixel coordinates are ``(u, v) = (column, row)`` with the origin at the
center of the top-left pixel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError

__all__ = [
    "BBox",
    "bilinear_sample",
    "check_scalar_field",
    "check_color_image",
    "check_vector_field",
    "check_mask",
    "check_same_hw",
    "pixel_grid",
    "bbox_from_mask",
]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned pixel box with inclusive corners."""

    u_min: int
    v_min: int
    u_max: int
    v_max: int

    def __post_init__(self):
        if self.u_min > self.u_max or self.v_min > self.v_max:
            raise ContractError(f"inverted box {self}")

    def clamp(self, height, width):
        return BBox(
            max(0, self.u_min),
            max(0, self.v_min),
            min(width - 1, self.u_max),
            min(height - 1, self.v_max),
        )

    def as_slices(self):
        return slice(self.v_min, self.v_max + 1), slice(self.u_min, self.u_max + 1)

    def to_mask(self, height, width):
        mask = np.zeros((height, width), dtype=bool)
        mask[self.as_slices()] = True
        return mask


def _as_float(a, name):
    arr = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} contains non-finite values")
    return arr


def check_scalar_field(field, name="field", allow_nonfinite=False):
    arr = np.asarray(field, dtype=np.float64)
    if arr.ndim != 2:
        raise ContractError(f"{name} must be 2-D (H, W), got shape {arr.shape}")
    if not allow_nonfinite and not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} contains non-finite values")
    return arr


def check_color_image(image, name="image"):
    arr = _as_float(image, name)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ContractError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ContractError(f"{name} values must lie in [0, 1]")
    return arr


def check_vector_field(field, name="vector field"):
    arr = _as_float(field, name)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ContractError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    return arr


def check_mask(mask, name="mask", soft=False):
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ContractError(f"{name} must be 2-D (H, W), got shape {arr.shape}")
    if soft:
        arr = arr.astype(np.float64)
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ContractError(f"soft {name} values must lie in [0, 1]")
        return arr
    if arr.dtype != bool:
        if not np.all((arr == 0) | (arr == 1)):
            raise ContractError(f"hard {name} must contain only 0/1")
        arr = arr.astype(bool)
    return arr


def check_same_hw(*arrays):
    shapes = {tuple(np.shape(a)[:2]) for a in arrays}
    if len(shapes) != 1:
        raise ContractError(f"dimension mismatch: {sorted(shapes)}")
    return shapes.pop()


def pixel_grid(height, width):
    """Return ``(u, v)`` coordinate arrays of shape ``(H, W)``."""
    v, u = np.mgrid[0:height, 0:width]
    return u.astype(np.float64), v.astype(np.float64)


def bilinear_sample(field, x, y):
    """Sample ``field`` at sub-pixel coordinates with border clamping.

    ``x`` and ``y`` may be scalars or arrays of the same shape.  Returns
    ``(value, valid)`` where ``valid`` is False for coordinates outside
    ``[0, W-1] x [0, H-1]``; such samples are taken at the clamped
    coordinate.  For vector/color fields the trailing channel axis is kept.
    """
    f = np.asarray(field, dtype=np.float64)
    h, w = f.shape[:2]
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    valid = (x >= 0.0) & (x <= w - 1) & (y >= 0.0) & (y <= h - 1)
    xc = np.clip(np.nan_to_num(x, nan=0.0), 0.0, w - 1)
    yc = np.clip(np.nan_to_num(y, nan=0.0), 0.0, h - 1)
    valid = valid & np.isfinite(x) & np.isfinite(y)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = xc - x0
    wy = yc - y0
    if f.ndim == 3:
        wx = wx[..., None]
        wy = wy[..., None]
    top = f[y0, x0] * (1.0 - wx) + f[y0, x1] * wx
    bottom = f[y1, x0] * (1.0 - wx) + f[y1, x1] * wx
    value = top * (1.0 - wy) + bottom * wy
    if value.ndim == 0 or (f.ndim == 3 and value.ndim == 1):
        return value if f.ndim == 3 else float(value), bool(valid)
    return value, valid


def bbox_from_mask(mask):
    """Tight bounding box of a nonempty mask, or None."""
    m = np.asarray(mask, dtype=bool)
    if not m.any():
        return None
    rows = np.flatnonzero(m.any(axis=1))
    cols = np.flatnonzero(m.any(axis=0))
    return BBox(int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1]))
