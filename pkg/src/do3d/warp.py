"""View synthesis by inverse warping.

A target pixel ``p_t`` with depth ``d_t`` is lifted to 3D, displaced by the
per-pixel motion map (if any), moved into the source camera by the ego
pose and projected; the source image is then bilinearly sampled there.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Intrinsics, PoseSE3, backproject_grid, project_points, transform
from .core import bilinear_sample, check_color_image, check_scalar_field, check_vector_field
from .exceptions import ContractError, DomainError
from .fileio import write_pfm

__all__ = [
    "CorrespondenceMap",
    "project_correspondence",
    "inverse_warp",
    "forward_splat",
    "forward_splat_mask",
]


@dataclass
class CorrespondenceMap:
    u: np.ndarray  # source column, NaN where projection failed
    v: np.ndarray  # source row
    d: np.ndarray  # source depth
    valid: np.ndarray  # bool (H, W)

    @property
    def shape(self):
        return self.valid.shape

    def flow(self):
        h, w = self.shape
        v, u = np.mgrid[0:h, 0:w]
        return np.stack([self.u - u, self.v - v], axis=-1)

    def to_pfm(self):
        """3-channel PFM of ``(u_s, v_s, d_s)``; invalid pixels written as -1."""
        stack = np.stack([self.u, self.v, self.d], axis=-1)
        stack = np.where(self.valid[..., None], stack, -1.0)
        return write_pfm(stack)


BORDER_TOL = 1e-9  # pixels; round-off beyond the border still counts as inside


def snap_to_border(x, hi, tol=BORDER_TOL):
    """Pull coordinates within ``tol`` outside ``[0, hi]`` onto the border."""
    x = np.where((x < 0) & (x >= -tol), 0.0, x)
    return np.where((x > hi) & (x <= hi + tol), float(hi), x)


def project_correspondence(depth, K: Intrinsics, T: PoseSE3, motion=None) -> CorrespondenceMap:
    depth = check_scalar_field(depth, "depth")
    if np.any(depth <= 0):
        raise DomainError("target depth must be positive everywhere")
    P = backproject_grid(K, depth)
    if motion is not None:
        motion = check_vector_field(motion, "motion map")
        if motion.shape[:2] != depth.shape:
            raise ContractError(
                f"motion map {motion.shape[:2]} does not match depth {depth.shape}")
        P = P + motion
    Xs = transform(T, P)
    u, v, z, ok = project_points(K, Xs)
    h, w = depth.shape
    u = snap_to_border(u, w - 1)
    v = snap_to_border(v, h - 1)
    inside = ok & (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    return CorrespondenceMap(u=u, v=v, d=z, valid=inside)


def inverse_warp(source, corr: CorrespondenceMap):
    """Reconstruct the target frame; returns ``(image, valid)``."""
    src = np.asarray(source, dtype=np.float64)
    if src.shape[:2] != corr.shape:
        raise ContractError(f"source {src.shape[:2]} does not match correspondence {corr.shape}")
    out, in_bounds = bilinear_sample(src, corr.u, corr.v)
    return out, corr.valid & in_bounds


def forward_splat(depth_s, K: Intrinsics, T_inv: PoseSE3):
    """Nearest-pixel z-buffered splat of source pixels into the target view.

    Returns ``(hit, zbuf, src_index)``: the hit mask, the winning
    (closest) target-frame depth per pixel (inf where empty) and the
    row-major index of the winning source pixel (-1 where empty).  Ties in
    depth go to the lowest source index.
    """
    depth_s = check_scalar_field(depth_s, "source depth")
    if np.any(depth_s <= 0):
        raise DomainError("source depth must be positive everywhere")
    h, w = depth_s.shape
    X = transform(T_inv, backproject_grid(K, depth_s)).reshape(-1, 3)
    u, v, z, ok = project_points(K, X)
    ui = np.floor(np.where(ok, u, -1.0) + 0.5)
    vi = np.floor(np.where(ok, v, -1.0) + 0.5)
    keep = ok & (ui >= 0) & (ui <= w - 1) & (vi >= 0) & (vi <= h - 1)
    src = np.flatnonzero(keep)
    tgt = (vi[keep] * w + ui[keep]).astype(np.intp)
    zk = z[keep]
    zbuf = np.full(h * w, np.inf)
    winner = np.full(h * w, -1, dtype=np.intp)
    if src.size:
        order = np.lexsort((src, zk, tgt))
        tgt_sorted = tgt[order]
        first = np.ones(order.size, dtype=bool)
        first[1:] = tgt_sorted[1:] != tgt_sorted[:-1]
        sel = order[first]
        zbuf[tgt[sel]] = zk[sel]
        winner[tgt[sel]] = src[sel]
    hit = winner >= 0
    return hit.reshape(h, w), zbuf.reshape(h, w), winner.reshape(h, w)


def forward_splat_mask(depth_s, K: Intrinsics, T_inv: PoseSE3):
    return forward_splat(depth_s, K, T_inv)[0]
