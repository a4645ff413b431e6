"""Object motion: per-instance rigid transforms plus a per-pixel
deformation field, composed into one 3D motion map.

For a pixel of instance ``i`` with backprojected point ``P``::

    M(p) = rigid_i(P + deformation(p)) - P

and ``M = 0`` outside every instance mask.  Rigid motions act on points
expressed in the target camera frame, before the ego transform.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import EulerPose, PoseSE3, pose_from_euler, transform
from .core import BBox, bbox_from_mask, check_mask, check_vector_field
from .exceptions import ContractError
from .loss import photometric_map

__all__ = [
    "BBOX_MARGIN",
    "Instance",
    "InstanceSet",
    "RigidMotion6DoF",
    "enlarge_bbox",
    "compose_object_motion",
    "StaticFilterResult",
    "static_filter",
    "motion_to_rgb",
]

BBOX_MARGIN = 20  # pixels added to every side of an object box


@dataclass
class Instance:
    id: int
    mask: np.ndarray
    bbox: BBox = None

    def __post_init__(self):
        self.mask = check_mask(self.mask, f"mask of instance {self.id}")
        if self.bbox is None:
            self.bbox = bbox_from_mask(self.mask)


class InstanceSet(list):
    """List of :class:`Instance` with unique ids."""

    def __init__(self, items=()):
        super().__init__(items)
        ids = [inst.id for inst in self]
        if len(set(ids)) != len(ids):
            raise ContractError(f"instance ids must be unique, got {ids}")

    def ids(self):
        return [inst.id for inst in self]

    def by_id(self, obj_id):
        for inst in self:
            if inst.id == obj_id:
                return inst
        raise ContractError(f"unknown instance id {obj_id}")

    def union(self, shape=None):
        if not self:
            if shape is None:
                raise ContractError("empty instance set needs an explicit shape")
            return np.zeros(shape, dtype=bool)
        out = np.zeros(self[0].mask.shape, dtype=bool)
        for inst in self:
            out |= inst.mask
        return out


@dataclass
class RigidMotion6DoF:
    id: int
    pose: EulerPose = field(default_factory=EulerPose)

    def se3(self) -> PoseSE3:
        return pose_from_euler(self.pose)


def enlarge_bbox(b: BBox, height, width, margin=BBOX_MARGIN) -> BBox:
    return BBox(b.u_min - margin, b.v_min - margin, b.u_max + margin, b.v_max + margin).clamp(
        height, width)


def compose_object_motion(points, instances, rigids, deformation=None):
    """Build the per-pixel 3D motion map from rigid motions and deformation.

    ``rigids`` holds :class:`RigidMotion6DoF` (or ``(id, PoseSE3)`` pairs);
    instances without a rigid entry are treated as identity-moving.
    """
    P = check_vector_field(points, "point grid")
    h, w = P.shape[:2]
    if deformation is None:
        deformation = np.zeros_like(P)
    else:
        deformation = check_vector_field(deformation, "deformation")
        if deformation.shape != P.shape:
            raise ContractError("deformation field does not match point grid")
    known = set(instances.ids())
    motion = np.zeros_like(P)
    by_id = {}
    for r in rigids:
        obj_id, pose = (r.id, r.se3()) if isinstance(r, RigidMotion6DoF) else r
        if obj_id not in known:
            raise ContractError(f"rigid motion references unknown instance id {obj_id}")
        by_id[obj_id] = pose
    for inst in instances:
        m = inst.mask
        if m.shape != (h, w):
            raise ContractError(f"mask of instance {inst.id} has wrong shape {m.shape}")
        pose = by_id.get(inst.id, PoseSE3.identity())
        p = P[m]
        motion[m] = transform(pose, p + deformation[m]) - p
    return motion


@dataclass
class StaticFilterResult:
    dynamic: set
    static: set
    skipped: set
    loss_before: dict
    loss_after: dict


def static_filter(target, before, after, instances, alpha=0.85, valid_before=None,
                  valid_after=None, margin=0.0):
    """Keep objects whose mean photometric loss over their mask strictly drops.

    ``before`` is the reconstruction without the candidate motion and
    ``after`` the one with it.  Objects with an empty (or fully invalid)
    mask are listed in ``skipped``.  A positive ``margin`` demands a
    relative drop larger than that fraction (default: any drop).
    """
    if margin < 0:
        raise ContractError("margin must be non-negative")
    err_before = photometric_map(before, target, alpha)
    err_after = photometric_map(after, target, alpha)
    h, w = err_before.shape
    valid = np.ones((h, w), dtype=bool)
    if valid_before is not None:
        valid &= check_mask(valid_before)
    if valid_after is not None:
        valid &= check_mask(valid_after)
    res = StaticFilterResult(set(), set(), set(), {}, {})
    for inst in instances:
        region = inst.mask & valid
        if not region.any():
            res.skipped.add(inst.id)
            continue
        lb = float(err_before[region].mean())
        la = float(err_after[region].mean())
        res.loss_before[inst.id] = lb
        res.loss_after[inst.id] = la
        (res.dynamic if la < lb * (1.0 - margin) else res.static).add(inst.id)
    return res


def motion_to_rgb(motion):
    """Map x, y, z motion to R, G, B with symmetric range ``[-m, m] -> [0, 1]``."""
    M = check_vector_field(motion, "motion map")
    m = np.abs(M).max()
    if m == 0:
        return np.full(M.shape, 0.5)
    return np.clip((M / m + 1.0) * 0.5, 0.0, 1.0)
