"""Pinhole camera model and rigid transforms."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import BehindCameraError, ContractError, DomainError

__all__ = [
    "EPS_Z",
    "Intrinsics",
    "PoseSE3",
    "EulerPose",
    "rotation_from_euler",
    "pose_from_euler",
    "invert",
    "compose",
    "backproject",
    "project",
    "transform",
    "backproject_grid",
    "project_points",
]

EPS_Z = 1e-6  # behind-camera threshold (meters)


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ContractError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def matrix(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def to_dict(self):
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]))


@dataclass(frozen=True)
class PoseSE3:
    """Rigid transform ``X -> R X + t``."""

    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, t):
        return cls(np.eye(3), np.asarray(t, dtype=np.float64))

    def is_valid(self, tol=1e-10):
        return (np.allclose(self.R.T @ self.R, np.eye(3), atol=tol)
                and abs(np.linalg.det(self.R) - 1.0) <= tol)

    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.R
        m[:3, 3] = self.t
        return m

    def __repr__(self):
        return f"PoseSE3(R={self.R.tolist()}, t={self.t.tolist()})"


@dataclass
class EulerPose:
    """6-DoF pose: angles in radians, translation in meters."""

    pitch: float = 0.0
    roll: float = 0.0
    yaw: float = 0.0
    translation: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        self.translation = tuple(float(x) for x in self.translation)
        if len(self.translation) != 3:
            raise ContractError("translation must have 3 components")

    def as_vector(self):
        """``[pitch, roll, yaw, tx, ty, tz]``"""
        return np.array([self.pitch, self.roll, self.yaw, *self.translation], dtype=np.float64)

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=np.float64).reshape(6)
        return cls(float(v[0]), float(v[1]), float(v[2]), tuple(float(x) for x in v[3:]))

    def to_dict(self):
        return {"pitch": self.pitch, "roll": self.roll, "yaw": self.yaw,
                "translation": list(self.translation)}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d.get("pitch", 0.0)), float(d.get("roll", 0.0)),
                   float(d.get("yaw", 0.0)), tuple(d.get("translation", (0.0, 0.0, 0.0))))


def rotation_from_euler(pitch, roll, yaw):
    """``Rz(yaw) @ Ry(pitch) @ Rx(roll)``."""
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    cy, sy = np.cos(yaw), np.sin(yaw)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return rz @ ry @ rx


def pose_from_euler(e: EulerPose) -> PoseSE3:
    return PoseSE3(rotation_from_euler(e.pitch, e.roll, e.yaw), np.array(e.translation))


def invert(p: PoseSE3) -> PoseSE3:
    rt = p.R.T
    return PoseSE3(rt, -rt @ p.t)


def compose(a: PoseSE3, b: PoseSE3) -> PoseSE3:
    """Pose applying ``b`` first, then ``a``."""
    return PoseSE3(a.R @ b.R, a.R @ b.t + a.t)


def transform(p: PoseSE3, X):
    """Apply ``R X + t`` to a point or an array of points (last axis = 3)."""
    X = np.asarray(X, dtype=np.float64)
    return X @ p.R.T + p.t


def backproject(K: Intrinsics, u, v, d):
    if not d > 0:
        raise DomainError(f"depth must be positive, got {d}")
    ux = (u - K.cx) / K.fx
    vy = (v - K.cy) / K.fy
    return np.array([ux * d, vy * d, d], dtype=np.float64)


def project(K: Intrinsics, X):
    """Return ``(u, v, depth)``; raises if ``X_z <= EPS_Z``."""
    X = np.asarray(X, dtype=np.float64)
    z = X[2]
    if not z > EPS_Z:
        raise BehindCameraError(f"point depth {z} is not in front of the camera")
    return K.fx * X[0] / z + K.cx, K.fy * X[1] / z + K.cy, z


def backproject_grid(K: Intrinsics, depth):
    """Backproject a whole depth map to an ``(H, W, 3)`` point grid."""
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(depth <= 0):
        raise DomainError("depth must be positive everywhere")
    h, w = depth.shape
    v, u = np.mgrid[0:h, 0:w]
    ux = (u - K.cx) / K.fx
    vy = (v - K.cy) / K.fy
    return np.stack([ux * depth, vy * depth, depth], axis=-1)


def project_points(K: Intrinsics, X):
    """Vectorized projection.

    Returns ``(u, v, z, ok)``; where ``ok`` is False the coordinates are NaN.
    """
    X = np.asarray(X, dtype=np.float64)
    z = X[..., 2]
    ok = z > EPS_Z
    zs = np.where(ok, z, 1.0)
    u = np.where(ok, K.fx * X[..., 0] / zs + K.cx, np.nan)
    v = np.where(ok, K.fy * X[..., 1] / zs + K.cy, np.nan)
    return u, v, z, ok
