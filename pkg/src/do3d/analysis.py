"""Closed-form analysis of the photometric depth bias for moving objects.

Under forward ego-motion (translation ``t3 < 0`` along z, no rotation) a
target pixel at column ``u_t`` and depth ``d`` lands in the source frame at

    u_s(d) = d (u_t - cx) / (d + t3) + cx

while a point that itself moved ``dt3`` along z is actually observed at

    u_s_gt = d_gt (u_t - cx) / (d_gt + t3 + dt3) + cx.

Photometric minimization drives ``u_s(d)`` toward ``u_s_gt``, i.e. toward
``d = t3 / (t3 + dt3) * d_gt``; when ``t3 + dt3 >= 0`` no finite depth
reaches it and the depth diverges.  :func:`loss_depth_sweep` checks this
empirically on rendered pairs.
"""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass

import numpy as np

from .camera import Intrinsics, PoseSE3
from .core import check_mask
from .exceptions import BehindCameraError, DegenerateInputError, DomainError
from .loss import photometric_map
from .warp import inverse_warp, project_correspondence

__all__ = [
    "Case",
    "MotionScenario",
    "SupervisionTarget",
    "DepthLossCurve",
    "u_s_full",
    "u_s_simplified",
    "dus_dd",
    "observed_source_u",
    "supervision_target",
    "loss_depth_sweep",
    "SWEEP_SAMPLES",
    "SWEEP_RANGE",
]

SWEEP_SAMPLES = 200
SWEEP_RANGE = (0.1, 5.0)  # multiples of the true depth


class Case(str, enum.Enum):
    STATIC = "STATIC"
    OPPOSITE = "OPPOSITE"
    SAME_SLOWER = "SAME_SLOWER"
    SAME_FASTER_OR_EQUAL = "SAME_FASTER_OR_EQUAL"


@dataclass(frozen=True)
class MotionScenario:
    t3: float  # ego z-translation, < 0 when moving forward
    delta_t3: float  # object z-motion
    d_gt: float

    def __post_init__(self):
        if not self.d_gt > 0:
            raise DomainError(f"true depth must be positive, got {self.d_gt}")
        if not self.d_gt + self.t3 + self.delta_t3 > 0:
            raise DomainError("observed point must stay in front of the camera: "
                              f"d_gt + t3 + delta_t3 = {self.d_gt + self.t3 + self.delta_t3}")


@dataclass(frozen=True)
class SupervisionTarget:
    case: Case
    depth: float | None  # None when divergent
    divergent: bool

    def describe(self):
        if self.divergent:
            return f"{self.case.value}, divergent (depth -> infinity)"
        return f"{self.case.value}, target {self.depth:.10g}"


def u_s_full(K: Intrinsics, T: PoseSE3, u_t, v_t, d_t):
    """Source coordinates from the expanded projection with a general pose."""
    u_t = np.asarray(u_t, dtype=np.float64)
    v_t = np.asarray(v_t, dtype=np.float64)
    d_t = np.asarray(d_t, dtype=np.float64)
    R, t = T.R, T.t
    ux = (u_t - K.cx) / K.fx
    vy = (v_t - K.cy) / K.fy
    den = R[2, 0] * ux * d_t + R[2, 1] * vy * d_t + R[2, 2] * d_t + t[2]
    if np.any(den <= 0):
        raise BehindCameraError("nonpositive projection denominator")
    u_s = K.fx * (R[0, 0] * ux * d_t + R[0, 1] * vy * d_t + R[0, 2] * d_t + t[0]) / den + K.cx
    v_s = K.fy * (R[1, 0] * ux * d_t + R[1, 1] * vy * d_t + R[1, 2] * d_t + t[1]) / den + K.cy
    if u_s.ndim == 0:
        return float(u_s), float(v_s)
    return u_s, v_s


def u_s_simplified(K: Intrinsics, u_t, d_t, t):
    """Source column under identity rotation; ``t`` is ``(t1, t2, t3)`` or a bare ``t3``."""
    t = np.asarray(t, dtype=np.float64)
    t1, t3 = (0.0, t) if t.ndim == 0 else (t[0], t[2])
    d_t = np.asarray(d_t, dtype=np.float64)
    den = d_t + t3
    if np.any(den <= 0):
        raise DomainError("d_t + t3 must be positive")
    out = (d_t * (np.asarray(u_t, dtype=np.float64) - K.cx) + K.fx * t1) / den + K.cx
    return float(out) if out.ndim == 0 else out


def dus_dd(K: Intrinsics, u_t, d_t, t3):
    """Derivative of :func:`u_s_simplified` (t1 = 0) w.r.t. depth, and its sign."""
    den = np.asarray(d_t, dtype=np.float64) + t3
    if np.any(den == 0):
        raise DomainError("d_t + t3 must be nonzero")
    deriv = (np.asarray(u_t, dtype=np.float64) - K.cx) * t3 / den ** 2
    sign = np.sign(deriv).astype(int)
    if deriv.ndim == 0:
        return float(deriv), int(sign)
    return deriv, sign


def observed_source_u(K: Intrinsics, u_t, scenario: MotionScenario):
    den = scenario.d_gt + scenario.t3 + scenario.delta_t3
    if den <= 0:
        raise DomainError("nonpositive denominator")
    out = scenario.d_gt * (np.asarray(u_t, dtype=np.float64) - K.cx) / den + K.cx
    return float(out) if out.ndim == 0 else out


def supervision_target(scenario: MotionScenario) -> SupervisionTarget:
    t3, dt3, d_gt = scenario.t3, scenario.delta_t3, scenario.d_gt
    if not t3 < 0:
        raise DomainError("only forward ego-motion (t3 < 0) is covered by the analysis")
    if dt3 == 0:
        return SupervisionTarget(Case.STATIC, float(d_gt), False)
    if dt3 >= -t3:
        return SupervisionTarget(Case.SAME_FASTER_OR_EQUAL, None, True)
    case = Case.OPPOSITE if dt3 < 0 else Case.SAME_SLOWER
    return SupervisionTarget(case, float(t3 / (t3 + dt3) * d_gt), False)


@dataclass
class DepthLossCurve:
    depths: np.ndarray
    losses: np.ndarray  # NaN where no region pixel was valid
    d_gt: float

    def __post_init__(self):
        if np.any(np.diff(self.depths) <= 0):
            raise DomainError("sweep depths must be strictly increasing")

    @property
    def argmin_index(self):
        return int(np.nanargmin(self.losses))

    @property
    def argmin(self):
        return float(self.depths[self.argmin_index])

    @property
    def step(self):
        return float(self.depths[1] - self.depths[0])

    def to_csv(self, case_label=""):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["depth", "loss", "is_argmin"])
        k = self.argmin_index
        for i, (d, l) in enumerate(zip(self.depths, self.losses)):
            w.writerow([f"{d:.12g}", f"{l:.12g}", int(i == k)])
        buf.write(f"# argmin={self.argmin:.12g} d_gt={self.d_gt:.12g} case={case_label}\n")
        return buf.getvalue()


def loss_depth_sweep(image_t, image_s, region, K: Intrinsics, T: PoseSE3, d_gt,
                     n=SWEEP_SAMPLES, sweep=SWEEP_RANGE, motion=None, base_depth=None,
                     alpha=0.85):
    """Photometric loss over ``region`` as one constant depth sweeps ``sweep * d_gt``.

    Pixels outside the region keep ``base_depth`` (default: the swept value
    too).  ``motion`` is an optional fixed 3D motion map added before the
    ego transform.
    """
    region = check_mask(region, "region")
    if not region.any():
        raise DegenerateInputError("sweep region is empty")
    if n < 2:
        raise DomainError("sweep needs at least 2 samples")
    depths = np.linspace(sweep[0] * d_gt, sweep[1] * d_gt, n)
    losses = np.full(n, np.nan)
    for i, d in enumerate(depths):
        depth = np.full(region.shape, d) if base_depth is None else np.where(region, d, base_depth)
        corr = project_correspondence(depth, K, T, motion)
        rec, valid = inverse_warp(image_s, corr)
        sel = region & valid
        if sel.any():
            losses[i] = photometric_map(rec, image_t, alpha)[sel].mean()
    if np.all(np.isnan(losses)):
        raise DegenerateInputError("no sweep sample produced a valid pixel")
    return DepthLossCurve(depths, losses, float(d_gt))
