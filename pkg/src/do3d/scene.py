"""Synthetic dynamic scenes rendered by analytic ray casting.

A scene is a textured background plane plus rectangles/boxes.  Every
object is a set of planar rectangular faces; the target frame is ray-cast
directly, and the source frame is ray-cast after applying the object
motion (and, for deforming objects, solved per pixel by Newton iteration
on the deformed surface).  All ground truth (depth, flow, scene flow,
masks, occlusion) comes from the same closed-form geometry.

Textures are value noise: a random RGB lattice, bilinearly interpolated,
with the lattice spacing set to about 8 pixels at the surface's reference
depth.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .camera import (EPS_Z, EulerPose, Intrinsics, PoseSE3, backproject_grid, compose,
                     pose_from_euler,
                     project_points, rotation_from_euler, transform)
from .core import bilinear_sample, pixel_grid
from .exceptions import SpecError
from .fileio import load_pfm, load_ppm, save_pfm, save_ppm
from .motion import Instance, InstanceSet, RigidMotion6DoF, compose_object_motion
from .warp import project_correspondence

__all__ = [
    "OCC_REL_TOL",
    "TEXTURE_CELL_PX",
    "SCENE_SCHEMA",
    "SceneSpec",
    "ObjectSpec",
    "RenderedPair",
    "render_pair",
    "gt_optical_flow",
    "gt_occlusion_mask",
    "save_pair",
    "load_pair",
    "bundled_specs",
    "presets",
]

OCC_REL_TOL = 1e-3
TEXTURE_CELL_PX = 8.0
_LATTICE = 256
_NEWTON_ITERS = 40

_POSE_SCHEMA = {
    "type": "object",
    "properties": {
        "pitch": {"type": "number"},
        "roll": {"type": "number"},
        "yaw": {"type": "number"},
        "translation": {"type": "array", "items": {"type": "number"}, "minItems": 3,
                        "maxItems": 3},
    },
    "additionalProperties": False,
}

SCENE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "SceneSpec",
    "type": "object",
    "required": ["width", "height", "intrinsics", "background"],
    "properties": {
        "width": {"type": "integer", "minimum": 4},
        "height": {"type": "integer", "minimum": 4},
        "seed": {"type": "integer", "minimum": 0},
        "intrinsics": {
            "type": "object",
            "required": ["fx", "fy", "cx", "cy"],
            "properties": {
                "fx": {"type": "number", "exclusiveMinimum": 0},
                "fy": {"type": "number", "exclusiveMinimum": 0},
                "cx": {"type": "number"},
                "cy": {"type": "number"},
            },
            "additionalProperties": False,
        },
        "ego": _POSE_SCHEMA,
        "background": {
            "type": "object",
            "required": ["depth"],
            "properties": {
                "depth": {"type": "number", "exclusiveMinimum": 0},
                "normal": {"type": "array", "items": {"type": "number"}, "minItems": 3,
                           "maxItems": 3},
                "texture_seed": {"type": "integer", "minimum": 0},
                "texture_cell": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "objects": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "shape", "size", "pose"],
                "properties": {
                    "id": {"type": "integer", "minimum": 1},
                    "shape": {"enum": ["rectangle", "box"]},
                    "size": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                             "minItems": 2, "maxItems": 3},
                    "pose": _POSE_SCHEMA,
                    "motion": _POSE_SCHEMA,
                    "deformation": {
                        "type": "object",
                        "required": ["amplitude", "frequency"],
                        "properties": {
                            "amplitude": {"type": "number", "minimum": 0},
                            "frequency": {"type": "number", "minimum": 0},
                        },
                        "additionalProperties": False,
                    },
                    "texture_seed": {"type": "integer", "minimum": 0},
                    "texture_cell": {"type": "number", "exclusiveMinimum": 0},
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}


@dataclass
class ObjectSpec:
    id: int
    shape: str
    size: tuple
    pose: EulerPose
    motion: EulerPose = field(default_factory=EulerPose)
    deformation: dict = None
    texture_seed: int = None
    texture_cell: float = None

    def to_dict(self):
        d = {"id": self.id, "shape": self.shape, "size": list(self.size),
             "pose": self.pose.to_dict(), "motion": self.motion.to_dict()}
        if self.deformation:
            d["deformation"] = dict(self.deformation)
        if self.texture_seed is not None:
            d["texture_seed"] = self.texture_seed
        if self.texture_cell is not None:
            d["texture_cell"] = self.texture_cell
        return d


@dataclass
class SceneSpec:
    width: int
    height: int
    K: Intrinsics
    ego: EulerPose = field(default_factory=EulerPose)
    background: dict = field(default_factory=lambda: {"depth": 20.0})
    objects: list = field(default_factory=list)
    seed: int = 0

    @classmethod
    def from_dict(cls, d):
        validator = jsonschema.Draft202012Validator(SCENE_SCHEMA)
        errors = sorted(validator.iter_errors(d), key=lambda e: list(e.absolute_path))
        if errors:
            err = errors[0]
            path = "/".join(str(p) for p in err.absolute_path) or "<root>"
            raise SpecError(err.message, path)
        objects = []
        for i, o in enumerate(d.get("objects", [])):
            size = tuple(float(x) for x in o["size"])
            if o["shape"] == "box" and len(size) != 3:
                raise SpecError("box needs 3 size components", f"objects/{i}/size")
            if o["shape"] == "rectangle" and len(size) != 2:
                raise SpecError("rectangle needs 2 size components", f"objects/{i}/size")
            objects.append(ObjectSpec(
                id=o["id"], shape=o["shape"], size=size,
                pose=EulerPose.from_dict(o["pose"]),
                motion=EulerPose.from_dict(o.get("motion", {})),
                deformation=o.get("deformation"),
                texture_seed=o.get("texture_seed"),
                texture_cell=o.get("texture_cell"),
            ))
        ids = [o.id for o in objects]
        if len(set(ids)) != len(ids):
            raise SpecError(f"object ids must be unique, got {ids}", "objects")
        spec = cls(width=d["width"], height=d["height"], K=Intrinsics.from_dict(d["intrinsics"]),
                   ego=EulerPose.from_dict(d.get("ego", {})),
                   background=dict(d["background"]), objects=objects, seed=d.get("seed", 0))
        spec.check()
        return spec

    def to_dict(self):
        return {
            "width": self.width, "height": self.height, "seed": self.seed,
            "intrinsics": self.K.to_dict(), "ego": self.ego.to_dict(),
            "background": dict(self.background),
            "objects": [o.to_dict() for o in self.objects],
        }

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"invalid JSON: {exc}") from None
        return cls.from_dict(d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self):
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def check(self):
        """Raise :class:`SpecError` unless every surface is in front of the camera."""
        _build_surfaces(self)


# --------------------------------------------------------------------------- geometry

@dataclass
class _Patch:
    obj_id: int  # 0 = background
    origin: np.ndarray  # object-local
    ea: np.ndarray
    eb: np.ndarray
    ha: float  # half extent along ea (inf for background)
    hb: float
    lattice: np.ndarray
    cell: float
    R_obj: np.ndarray  # object-local -> target camera
    c_obj: np.ndarray

    def in_camera(self, pose=None):
        """Origin and axes in target (or posed) camera coordinates."""
        O = self.R_obj @ self.origin + self.c_obj
        ea = self.R_obj @ self.ea
        eb = self.R_obj @ self.eb
        if pose is not None:
            O = pose.R @ O + pose.t
            ea = pose.R @ ea
            eb = pose.R @ eb
        return O, ea, eb


def _lattice(seed):
    rng = np.random.default_rng(seed)
    return rng.random((_LATTICE, _LATTICE, 3))


def _texture(lattice, cell, a, b):
    x = a / cell + _LATTICE / 2
    y = b / cell + _LATTICE / 2
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    i0 = x0.astype(np.int64) % _LATTICE
    j0 = y0.astype(np.int64) % _LATTICE
    i1 = (i0 + 1) % _LATTICE
    j1 = (j0 + 1) % _LATTICE
    top = lattice[j0, i0] * (1 - fx) + lattice[j0, i1] * fx
    bot = lattice[j1, i0] * (1 - fx) + lattice[j1, i1] * fx
    return top * (1 - fy) + bot * fy


def _plane_basis(n):
    n = np.asarray(n, dtype=np.float64)
    n = n / np.linalg.norm(n)
    helper = np.array([0.0, 1.0, 0.0]) if abs(n[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    ea = np.cross(helper, n)
    ea /= np.linalg.norm(ea)
    eb = np.cross(n, ea)
    return ea, eb


def _seed_for(spec, base, k):
    return int(np.random.SeedSequence([spec.seed, base, k]).generate_state(1)[0])


@dataclass
class _Object:
    spec: ObjectSpec
    patches: list
    motion: PoseSE3
    R_obj: np.ndarray
    c_obj: np.ndarray


def _build_surfaces(spec: SceneSpec):
    K = spec.K
    bg = spec.background
    normal = bg.get("normal", [0.0, 0.0, 1.0])
    if np.linalg.norm(normal) == 0:
        raise SpecError("normal must be nonzero", "background/normal")
    ea, eb = _plane_basis(normal)
    center = np.array([0.0, 0.0, float(bg["depth"])])
    ego = pose_from_euler(spec.ego)
    u, v = pixel_grid(spec.height, spec.width)
    rays = np.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones_like(u)], axis=-1)
    if "texture_cell" in bg:
        cell = bg["texture_cell"]
    else:
        # lattice spacing ~TEXTURE_CELL_PX pixels at the plane's median visible depth
        n = np.cross(ea, eb)
        with np.errstate(invalid="ignore", divide="ignore"):
            lam = (center @ n) / (rays @ n)
        lam = lam[np.isfinite(lam) & (lam > 0)]
        ref = float(np.median(lam)) if lam.size else float(bg["depth"])
        cell = TEXTURE_CELL_PX * ref / K.fx
    bseed = bg.get("texture_seed", _seed_for(spec, 0, 0))
    background = _Patch(0, center, ea, eb, np.inf, np.inf, _lattice(bseed), cell,
                        np.eye(3), np.zeros(3))
    for when, pose in (("target", None), ("source", ego)):
        O, a1, a2 = background.in_camera(pose)
        n = np.cross(a1, a2)
        lam = (O @ n) / (rays @ n)
        if not np.all(np.isfinite(lam)) or lam.min() <= EPS_Z:
            raise SpecError(f"background plane not in front of the camera in the {when} frame",
                            "background")
    objects = []
    for i, o in enumerate(spec.objects):
        R_obj = rotation_from_euler(o.pose.pitch, o.pose.roll, o.pose.yaw)
        c_obj = np.array(o.pose.translation)
        tseed = o.texture_seed if o.texture_seed is not None else _seed_for(spec, o.id, 0)
        ref_depth = float(c_obj[2])
        if ref_depth <= EPS_Z:
            raise SpecError("object center must be in front of the camera", f"objects/{i}/pose")
        ocell = o.texture_cell or TEXTURE_CELL_PX * ref_depth / K.fx
        faces = []
        if o.shape == "rectangle":
            sx, sy = o.size
            faces.append((np.zeros(3), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), sx / 2,
                          sy / 2))
        else:
            sx, sy, sz = o.size
            hx, hy, hz = sx / 2, sy / 2, sz / 2
            ex, ey, ez = np.eye(3)
            faces += [
                (-hz * ez, ex, ey, hx, hy), (hz * ez, ex, ey, hx, hy),
                (-hx * ex, ey, ez, hy, hz), (hx * ex, ey, ez, hy, hz),
                (-hy * ey, ex, ez, hx, hz), (hy * ey, ex, ez, hx, hz),
            ]
        patches = []
        for k, (org, fa, fb, ha, hb) in enumerate(faces):
            lat = _lattice(tseed + k)
            patches.append(_Patch(o.id, org, fa, fb, ha, hb, lat, ocell, R_obj, c_obj))
        motion = pose_from_euler(o.motion)
        obj = _Object(o, patches, motion, R_obj, c_obj)
        amp = (o.deformation or {}).get("amplitude", 0.0)
        for p in patches:
            corners = [p.origin + sa * p.ha * p.ea + sb * p.hb * p.eb
                       for sa in (-1, 1) for sb in (-1, 1)]
            for c in corners:
                Xt = R_obj @ c + c_obj
                Xs = transform(ego, transform(motion, Xt))
                if Xt[2] <= EPS_Z + amp or Xs[2] <= EPS_Z + 2 * amp:
                    raise SpecError("object surface not in front of the camera at both times",
                                    f"objects/{i}")
        objects.append(obj)
    return background, objects, ego, rays


def _deformation(o: ObjectSpec, x_local):
    """Deformation offset (camera-frame meters) and its Jacobian w.r.t. object-local coords."""
    d = o.deformation or {}
    A = d.get("amplitude", 0.0)
    f = d.get("frequency", 0.0)
    shape = x_local.shape[:-1]
    if A == 0.0:
        return np.zeros(shape + (3,)), np.zeros(shape + (3, 3))
    w = 2 * np.pi * f
    sx = np.sin(w * x_local[..., 0])
    cx = np.cos(w * x_local[..., 0])
    sy = np.sin(w * x_local[..., 1])
    cy = np.cos(w * x_local[..., 1])
    delta = A * np.stack([sx, sy, sx * sy], axis=-1)
    J = np.zeros(shape + (3, 3))
    J[..., 0, 0] = A * w * cx
    J[..., 1, 1] = A * w * cy
    J[..., 2, 0] = A * w * cx * sy
    J[..., 2, 1] = A * w * sx * cy
    return delta, J


def _intersect(rays, O, ea, eb):
    n = np.cross(ea, eb)
    denom = rays @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = (O @ n) / denom
    X = rays * lam[..., None]
    a = (X - O) @ ea
    b = (X - O) @ eb
    return lam, a, b


def _raycast_target(background, objects, rays):
    h, w = rays.shape[:2]
    depth = np.full((h, w), np.inf)
    ids = np.zeros((h, w), dtype=np.int64)
    color = np.zeros((h, w, 3))
    face = np.full((h, w), -1, dtype=np.int64)
    xlocal = np.zeros((h, w, 3))
    candidates = [(background, -1, None)]
    for obj in objects:
        for k, p in enumerate(obj.patches):
            candidates.append((p, k, obj))
    for p, k, obj in candidates:
        O, ea, eb = p.in_camera()
        lam, a, b = _intersect(rays, O, ea, eb)
        hit = np.isfinite(lam) & (lam > EPS_Z) & (np.abs(a) <= p.ha) & (np.abs(b) <= p.hb)
        closer = hit & (lam < depth)
        if not closer.any():
            continue
        depth[closer] = lam[closer]
        ids[closer] = p.obj_id
        face[closer] = k
        color[closer] = _texture(p.lattice, p.cell, a[closer], b[closer])
        if obj is not None:
            xlocal[closer] = (p.origin + a[closer, None] * p.ea + b[closer, None] * p.eb)
    return depth, ids, color, xlocal


def _newton_deformed(p, obj, ego, K, uv, a0, b0):
    """Solve projection(surface(a, b)) = uv for a deformed patch."""
    G = compose(ego, obj.motion)
    Rg = G.R
    a = a0.copy()
    b = b0.copy()
    ok = np.isfinite(a) & np.isfinite(b)
    a[~ok] = 0.0
    b[~ok] = 0.0
    for _ in range(_NEWTON_ITERS):
        xl = p.origin + a[:, None] * p.ea + b[:, None] * p.eb
        delta, J = _deformation(obj.spec, xl)
        Xt = xl @ obj.R_obj.T + obj.c_obj
        Xs = (Xt + delta) @ Rg.T + G.t
        z = Xs[:, 2]
        zs = np.where(z > EPS_Z, z, 1.0)
        pu = K.fx * Xs[:, 0] / zs + K.cx
        pv = K.fy * Xs[:, 1] / zs + K.cy
        ru = pu - uv[:, 0]
        rv = pv - uv[:, 1]
        dXa = (obj.R_obj @ p.ea + J @ p.ea) @ Rg.T
        dXb = (obj.R_obj @ p.eb + J @ p.eb) @ Rg.T
        if dXa.ndim == 1:
            dXa = np.broadcast_to(dXa, Xs.shape)
            dXb = np.broadcast_to(dXb, Xs.shape)

        def dproj(dX):
            du = K.fx * (dX[:, 0] * zs - Xs[:, 0] * dX[:, 2]) / zs ** 2
            dv = K.fy * (dX[:, 1] * zs - Xs[:, 1] * dX[:, 2]) / zs ** 2
            return du, dv

        ua, va = dproj(dXa)
        ub, vb = dproj(dXb)
        det = ua * vb - ub * va
        det = np.where(np.abs(det) > 1e-300, det, 1e-300)
        da = (vb * ru - ub * rv) / det
        db = (-va * ru + ua * rv) / det
        step = np.maximum(np.abs(da), np.abs(db))
        limit = 0.5 * max(p.ha, p.hb)
        scale = np.where(step > limit, limit / np.maximum(step, 1e-300), 1.0)
        a = a - da * scale
        b = b - db * scale
    xl = p.origin + a[:, None] * p.ea + b[:, None] * p.eb
    delta, _ = _deformation(obj.spec, xl)
    Xs = transform(G, xl @ obj.R_obj.T + obj.c_obj + delta)
    u, v, z, front = project_points(K, Xs)
    resid = np.hypot(u - uv[:, 0], v - uv[:, 1])
    conv = ok & front & (resid < 1e-6)
    return a, b, z, conv


def _raycast_source(background, objects, ego, rays, K):
    h, w = rays.shape[:2]
    depth = np.full((h, w), np.inf)
    ids = np.zeros((h, w), dtype=np.int64)
    color = np.zeros((h, w, 3))
    u, v = pixel_grid(h, w)
    uv = np.stack([u, v], axis=-1).reshape(-1, 2)
    flat_rays = rays.reshape(-1, 3)
    candidates = [(background, ego, None)]
    for obj in objects:
        G = compose(ego, obj.motion)
        for p in obj.patches:
            candidates.append((p, G, obj))
    for p, G, obj in candidates:
        O, ea, eb = p.in_camera(G)
        lam, a, b = _intersect(flat_rays, O, ea, eb)
        if obj is not None and (obj.spec.deformation or {}).get("amplitude", 0.0) > 0:
            a, b, lam, conv = _newton_deformed(p, obj, ego, K, uv, a, b)
        else:
            conv = np.isfinite(lam)
        hit = conv & (lam > EPS_Z) & (np.abs(a) <= p.ha) & (np.abs(b) <= p.hb)
        closer = hit & (lam < depth.reshape(-1))
        if not closer.any():
            continue
        d = depth.reshape(-1)
        d[closer] = lam[closer]
        ids.reshape(-1)[closer] = p.obj_id
        color.reshape(-1, 3)[closer] = _texture(p.lattice, p.cell, a[closer], b[closer])
    return depth, ids, color


# --------------------------------------------------------------------------- rendering

@dataclass
class RenderedPair:
    """A target/source frame pair with full ground truth.

    ``flow`` is ``(H, W, 2)`` in pixels; ``scene_flow`` is the 3D
    displacement from target-camera to source-camera coordinates;
    ``noc`` marks non-occluded pixels, ``valid`` pixels whose
    correspondence projects in front of the source camera and inside it.
    """

    K: Intrinsics
    image_t: np.ndarray
    image_s: np.ndarray
    instances: InstanceSet
    instances_s: InstanceSet = None
    depth_t: np.ndarray = None
    depth_s: np.ndarray = None
    ego: EulerPose = None
    rigids: list = None
    deformation: np.ndarray = None
    motion: np.ndarray = None
    flow: np.ndarray = None
    scene_flow: np.ndarray = None
    noc: np.ndarray = None
    valid: np.ndarray = None
    spec: SceneSpec = None

    @property
    def shape(self):
        return self.image_t.shape[:2]

    def has_ground_truth(self):
        return self.depth_t is not None and self.ego is not None

    def without_ground_truth(self):
        """Images, intrinsics and instance masks only."""
        return RenderedPair(K=self.K, image_t=self.image_t, image_s=self.image_s,
                            instances=self.instances, instances_s=self.instances_s)


def _instance_set(ids, object_ids):
    return InstanceSet(Instance(i, ids == i) for i in object_ids)


def render_pair(spec: SceneSpec) -> RenderedPair:
    if isinstance(spec, dict):
        spec = SceneSpec.from_dict(spec)
    background, objects, ego, rays = _build_surfaces(spec)
    K = spec.K
    depth_t, ids_t, image_t, xlocal = _raycast_target(background, objects, rays)
    depth_s, ids_s, image_s, = _raycast_source(background, objects, ego, rays, K)
    if not (np.all(np.isfinite(depth_s)) and np.all(np.isfinite(depth_t))):
        raise SpecError("some rays hit no surface", "background")

    object_ids = [o.spec.id for o in objects]
    instances = _instance_set(ids_t, object_ids)
    instances_s = _instance_set(ids_s, object_ids)
    deformation = np.zeros(depth_t.shape + (3,))
    for obj in objects:
        m = ids_t == obj.spec.id
        if m.any():
            deformation[m] = _deformation(obj.spec, xlocal[m])[0]
    rigids = [RigidMotion6DoF(o.spec.id, copy.deepcopy(o.spec.motion)) for o in objects]

    P = backproject_grid(K, depth_t)
    motion = compose_object_motion(P, instances, rigids, deformation)
    pair = RenderedPair(
        K=K, image_t=np.clip(image_t, 0.0, 1.0), image_s=np.clip(image_s, 0.0, 1.0),
        instances=instances, instances_s=instances_s, depth_t=depth_t, depth_s=depth_s,
        ego=copy.deepcopy(spec.ego), rigids=rigids, deformation=deformation, motion=motion,
        spec=spec,
    )
    corr = project_correspondence(depth_t, K, ego, motion)
    Xs = transform(ego, P + motion)
    pair.valid = corr.valid
    pair.flow = np.where(corr.valid[..., None], corr.flow(), 0.0)
    pair.scene_flow = np.where(corr.valid[..., None], Xs - P, 0.0)
    pair.noc = gt_occlusion_mask(pair, corr)
    return pair


def gt_optical_flow(pair: RenderedPair):
    """Flow from ground-truth depth, ego pose and object motion (zero where invalid)."""
    corr = project_correspondence(pair.depth_t, pair.K, pose_from_euler(pair.ego), pair.motion)
    return np.where(corr.valid[..., None], corr.flow(), 0.0)


def gt_occlusion_mask(pair: RenderedPair, corr=None):
    """1 where the true correspondence is in-bounds and visible in the source depth buffer."""
    if corr is None:
        corr = project_correspondence(pair.depth_t, pair.K, pose_from_euler(pair.ego),
                                      pair.motion)
    sampled, inb = bilinear_sample(pair.depth_s, corr.u, corr.v)
    with np.errstate(invalid="ignore"):
        close = np.abs(sampled - corr.d) <= OCC_REL_TOL * corr.d
    return corr.valid & inb & close


# --------------------------------------------------------------------------- export

def _id_map(instances, shape):
    out = np.zeros(shape)
    for inst in instances:
        out[inst.mask] = inst.id
    return out


def _instances_from_map(id_map, ids):
    return InstanceSet(Instance(int(i), id_map == i) for i in ids)


def save_pair(pair: RenderedPair, out_dir):
    """Write a rendered pair to ``out_dir``; returns the manifest dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    shape = pair.shape
    ids = [inst.id for inst in pair.instances]
    files = {}

    def put(name, writer, data):
        writer(out / name, data)
        files[name] = hashlib.sha256((out / name).read_bytes()).hexdigest()

    put("I_t.ppm", save_ppm, pair.image_t)
    put("I_s.ppm", save_ppm, pair.image_s)
    put("instances_t.pfm", save_pfm, _id_map(pair.instances, shape))
    put("instances_s.pfm", save_pfm, _id_map(pair.instances_s, shape))
    camera = {"intrinsics": pair.K.to_dict(), "width": shape[1], "height": shape[0],
              "object_ids": ids}
    (out / "camera.json").write_text(json.dumps(camera, indent=2, sort_keys=True))
    files["camera.json"] = hashlib.sha256((out / "camera.json").read_bytes()).hexdigest()
    if pair.has_ground_truth():
        put("depth_t.pfm", save_pfm, pair.depth_t)
        put("depth_s.pfm", save_pfm, pair.depth_s)
        put("flow.pfm", save_pfm,
            np.concatenate([pair.flow, pair.valid[..., None].astype(float)], axis=-1))
        put("scene_flow.pfm", save_pfm, pair.scene_flow)
        put("deformation.pfm", save_pfm, pair.deformation)
        put("mask_noc.pfm", save_pfm, pair.noc.astype(float))
        put("mask_valid.pfm", save_pfm, pair.valid.astype(float))
        gt = {"ego": pair.ego.to_dict(),
              "rigids": [{"id": r.id, **r.pose.to_dict()} for r in pair.rigids]}
        (out / "gt_motion.json").write_text(json.dumps(gt, indent=2, sort_keys=True))
        files["gt_motion.json"] = hashlib.sha256(
            (out / "gt_motion.json").read_bytes()).hexdigest()
    manifest = {"files": files}
    if pair.spec is not None:
        (out / "spec.json").write_text(pair.spec.to_json())
        manifest["spec_sha256"] = pair.spec.digest()
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


def load_pair(in_dir, ground_truth=True) -> RenderedPair:
    """Load a pair directory; ground truth is read only when present and requested."""
    d = Path(in_dir)
    camera = json.loads((d / "camera.json").read_text())
    K = Intrinsics.from_dict(camera["intrinsics"])
    ids = camera["object_ids"]
    pair = RenderedPair(
        K=K, image_t=load_ppm(d / "I_t.ppm"), image_s=load_ppm(d / "I_s.ppm"),
        instances=_instances_from_map(load_pfm(d / "instances_t.pfm"), ids),
        instances_s=_instances_from_map(load_pfm(d / "instances_s.pfm"), ids),
    )
    if ground_truth and (d / "gt_motion.json").exists():
        gt = json.loads((d / "gt_motion.json").read_text())
        pair.depth_t = load_pfm(d / "depth_t.pfm")
        pair.depth_s = load_pfm(d / "depth_s.pfm")
        flow = load_pfm(d / "flow.pfm")
        pair.flow = flow[..., :2]
        pair.valid = flow[..., 2] > 0.5
        pair.scene_flow = load_pfm(d / "scene_flow.pfm")
        pair.deformation = load_pfm(d / "deformation.pfm")
        pair.noc = load_pfm(d / "mask_noc.pfm") > 0.5
        pair.ego = EulerPose.from_dict(gt["ego"])
        pair.rigids = [RigidMotion6DoF(r["id"], EulerPose.from_dict(r)) for r in gt["rigids"]]

        pair.motion = compose_object_motion(backproject_grid(K, pair.depth_t), pair.instances,
                                            pair.rigids, pair.deformation)
        if (d / "spec.json").exists():
            pair.spec = SceneSpec.from_json((d / "spec.json").read_text())
    return pair


# --------------------------------------------------------------------------- presets

def _base(width=128, height=96, fx=120.0, seed=0):
    return {
        "width": width, "height": height, "seed": seed,
        "intrinsics": {"fx": fx, "fy": fx, "cx": (width - 1) / 2, "cy": (height - 1) / 2},
        "ego": {"translation": [0.0, 0.0, 0.0]},
        "background": {"depth": 20.0},
        "objects": [],
    }


class presets:
    """Scene spec builders (plain dicts, JSON-ready) used by tests and the CLI."""

    @staticmethod
    def static_plane(depth=20.0, t=(0.0, 0.0, -1.0), seed=0, **kw):
        d = _base(seed=seed, **kw)
        d["background"] = {"depth": depth}
        d["ego"] = {"translation": list(t)}
        return d

    @staticmethod
    def translating_texture(t3=-1.0, dt3=0.5, d_gt=10.0, seed=0, **kw):
        """Large fronto-parallel textured rectangle at ``d_gt`` moving along z."""
        d = _base(seed=seed, **kw)
        d["background"] = {"depth": 4 * d_gt}
        d["ego"] = {"translation": [0.0, 0.0, t3]}
        K = d["intrinsics"]
        width_m = 0.8 * d["width"] * d_gt / K["fx"]
        height_m = 0.8 * d["height"] * d_gt / K["fy"]
        d["objects"] = [{
            "id": 1, "shape": "rectangle", "size": [width_m, height_m],
            "pose": {"translation": [0.0, 0.0, d_gt]},
            "motion": {"translation": [0.0, 0.0, dt3]},
        }]
        return d

    @staticmethod
    def moving_box(translation=(0.3, 0.0, 0.8), t3=-1.0, depth=8.0, bg_depth=20.0,
                   center_x=-1.5, size=(2.0, 1.6, 1.6), seed=0, **kw):
        d = _base(seed=seed, **kw)
        d["background"] = {"depth": bg_depth}
        d["ego"] = {"translation": [0.0, 0.0, t3]}
        d["objects"] = [{
            "id": 1, "shape": "box", "size": list(size),
            "pose": {"translation": [center_x, 0.0, depth + size[2] / 2]},
            "motion": {"translation": list(translation)},
        }]
        return d

    @staticmethod
    def co_moving_box(t3=-1.0, depth=8.0, seed=0, **kw):
        return presets.moving_box(translation=(0.0, 0.0, -t3), t3=t3, depth=depth, seed=seed,
                                  **kw)

    @staticmethod
    def static_and_moving(seed=0, **kw):
        d = _base(seed=seed, **kw)
        d["ego"] = {"translation": [0.0, 0.0, -1.0]}
        d["objects"] = [
            {"id": 1, "shape": "box", "size": [2.0, 1.6, 1.6],
             "pose": {"translation": [-2.0, 0.0, 9.0]}},
            {"id": 2, "shape": "box", "size": [2.0, 1.6, 1.6],
             "pose": {"translation": [2.2, 0.3, 9.0]},
             "motion": {"translation": [-0.4, 0.0, 0.6]}},
        ]
        return d

    @staticmethod
    def deforming_object(amplitude=0.1, frequency=0.5, seed=0, **kw):
        d = _base(seed=seed, **kw)
        d["ego"] = {"translation": [0.0, 0.0, -1.0]}
        d["objects"] = [{
            "id": 1, "shape": "rectangle", "size": [3.0, 2.4],
            "pose": {"translation": [-0.5, 0.0, 8.0]},
            "motion": {"translation": [0.2, 0.0, 0.3]},
            "deformation": {"amplitude": amplitude, "frequency": frequency},
        }]
        return d

    @staticmethod
    def occluding_boxes(seed=0, **kw):
        """A near box sliding sideways in front of a far box."""
        d = _base(seed=seed, **kw)
        d["ego"] = {"translation": [0.1, 0.0, -0.5]}
        d["objects"] = [
            {"id": 1, "shape": "box", "size": [2.0, 2.0, 1.0],
             "pose": {"translation": [0.0, 0.0, 12.0]}},
            {"id": 2, "shape": "box", "size": [1.2, 1.2, 0.8],
             "pose": {"translation": [-0.8, 0.2, 7.0]},
             "motion": {"translation": [0.5, 0.0, 0.0]}},
        ]
        return d

    @staticmethod
    def tilted_ground(seed=0, **kw):
        d = _base(seed=seed, **kw)
        d["background"] = {"depth": 15.0, "normal": [0.0, 0.03, 1.0]}
        d["ego"] = {"pitch": 0.0, "yaw": 0.01, "translation": [0.05, 0.0, -0.8]}
        d["objects"] = [{
            "id": 1, "shape": "box", "size": [1.5, 1.2, 2.0],
            "pose": {"yaw": 0.2, "translation": [1.5, 0.5, 9.0]},
            "motion": {"yaw": 0.02, "translation": [-0.2, 0.0, 0.5]},
        }]
        return d


def bundled_specs():
    """Example specs shipped with the package, by name."""
    base = Path(__file__).parent / "data" / "scenes"
    return {p.stem: json.loads(p.read_text()) for p in sorted(base.glob("*.json"))}
