"""Direct staged fitting of depth, ego-motion and object motion.

The network outputs of the learned pipeline are replaced by free parameter
blocks:

* ``log_depth``   -- per-pixel log depth (meters), clamped to [0.1, 100] m
* ``ego``         -- 6-DoF ego pose ``[pitch, roll, yaw, tx, ty, tz]``
* ``rigid``       -- one 6-DoF pose per object instance
* ``deformation`` -- per-pixel 3D offsets, used inside dynamic object masks

Losses and warps are re-expressed in torch (float64) so gradients come
from autograd; the numpy implementation in :mod:`do3d.warp` /
:mod:`do3d.loss` stays the reference for values.
"""
from __future__ import annotations

import copy
import csv
import dataclasses
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .camera import EPS_Z, EulerPose, pose_from_euler
from .core import BBox
from .exceptions import ContractError, DegenerateInputError, DivergenceError
from .fileio import load_pfm, save_pfm
from .loss import C1, C2, LossWeights
from .motion import InstanceSet, RigidMotion6DoF, enlarge_bbox, static_filter
from .warp import BORDER_TOL, inverse_warp, project_correspondence

__all__ = [
    "BLOCKS",
    "DEPTH_RANGE",
    "FitState",
    "StageConfig",
    "StageSchedule",
    "default_schedule",
    "loss_and_gradients",
    "gradient_check",
    "fit_staged",
    "reconstruct",
    "history_to_csv",
    "set_threads",
]

log = logging.getLogger(__name__)

BLOCKS = ("log_depth", "ego", "rigid", "deformation")
DEPTH_RANGE = (0.1, 100.0)
DTYPE = torch.float64


def set_threads(n=None):
    """Cap torch worker threads; ``n`` defaults to ``$DO3D_THREADS`` (0 = auto)."""
    if n is None:
        n = int(os.environ.get("DO3D_THREADS", "0") or 0)
    if n > 0:
        torch.set_num_threads(n)


# --------------------------------------------------------------------------- state

@dataclass
class FitState:
    log_depth: np.ndarray
    ego: EulerPose = field(default_factory=EulerPose)
    rigids: dict = field(default_factory=dict)  # id -> EulerPose
    deformation: np.ndarray = None
    frozen: set = field(default_factory=set)
    dynamic: set = field(default_factory=set)  # ids whose rigid motion is used
    deformable: set = field(default_factory=set)  # ids whose deformation is used

    def __post_init__(self):
        self.log_depth = np.asarray(self.log_depth, dtype=np.float64)
        if self.deformation is None:
            self.deformation = np.zeros(self.log_depth.shape + (3,))

    @classmethod
    def initial(cls, shape, object_ids=(), depth=10.0):
        return cls(log_depth=np.full(shape, math.log(depth)),
                   rigids={i: EulerPose() for i in object_ids},
                   dynamic=set(object_ids), deformable=set())

    @property
    def depth(self):
        return np.exp(self.log_depth)

    def copy(self):
        return copy.deepcopy(self)

    def rigid_list(self):
        """Rigid motions actually applied (identity for non-dynamic objects)."""
        return [RigidMotion6DoF(i, p if i in self.dynamic else EulerPose())
                for i, p in sorted(self.rigids.items())]

    def effective_deformation(self, instances):
        gate = np.zeros(self.log_depth.shape, dtype=bool)
        for inst in instances:
            if inst.id in self.deformable:
                gate |= inst.mask
        return np.where(gate[..., None], self.deformation, 0.0)

    def motion_map(self, K, instances):
        from .camera import backproject_grid
        from .motion import compose_object_motion
        P = backproject_grid(K, self.depth)
        return compose_object_motion(P, instances, self.rigid_list(),
                                     self.effective_deformation(instances))

    def save(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_pfm(out / "log_depth.pfm", self.log_depth)
        save_pfm(out / "depth.pfm", self.depth)
        save_pfm(out / "deformation.pfm", self.deformation)
        meta = {
            "ego": self.ego.to_dict(),
            "rigids": [{"id": i, **p.to_dict()} for i, p in sorted(self.rigids.items())],
            "dynamic": sorted(self.dynamic),
            "deformable": sorted(self.deformable),
            "frozen": sorted(self.frozen),
        }
        (out / "poses.json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    @classmethod
    def load(cls, in_dir):
        d = Path(in_dir)
        meta = json.loads((d / "poses.json").read_text())
        return cls(
            log_depth=load_pfm(d / "log_depth.pfm"),
            ego=EulerPose.from_dict(meta["ego"]),
            rigids={r["id"]: EulerPose.from_dict(r) for r in meta["rigids"]},
            deformation=load_pfm(d / "deformation.pfm"),
            frozen=set(meta.get("frozen", [])),
            dynamic=set(meta.get("dynamic", [])),
            deformable=set(meta.get("deformable", [])),
        )


# --------------------------------------------------------------------------- torch ops

def _t(x):
    return torch.as_tensor(np.asarray(x, dtype=np.float64), dtype=DTYPE)


def _rotation(angles):
    """``Rz(yaw) Ry(pitch) Rx(roll)`` for ``angles = [pitch, roll, yaw]`` (..., 3)."""
    p, r, y = angles[..., 0], angles[..., 1], angles[..., 2]
    cp, sp = torch.cos(p), torch.sin(p)
    cr, sr = torch.cos(r), torch.sin(r)
    cy, sy = torch.cos(y), torch.sin(y)
    row0 = torch.stack([cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr], -1)
    row1 = torch.stack([sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr], -1)
    row2 = torch.stack([-sp, cp * sr, cp * cr], -1)
    return torch.stack([row0, row1, row2], -2)


def _sample(img, u, v):
    """Bilinear sample ``img`` (H, W, C) at (u, v) with border clamping; returns (values, valid)."""
    h, w = img.shape[:2]
    finite = torch.isfinite(u) & torch.isfinite(v)
    valid = finite & (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    uc = torch.where(finite, u, torch.zeros_like(u)).clamp(0, w - 1)
    vc = torch.where(finite, v, torch.zeros_like(v)).clamp(0, h - 1)
    x0 = torch.floor(uc).detach()
    y0 = torch.floor(vc).detach()
    wx = (uc - x0)[..., None]
    wy = (vc - y0)[..., None]
    x0 = x0.long()
    y0 = y0.long()
    x1 = torch.clamp(x0 + 1, max=w - 1)
    y1 = torch.clamp(y0 + 1, max=h - 1)
    flat = img.reshape(h * w, -1)

    def g(yy, xx):
        return flat[(yy * w + xx).reshape(-1)].reshape(u.shape + (flat.shape[1],))

    top = g(y0, x0) * (1 - wx) + g(y0, x1) * wx
    bot = g(y1, x0) * (1 - wx) + g(y1, x1) * wx
    return top * (1 - wy) + bot * wy, valid


def _snap(x, hi):
    x = torch.where((x < 0) & (x >= -BORDER_TOL), torch.zeros_like(x), x)
    return torch.where((x > hi) & (x <= hi + BORDER_TOL), torch.full_like(x, float(hi)), x)


def _box3(x):
    # x: (H, W, C) -> 3x3 mean with reflection padding
    t = x.permute(2, 0, 1)[None]
    t = F.pad(t, (1, 1, 1, 1), mode="reflect")
    return F.avg_pool2d(t, 3, stride=1)[0].permute(1, 2, 0)


def _photometric_map(a, b, alpha):
    l1 = (a - b).abs().mean(-1)
    if alpha == 0.0:
        return (1 - alpha) * l1
    mu_a, mu_b = _box3(a), _box3(b)
    var_a = _box3(a * a) - mu_a * mu_a
    var_b = _box3(b * b) - mu_b * mu_b
    cov = _box3(a * b) - mu_a * mu_b
    ssim = ((2 * mu_a * mu_b + C1) * (2 * cov + C2)) / (
        (mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2))
    return 0.5 * alpha * (1 - ssim.mean(-1)) + (1 - alpha) * l1


def _smoothness(depth, img):
    inv = 1.0 / depth
    dstar = inv / inv.mean()
    gx = (dstar[:, 1:] - dstar[:, :-1]).abs()
    gy = (dstar[1:, :] - dstar[:-1, :]).abs()
    ix = (img[:, 1:] - img[:, :-1]).abs().mean(-1)
    iy = (img[1:, :] - img[:-1, :]).abs().mean(-1)
    total = depth.new_zeros(())
    if gx.numel():
        total = total + (gx * torch.exp(-ix)).mean()
    if gy.numel():
        total = total + (gy * torch.exp(-iy)).mean()
    return total


class _Problem:
    """Torch view of a pair: images, masks, intrinsics and the forward model."""

    def __init__(self, pair):
        self.pair = pair
        self.K = pair.K
        self.image_t = _t(pair.image_t)
        self.image_s = _t(pair.image_s)
        h, w = pair.shape
        self.shape = (h, w)
        self.ids = [inst.id for inst in pair.instances]
        self.masks = {inst.id: _t(inst.mask.astype(float)) for inst in pair.instances}
        union_t = pair.instances.union((h, w))
        self.mask_t = _t(union_t.astype(float))
        if pair.instances_s is not None and len(pair.instances_s):
            union_s = pair.instances_s.union((h, w))
        else:
            union_s = union_t
        self.mask_s = _t(union_s.astype(float))[..., None]
        v, u = np.mgrid[0:h, 0:w]
        self.ux = _t((u - self.K.cx) / self.K.fx)
        self.vy = _t((v - self.K.cy) / self.K.fy)
        self.boxes = {}
        for inst in pair.instances:
            if inst.bbox is not None:
                self.boxes[inst.id] = _t(enlarge_bbox(inst.bbox, h, w).to_mask(h, w)
                                         .astype(float)) > 0.5

    def forward(self, params, state, weights, terms, region="image", use_motion=True):
        """Return ``(total, parts, aux)`` for the given parameter tensors.

        ``params`` maps block name -> tensor (log_depth (H, W), ego (6,),
        rigid (n, 6) in ``self.ids`` order, deformation (H, W, 3)).
        """
        depth = torch.exp(params["log_depth"])
        P = torch.stack([self.ux * depth, self.vy * depth, depth], -1)
        motion = torch.zeros_like(P)
        if use_motion and self.ids:
            gate = torch.zeros(self.shape, dtype=DTYPE)
            for i in self.ids:
                if i in state.deformable:
                    gate = gate + self.masks[i]
            deform = params["deformation"] * gate.clamp(max=1.0)[..., None]
            rig = params["rigid"]
            for k, i in enumerate(self.ids):
                if i not in state.dynamic and i not in state.deformable:
                    continue
                R = _rotation(rig[k, :3]) if i in state.dynamic else torch.eye(3, dtype=DTYPE)
                tr = rig[k, 3:] if i in state.dynamic else torch.zeros(3, dtype=DTYPE)
                moved = (P + deform) @ R.T + tr
                motion = motion + self.masks[i][..., None] * (moved - P)
        Re = _rotation(params["ego"][:3])
        Xs = (P + motion) @ Re.T + params["ego"][3:]
        z = Xs[..., 2]
        front = z > EPS_Z
        zs = torch.where(front, z, torch.ones_like(z))
        u = self.K.fx * Xs[..., 0] / zs + self.K.cx
        v = self.K.fy * Xs[..., 1] / zs + self.K.cy
        u = _snap(u, self.shape[1] - 1)
        v = _snap(v, self.shape[0] - 1)
        nan = torch.full_like(u, float("nan"))
        u = torch.where(front, u, nan)
        v = torch.where(front, v, nan)
        rec, valid = _sample(self.image_s, u, v)
        pmap = _photometric_map(rec, self.image_t, weights.alpha)
        parts = {}
        if region == "boxes":
            l_ph = depth.new_zeros(())
            for i in self.ids:
                if i not in self.boxes or (i not in state.dynamic and i not in state.deformable):
                    continue
                sel = valid & self.boxes[i]
                if sel.any():
                    l_ph = l_ph + pmap[sel].mean()
            parts["L_ph"] = l_ph
        else:
            if not valid.any():
                raise DegenerateInputError("no valid pixel in the reconstruction")
            parts["L_ph"] = pmap[valid].mean()
        total = weights.w_ph * parts["L_ph"]
        if "ds" in terms:
            parts["L_ds"] = _smoothness(depth, self.image_t)
            total = total + weights.w_ds * parts["L_ds"]
        if "m" in terms:
            m_hat, _ = _sample(self.mask_s, u, v)
            m_hat = m_hat[..., 0]
            sel = valid
            inter = torch.minimum(m_hat, self.mask_t)[sel].sum()
            union = torch.maximum(m_hat, self.mask_t)[sel].sum()
            parts["L_m"] = 1 - inter / union if union > 0 else depth.new_zeros(())
            total = total + weights.w_m * parts["L_m"]
        if "def" in terms and state_lambda(state) > 0:
            parts["L_def"] = (deform ** 2).sum(-1).mean()
            total = total + state_lambda(state) * parts["L_def"]
        aux = {"u": u, "v": v, "valid": valid, "rec": rec, "pmap": pmap}
        return total, parts, aux


def state_lambda(state):
    return getattr(state, "lambda_def", 0.0)


def _params_from_state(state, ids, requires_grad=()):
    rig = np.stack([state.rigids.get(i, EulerPose()).as_vector() for i in ids]) if ids else \
        np.zeros((0, 6))
    params = {
        "log_depth": _t(state.log_depth),
        "ego": _t(state.ego.as_vector()),
        "rigid": _t(rig),
        "deformation": _t(state.deformation),
    }
    for name in requires_grad:
        params[name].requires_grad_(True)
    return params


def _write_back(state, params, ids, blocks):
    with torch.no_grad():
        if "log_depth" in blocks:
            state.log_depth = params["log_depth"].detach().numpy().copy()
        if "ego" in blocks:
            state.ego = EulerPose.from_vector(params["ego"].detach().numpy())
        if "rigid" in blocks:
            rig = params["rigid"].detach().numpy()
            for k, i in enumerate(ids):
                state.rigids[i] = EulerPose.from_vector(rig[k])
        if "deformation" in blocks:
            state.deformation = params["deformation"].detach().numpy().copy()


_ALL_TERMS = ("ph", "ds", "m")


def loss_and_gradients(state: FitState, pair, weights: LossWeights = LossWeights(),
                       active=BLOCKS, terms=_ALL_TERMS, region="image"):
    """Total loss and a gradient array per active (non-frozen) block.

    Frozen or inactive blocks map to an empty array.
    """
    prob = pair if isinstance(pair, _Problem) else _Problem(pair)
    if state.log_depth.shape != prob.shape:
        raise ContractError(f"state shape {state.log_depth.shape} != pair shape {prob.shape}")
    live = [b for b in active if b not in state.frozen]
    params = _params_from_state(state, prob.ids, live)
    total, parts, _ = prob.forward(params, state, weights, terms, region)
    grads = {}
    if live:
        gs = torch.autograd.grad(total, [params[b] for b in live], allow_unused=True)
        for b, g in zip(live, gs):
            grads[b] = (np.zeros(params[b].shape) if g is None else g.detach().numpy())
    for b in BLOCKS:
        grads.setdefault(b, np.zeros(0))
    if not torch.isfinite(total):
        raise DegenerateInputError("non-finite loss")
    return float(total.detach()), grads


# --------------------------------------------------------------------------- gradient check

def _lattice_signature(prob, params, state, weights, terms, region):
    with torch.no_grad():
        total, _, aux = prob.forward(params, state, weights, terms, region)
        u, v, valid = aux["u"], aux["v"], aux["valid"]
        ld = params["log_depth"]
        key = (torch.floor(torch.nan_to_num(u, nan=-7.0)), torch.floor(torch.nan_to_num(v, nan=-7.0)),
               valid, torch.sign(aux["rec"] - prob.image_t),
               torch.sign(ld[:, 1:] - ld[:, :-1]), torch.sign(ld[1:, :] - ld[:-1, :]))
        if "m" in terms:
            m_hat, _ = _sample(prob.mask_s, u, v)
            key = key + (torch.sign(m_hat[..., 0] - prob.mask_t),)
    return float(total), key


def _same(k1, k2):
    return all(torch.equal(a, b) for a, b in zip(k1, k2))


def gradient_check(state: FitState, pair, block, eps=1e-4, samples=8, seed=0,
                   weights: LossWeights = LossWeights(), terms=_ALL_TERMS, region="image",
                   corrupt=None, return_details=False):
    """Max relative error between autograd and central differences on one block.

    Coordinates are drawn at random (for ``deformation`` only inside
    deformable masks).  The difference step starts at ``eps`` and is halved
    until neither side of the stencil crosses a bilinear lattice line, the
    image border or an L1 sign change, so the comparison stays on one smooth
    piece.  ``corrupt`` is a test hook that perturbs the analytic gradient.
    """
    if block not in BLOCKS:
        raise ContractError(f"unknown block {block!r}")
    prob = pair if isinstance(pair, _Problem) else _Problem(pair)
    st = state.copy()
    st.frozen = set()
    _, grads = loss_and_gradients(st, prob, weights, (block,), terms, region)
    g = grads[block]
    if corrupt is not None:
        g = corrupt(g.copy())
    rng = np.random.default_rng(seed)
    shape = g.shape
    if block == "deformation":
        gate = np.zeros(prob.shape, dtype=bool)
        for inst in pair.instances if not isinstance(pair, _Problem) else prob.pair.instances:
            if inst.id in st.deformable:
                gate |= inst.mask
        cand = np.argwhere(gate)
        if not len(cand):
            raise DegenerateInputError("no deformable pixel to check")
        picks = cand[rng.integers(0, len(cand), samples)]
        coords = [(int(r), int(c), int(rng.integers(0, 3))) for r, c in picks]
    elif block == "log_depth":
        h, w = prob.shape
        coords = [(int(rng.integers(1, h - 1)), int(rng.integers(1, w - 1)))
                  for _ in range(samples)]
    else:
        flat = rng.choice(int(np.prod(shape)), size=min(samples, int(np.prod(shape))),
                          replace=False)
        coords = [tuple(int(x) for x in np.unravel_index(f, shape)) for f in flat]
    base = _params_from_state(st, prob.ids)
    _, key0 = _lattice_signature(prob, base, st, weights, terms, region)
    worst = 0.0
    details = []
    for c in coords:
        h_step = eps
        for _ in range(40):
            vals = []
            keys = []
            for sgn in (1.0, -1.0):
                p = {k: t.clone() for k, t in base.items()}
                p[block][c] += sgn * h_step
                val, key = _lattice_signature(prob, p, st, weights, terms, region)
                vals.append(val)
                keys.append(key)
            if _same(keys[0], key0) and _same(keys[1], key0):
                break
            h_step *= 0.5
        fd = (vals[0] - vals[1]) / (2 * h_step)
        an = float(g[c])
        rel = abs(an - fd) / (max(abs(an), abs(fd)) + 1e-8)
        details.append({"coord": c, "analytic": an, "numeric": fd, "step": h_step, "rel": rel})
        worst = max(worst, rel)
    if return_details:
        return worst, details
    return worst


# --------------------------------------------------------------------------- staged fitting

@dataclass
class StageConfig:
    name: str
    active: tuple
    terms: tuple
    lr: float
    iterations: int
    region: str = "image"
    use_motion: bool = True
    block_lr: dict = field(default_factory=dict)  # per-block overrides of ``lr``


@dataclass
class StageSchedule:
    stages: list

    def __post_init__(self):
        if len(self.stages) != 4:
            raise ContractError("a schedule has exactly four stages")

    def with_iterations(self, iters):
        return StageSchedule([dataclasses.replace(s, iterations=int(n))
                              for s, n in zip(self.stages, iters)])

    def to_dict(self):
        return {"stages": [dict(s.__dict__) for s in self.stages]}

    @classmethod
    def from_dict(cls, d):
        return cls([StageConfig(**{**s, "active": tuple(s["active"]), "terms": tuple(s["terms"])})
                    for s in d["stages"]])


ADAM_BETAS = (0.9, 0.999)
LR_GEOMETRY = 3e-3  # log-depth
LR_EGO = 1e-2  # ego translation
LR_EGO_ROTATION = 1e-3
LR_MOTION = 2e-3
DEFAULT_ITERATIONS = (2000, 1000, 1000, 1000)


def default_schedule(iterations=DEFAULT_ITERATIONS, lr_geometry=LR_GEOMETRY,
                     lr_motion=LR_MOTION, lr_ego=LR_EGO, lr_ego_rotation=LR_EGO_ROTATION):
    """The four-stage schedule; ego pose gets its own rate in the geometry stages."""
    it = list(iterations)
    ego = {"ego": lr_ego, "ego_rotation": lr_ego_rotation}
    return StageSchedule([
        StageConfig("depth_pose", ("log_depth", "ego"), ("ph", "ds"), lr_geometry, it[0],
                    use_motion=False, block_lr=dict(ego)),
        StageConfig("rigid", ("rigid",), ("ph",), lr_motion, it[1], region="boxes"),
        StageConfig("deformation", ("deformation",), ("ph", "def"), lr_motion, it[2],
                    region="boxes"),
        StageConfig("finetune", ("log_depth", "ego"), ("ph", "ds", "m"), lr_geometry, it[3],
                    block_lr=dict(ego)),
    ])


def _project_depth(params):
    with torch.no_grad():
        params["log_depth"].clamp_(math.log(DEPTH_RANGE[0]), math.log(DEPTH_RANGE[1]))


def _f(x):
    return 0.0 if x is None else float(x.detach()) if torch.is_tensor(x) else float(x)


def _run_stage(prob, state, stage_no, cfg: StageConfig, weights, history, callback=None):
    """Adam on the stage's live blocks; the lowest-loss iterate is kept."""
    blocks = [b for b in cfg.active if b not in state.frozen]
    if cfg.iterations <= 0 or not blocks:
        return
    params = _params_from_state(state, prob.ids, blocks)
    leaves = {b: params[b] for b in blocks}
    if "ego" in blocks:
        # rotation moves pixels ~fx times faster than translation; own rate
        leaves["ego"] = params["ego"][3:].detach().clone().requires_grad_(True)
        leaves["ego_rotation"] = params["ego"][:3].detach().clone().requires_grad_(True)
    groups = [{"params": [t], "lr": cfg.block_lr.get(b, cfg.lr)} for b, t in leaves.items()]
    opt = torch.optim.Adam(groups, lr=cfg.lr, betas=ADAM_BETAS)
    best, best_loss = None, math.inf

    def evaluate(it, grad):
        if "ego" in blocks:
            params["ego"] = torch.cat([leaves["ego_rotation"], leaves["ego"]])
        total, parts, _ = prob.forward(params, state, weights, cfg.terms, cfg.region,
                                       cfg.use_motion)
        if not torch.isfinite(total):
            raise DivergenceError(stage_no, it)
        return total, parts

    for it in range(cfg.iterations):
        opt.zero_grad()
        total, parts = evaluate(it, True)
        if not total.requires_grad:
            log.info("stage %d: loss does not depend on the active blocks, skipped", stage_no)
            return
        row = {"stage": stage_no, "iteration": it, "L_ph": _f(parts.get("L_ph")),
               "L_ds": _f(parts.get("L_ds")), "L_m": _f(parts.get("L_m")), "total": _f(total)}
        history.append(row)
        if row["total"] < best_loss:
            best_loss = row["total"]
            best = {b: params[b].detach().clone() for b in blocks}
        total.backward()
        opt.step()
        if "log_depth" in blocks:
            _project_depth(params)
        if callback is not None:
            callback(stage_no, it, row)
    with torch.no_grad():
        final, _ = evaluate(cfg.iterations, False)
        if float(final) < best_loss:
            best = {b: params[b].detach().clone() for b in blocks}
    _write_back(state, best, prob.ids, blocks)


def reconstruct(state: FitState, pair, level="def"):
    """Numpy reconstruction ``I_t^ego`` / ``I_t^rig`` / ``I_t^def``; returns (image, valid)."""
    K = pair.K
    T = pose_from_euler(state.ego)
    if level == "ego" or not len(pair.instances):
        motion = None
    else:
        st = state.copy()
        if level == "rig":
            st.deformable = set()
        motion = st.motion_map(K, pair.instances)
    corr = project_correspondence(state.depth, K, T, motion)
    return inverse_warp(pair.image_s, corr)


def fit_staged(pair, schedule: StageSchedule = None, weights: LossWeights = LossWeights(),
               init_depth=10.0, stages=(1, 2, 3, 4), lambda_def=0.0, callback=None,
               state=None, filter_margin=0.0):
    """Run the four-stage schedule; returns ``(state, history, report)``.

    Only images, intrinsics and instance masks of ``pair`` are used.  A
    ``state`` resumes from an earlier fit (it is copied, not mutated).
    ``report`` carries the static-filter decisions of stages 2 and 3.
    """
    schedule = schedule or default_schedule()
    pair = pair.without_ground_truth() if hasattr(pair, "without_ground_truth") else pair
    prob = _Problem(pair)
    if state is None:
        state = FitState.initial(prob.shape, prob.ids, init_depth)
    else:
        state = state.copy()
        if state.log_depth.shape != prob.shape:
            raise ContractError("initial state does not match the pair")
    state.lambda_def = lambda_def
    history = []
    report = {}
    alpha = weights.alpha
    for k, cfg in enumerate(schedule.stages, start=1):
        if k not in stages:
            continue
        if k == 1:
            state.frozen = {"rigid", "deformation"}
        elif k == 2:
            state.frozen = {"log_depth", "ego", "deformation"}
            state.dynamic = set(prob.ids)
        elif k == 3:
            state.frozen = {"log_depth", "ego", "rigid"}
            state.deformable = set(state.dynamic)
        else:
            state.frozen = {"rigid", "deformation"}
        log.info("stage %d (%s): %d iterations", k, cfg.name, cfg.iterations)
        _run_stage(prob, state, k, cfg, weights, history, callback)
        if k == 2 and prob.ids:
            before, vb = reconstruct(state, pair, "ego")
            after, va = reconstruct(state, pair, "rig")
            res = static_filter(pair.image_t, before, after, pair.instances, alpha, vb, va,
                                filter_margin)
            for i in set(prob.ids) - res.dynamic:
                state.rigids[i] = EulerPose()
            state.dynamic = set(res.dynamic)
            report["stage2_filter"] = res
        if k == 3 and prob.ids:
            before, vb = reconstruct(state, pair, "rig")
            after, va = reconstruct(state, pair, "def")
            cand = InstanceSet([inst for inst in pair.instances if inst.id in state.deformable])
            res = static_filter(pair.image_t, before, after, cand, alpha, vb, va, filter_margin)
            dropped = state.deformable - res.dynamic
            if dropped:
                gate = np.zeros(prob.shape, dtype=bool)
                for inst in pair.instances:
                    if inst.id in dropped:
                        gate |= inst.mask
                state.deformation[gate] = 0.0
            state.deformable = set(res.dynamic)
            report["stage3_filter"] = res
    state.frozen = set()
    return state, history, report


def history_to_csv(history):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stage", "iteration", "L_ph", "L_ds", "L_m", "total"])
    for row in history:
        w.writerow([row["stage"], row["iteration"]] +
                   [f"{row[k]:.12g}" for k in ("L_ph", "L_ds", "L_m", "total")])
    return buf.getvalue()
