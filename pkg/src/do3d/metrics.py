"""Evaluation: median-scaled depth errors, flow EPE tables and
scene-flow outlier rates."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

from .core import check_mask, check_same_hw, check_scalar_field
from .exceptions import ContractError, DegenerateInputError

__all__ = [
    "DEPTH_CAP",
    "DEPTH_EPS",
    "DISPARITY_K",
    "DepthMetrics",
    "FlowReport",
    "SceneFlowReport",
    "depth_metrics",
    "flow_epe",
    "sceneflow_outliers",
    "disparity_proxy",
    "fg_bg_split",
    "to_csv",
    "to_table",
]

DEPTH_CAP = 80.0
DEPTH_EPS = 1e-3
# disparity = K / depth; roughly focal length times stereo baseline of the
# usual driving rigs, so 3 px thresholds stay meaningful at desk scale
DISPARITY_K = 400.0
OUTLIER_PX = 3.0
OUTLIER_REL = 0.05


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float


@dataclass(frozen=True)
class FlowReport:
    """EPE per region; ``None`` marks a region with no pixels."""
    noc_bg: float | None
    noc_fg: float | None
    noc_all: float | None
    occ_bg: float | None
    occ_fg: float | None
    occ_all: float | None

    def rows(self):
        return [("Noc", self.noc_bg, self.noc_fg, self.noc_all),
                ("Occ", self.occ_bg, self.occ_fg, self.occ_all)]


@dataclass(frozen=True)
class SceneFlowReport:
    D0: float
    D1: float
    F1: float
    SF: float


def depth_metrics(pred, gt, valid=None, median_scale=True, cap=DEPTH_CAP) -> DepthMetrics:
    pred = check_scalar_field(pred, "predicted depth")
    gt = check_scalar_field(gt, "ground-truth depth")
    check_same_hw(pred, gt)
    valid = np.ones(gt.shape, dtype=bool) if valid is None else check_mask(valid, "valid")
    check_same_hw(gt, valid)
    if not valid.any():
        raise DegenerateInputError("depth metrics over an empty valid mask")
    p = pred[valid]
    g = gt[valid]
    if np.any(g <= 0):
        raise DegenerateInputError("ground-truth depth must be positive on valid pixels")
    if median_scale:
        mp = np.median(p)
        if mp == 0:
            raise DegenerateInputError("median predicted depth is zero")
        p = p * (np.median(g) / mp)
    p = np.clip(p, DEPTH_EPS, cap)
    g = np.clip(g, DEPTH_EPS, cap)
    diff = p - g
    ratio = np.maximum(p / g, g / p)
    return DepthMetrics(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff ** 2 / g)),
        rmse=float(np.sqrt(np.mean(diff ** 2))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25 ** 2)),
        delta3=float(np.mean(ratio < 1.25 ** 3)),
    )


def _check_flow(f, name):
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 3 or f.shape[2] != 2:
        raise ContractError(f"{name} must be (H, W, 2), got {f.shape}")
    return f


def flow_epe(pred, gt, valid=None, noc=None, fg=None) -> FlowReport:
    pred = _check_flow(pred, "predicted flow")
    gt = _check_flow(gt, "ground-truth flow")
    if pred.shape != gt.shape:
        raise ContractError(f"flow shapes differ: {pred.shape} vs {gt.shape}")
    shape = gt.shape[:2]
    valid = np.ones(shape, dtype=bool) if valid is None else check_mask(valid, "valid")
    noc = np.ones(shape, dtype=bool) if noc is None else check_mask(noc, "noc")
    fg = np.zeros(shape, dtype=bool) if fg is None else check_mask(fg, "fg")
    for m in (valid, noc, fg):
        check_same_hw(gt, m)
    err = np.linalg.norm(pred - gt, axis=2)

    def mean(region):
        return float(err[region].mean()) if region.any() else None

    out = {}
    for name, base in (("noc", valid & noc), ("occ", valid)):
        out[f"{name}_bg"] = mean(base & ~fg)
        out[f"{name}_fg"] = mean(base & fg)
        out[f"{name}_all"] = mean(base)
    return FlowReport(**out)


def disparity_proxy(depth, k=DISPARITY_K):
    depth = np.asarray(depth, dtype=np.float64)
    return k / depth


def _outliers(err, mag):
    return (err > OUTLIER_PX) & (err > OUTLIER_REL * mag)


def sceneflow_outliers(pred, gt, valid=None) -> SceneFlowReport:
    """KITTI-style outlier percentages.

    ``pred`` and ``gt`` map ``"D0"`` and ``"D1"`` to disparity fields (H, W)
    and ``"flow"`` to (H, W, 2).  An outlier exceeds both 3 px and 5 % of the
    ground-truth magnitude.
    """
    for key in ("D0", "D1", "flow"):
        if key not in pred or key not in gt:
            raise ContractError(f"missing {key!r} field")
    shape = np.asarray(gt["D0"]).shape[:2]
    valid = np.ones(shape, dtype=bool) if valid is None else check_mask(valid, "valid")
    if not valid.any():
        raise DegenerateInputError("scene-flow outliers over an empty valid mask")
    out = {}
    for key in ("D0", "D1"):
        p = check_scalar_field(pred[key], f"predicted {key}")
        g = check_scalar_field(gt[key], f"ground-truth {key}")
        check_same_hw(g, valid)
        check_same_hw(p, g)
        out[key] = _outliers(np.abs(p - g), np.abs(g))
    pf = _check_flow(pred["flow"], "predicted flow")
    gf = _check_flow(gt["flow"], "ground-truth flow")
    check_same_hw(gf, valid)
    out["F1"] = _outliers(np.linalg.norm(pf - gf, axis=2), np.linalg.norm(gf, axis=2))
    out["SF"] = out["D0"] | out["D1"] | out["F1"]
    n = valid.sum()
    return SceneFlowReport(**{k: float(100.0 * (v & valid).sum() / n) for k, v in out.items()})


def fg_bg_split(instances, dims):
    h, w = dims[:2]
    fg = np.zeros((h, w), dtype=bool)
    for inst in instances:
        m = check_mask(inst.mask if hasattr(inst, "mask") else inst, "instance mask")
        if m.shape != (h, w):
            raise ContractError(f"instance mask {m.shape} does not match {(h, w)}")
        fg |= m
    return fg, ~fg


def _fmt(x):
    return "" if x is None else f"{x:.12g}"


def to_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if isinstance(report, FlowReport):
        w.writerow(["region", "bg", "fg", "all"])
        for name, *vals in report.rows():
            w.writerow([name] + [_fmt(v) for v in vals])
    else:
        d = asdict(report)
        w.writerow(list(d))
        w.writerow([_fmt(v) for v in d.values()])
    return buf.getvalue()


def to_table(report):
    """Aligned plain-text table (absent regions shown as ``-``)."""

    def cell(x):
        return "-" if x is None else f"{x:.4f}"

    if isinstance(report, FlowReport):
        rows = [["", "bg", "fg", "all"]] + [[n] + [cell(v) for v in vals]
                                           for n, *vals in report.rows()]
    else:
        d = asdict(report)
        rows = [list(d), [cell(v) for v in d.values()]]
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.rjust(wd) for c, wd in zip(r, widths)) for r in rows) + "\n"
