"""Self-supervised objective terms: SSIM+L1 photometric, edge-aware
smoothness, soft-IoU mask loss and their weighted sum."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import check_mask, check_same_hw
from .exceptions import ContractError, DegenerateInputError, DomainError

__all__ = [
    "C1",
    "C2",
    "LossWeights",
    "ssim_map",
    "photometric_map",
    "photometric_loss",
    "smoothness_loss",
    "mask_loss",
    "total_loss",
]

C1 = 0.01 ** 2
C2 = 0.03 ** 2


@dataclass(frozen=True)
class LossWeights:
    w_ph: float = 1.0
    w_ds: float = 0.001
    w_m: float = 1.0
    alpha: float = 0.85

    def __post_init__(self):
        if min(self.w_ph, self.w_ds, self.w_m) < 0:
            raise ContractError("loss weights must be non-negative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ContractError(f"alpha must lie in [0, 1], got {self.alpha}")

    def to_dict(self):
        return {"w_ph": self.w_ph, "w_ds": self.w_ds, "w_m": self.w_m, "alpha": self.alpha}


def _box3(x):
    """3x3 mean with reflection padding over the two leading axes."""
    pad = [(1, 1), (1, 1)] + [(0, 0)] * (x.ndim - 2)
    p = np.pad(x, pad, mode="reflect")
    h, w = x.shape[:2]
    acc = np.zeros_like(x)
    for dy in range(3):
        for dx in range(3):
            acc += p[dy:dy + h, dx:dx + w]
    return acc / 9.0


def ssim_map(a, b):
    """Per-pixel SSIM over 3x3 windows, averaged over channels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch {a.shape} vs {b.shape}")
    if min(a.shape[:2]) < 2:
        raise ContractError("SSIM needs at least 2x2 images (reflection padding)")
    mu_a = _box3(a)
    mu_b = _box3(b)
    var_a = _box3(a * a) - mu_a * mu_a
    var_b = _box3(b * b) - mu_b * mu_b
    cov = _box3(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + C1) * (2 * cov + C2)
    den = (mu_a * mu_a + mu_b * mu_b + C1) * (var_a + var_b + C2)
    s = num / den
    return s.mean(axis=2) if s.ndim == 3 else s


def photometric_map(pred, target, alpha=0.85):
    """Per-pixel ``alpha/2 (1 - SSIM) + (1 - alpha) |pred - target|_1``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    l1 = np.abs(pred - target)
    if l1.ndim == 3:
        l1 = l1.mean(axis=2)
    if alpha == 0.0:
        return (1.0 - alpha) * l1
    return 0.5 * alpha * (1.0 - ssim_map(pred, target)) + (1.0 - alpha) * l1


def photometric_loss(pred, target, valid=None, alpha=0.85):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ContractError(f"shape mismatch {pred.shape} vs {target.shape}")
    if valid is None:
        valid = np.ones(pred.shape[:2], dtype=bool)
    valid = check_mask(valid, "valid")
    check_same_hw(pred, valid)
    if not valid.any():
        raise DegenerateInputError("photometric loss over an empty valid mask")
    return float(photometric_map(pred, target, alpha)[valid].sum() / valid.sum())


def smoothness_loss(depth, image):
    depth = np.asarray(depth, dtype=np.float64)
    image = np.asarray(image, dtype=np.float64)
    check_same_hw(depth, image)
    if np.any(depth <= 0):
        raise DomainError("smoothness loss needs positive depth")
    inv = 1.0 / depth
    dstar = inv / inv.mean()
    gx_d = np.abs(np.diff(dstar, axis=1))
    gy_d = np.abs(np.diff(dstar, axis=0))
    gx_i = np.abs(np.diff(image, axis=1))
    gy_i = np.abs(np.diff(image, axis=0))
    if image.ndim == 3:
        gx_i = gx_i.mean(axis=2)
        gy_i = gy_i.mean(axis=2)
    total = 0.0
    if gx_d.size:
        total += float((gx_d * np.exp(-gx_i)).mean())
    if gy_d.size:
        total += float((gy_d * np.exp(-gy_i)).mean())
    return total


def mask_loss(m_hat, m):
    """``1 - soft IoU``; zero when both masks are empty."""
    m_hat = check_mask(m_hat, "reconstructed mask", soft=True)
    m = check_mask(m, "mask", soft=True)
    check_same_hw(m_hat, m)
    union = np.maximum(m_hat, m).sum()
    if union == 0:
        return 0.0
    return float(1.0 - np.minimum(m_hat, m).sum() / union)


def total_loss(components, weights: LossWeights = LossWeights()):
    """Weighted sum of ``(L_ph, L_ds, L_m)``; a mapping with those keys also works."""
    if isinstance(components, dict):
        l_ph = components.get("L_ph", 0.0)
        l_ds = components.get("L_ds", 0.0)
        l_m = components.get("L_m", 0.0)
    else:
        l_ph, l_ds, l_m = components
    return weights.w_ph * l_ph + weights.w_ds * l_ds + weights.w_m * l_m
