"""Regression targets and losses with hand-written gradients.

Covers the sin/cos yaw encoding, log-scale dimension offsets and the Volume
Displacement Loss (VDL) used to train the translation refiner. The multi-task
detector weights (classification 1.0, 2D box 2.0, orientation 5.0,
dimensions 100.0) only matter when training an image backbone and are not
used here.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from monolift.errors import NonPositive, ZeroVector
from monolift.geometry import Dims3D, normalize_angle, rot_y


class AngleEncoding(NamedTuple):
    sin_hat: float
    cos_hat: float


class DimOffsets(NamedTuple):
    dh: float
    dw: float
    dl: float


def encode_angle(alpha: float) -> AngleEncoding:
    return AngleEncoding(math.sin(alpha), math.cos(alpha))


def angle_loss(pred, alpha_gt: float) -> tuple[float, np.ndarray]:
    """Squared sin/cos errors plus a unit-circle penalty.

    Returns ``(loss, d loss / d (sin_hat, cos_hat))``.
    """
    s, c = float(pred[0]), float(pred[1])
    es, ec = math.sin(alpha_gt) - s, math.cos(alpha_gt) - c
    gap = 1.0 - (s * s + c * c)
    loss = es * es + ec * ec + gap * gap
    grad = np.array([-2.0 * es - 4.0 * s * gap, -2.0 * ec - 4.0 * c * gap])
    return loss, grad


def decode_angle(pred) -> float:
    s, c = float(pred[0]), float(pred[1])
    if s == 0.0 and c == 0.0:
        raise ZeroVector("cannot decode the zero vector")
    return normalize_angle(math.atan2(s, c))


def encode_dims(d, mean) -> DimOffsets:
    d, mean = np.asarray(d, dtype=float), np.asarray(mean, dtype=float)
    if np.any(d <= 0) or np.any(mean <= 0):
        raise NonPositive(f"dimensions and means must be positive: {d}, {mean}")
    return DimOffsets(*np.log(d / mean))


def decode_dims(offsets, mean) -> Dims3D:
    mean = np.asarray(mean, dtype=float)
    if np.any(mean <= 0):
        raise NonPositive(f"class means must be positive: {mean}")
    return Dims3D(*(np.exp(np.asarray(offsets, dtype=float)) * mean))


def stde(t_pred, t_gt) -> np.ndarray:
    """Signed translation displacement error ``t_pred - t_gt``."""
    return np.asarray(t_pred, dtype=float) - np.asarray(t_gt, dtype=float)


def rotate_displacement(dt, alpha_g: float) -> np.ndarray:
    """Express a camera-frame displacement along the object's own axes."""
    return rot_y(alpha_g) @ np.asarray(dt, dtype=float)


def face_areas(d) -> np.ndarray:
    """Areas swept by moving along local x, y, z: ``(w h, w l, h l)``."""
    h, w, l = d
    return np.array([w * h, w * l, h * l], dtype=float)


def vdl(t_pred, t_gt, d, alpha_g: float) -> tuple[float, np.ndarray]:
    """Volume Displacement Loss and its (sub)gradient with respect to ``t_pred``."""
    r = rot_y(alpha_g)
    moved = r @ stde(t_pred, t_gt)
    areas = face_areas(d)
    loss = float(areas @ np.abs(moved))
    grad = r.T @ (areas * np.sign(moved))
    return loss, grad


def vdl_batch(t_pred: np.ndarray, t_gt: np.ndarray, dims: np.ndarray, alpha_g: np.ndarray):
    """Row-wise ``vdl`` for ``(N, 3)`` arrays; returns per-row losses and gradients."""
    c, s = np.cos(alpha_g), np.sin(alpha_g)
    dx, dy, dz = (t_pred - t_gt).T
    mx = c * dx + s * dz
    mz = -s * dx + c * dz
    h, w, l = dims.T
    ax, ay, az = w * h, w * l, h * l
    loss = ax * np.abs(mx) + ay * np.abs(dy) + az * np.abs(mz)
    gx, gy, gz = ax * np.sign(mx), ay * np.sign(dy), az * np.sign(mz)
    # R^T applied to the weighted signs
    grad = np.stack([c * gx - s * gz, gy, s * gx + c * gz], axis=1)
    return loss, grad
