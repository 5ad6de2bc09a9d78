"""Random driving-scene objects with exactly projected 2D boxes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from monolift import geometry as geo

# Magnitudes of a rectified KITTI left-colour camera; not taken from any one drive.
KITTI_P2 = np.array(
    [
        [721.5377, 0.0, 609.5593, 44.85728],
        [0.0, 721.5377, 172.854, 0.2163791],
        [0.0, 0.0, 1.0, 0.002745884],
    ]
)
IMAGE_SIZE = (1242, 375)
CAMERA_HEIGHT = 1.65

# mean (h, w, l) in metres per class
CLASS_MEANS = {
    "Car": (1.53, 1.63, 3.88),
    "Pedestrian": (1.76, 0.66, 0.84),
    "Cyclist": (1.74, 0.60, 1.76),
}


@dataclass(frozen=True)
class SceneObject:
    class_name: str
    dims: geo.Dims3D
    location: geo.Translation
    rotation_y: float
    bbox: geo.Box2D
    alpha: float  # local yaw consistent with ``bbox`` under ``ray_angle``


def in_image(b, image_size=IMAGE_SIZE) -> bool:
    return b[0] >= 0.0 and b[1] >= 0.0 and b[2] <= image_size[0] - 1 and b[3] <= image_size[1] - 1


def make_object(class_name, dims, location, rotation_y, P=KITTI_P2) -> SceneObject:
    corners = geo.box_corners(dims, rotation_y, location)
    bbox = geo.projected_bbox(corners, P)
    alpha = geo.global_to_local(rotation_y, geo.ray_angle(bbox, P))
    return SceneObject(
        class_name, geo.Dims3D(*dims), geo.Translation(*location), geo.normalize_angle(rotation_y), bbox, alpha
    )


def sample_objects(
    n: int,
    rng: np.random.Generator,
    P=KITTI_P2,
    depth=(5.0, 60.0),
    classes=tuple(CLASS_MEANS),
    dim_sigma: float = 0.08,
    image_size=IMAGE_SIZE,
    max_tries: int = 100_000,
) -> list[SceneObject]:
    """Draw ``n`` untruncated objects standing roughly on the ground plane."""
    P = np.asarray(P, dtype=float)
    K, _, _ = geo.decompose_projection(P)
    half_fov = math.atan2(image_size[0] / 2.0, K[0, 0])
    out = []
    for _ in range(max_tries):
        if len(out) == n:
            break
        cls = classes[rng.integers(len(classes))]
        dims = np.array(CLASS_MEANS[cls]) * np.exp(rng.normal(0.0, dim_sigma, 3))
        tz = rng.uniform(*depth)
        tx = tz * math.tan(half_fov) * rng.uniform(-0.95, 0.95)
        ty = CAMERA_HEIGHT + rng.normal(0.0, 0.1)
        ry = rng.uniform(-math.pi, math.pi)
        corners = geo.box_corners(dims, ry, (tx, ty, tz))
        _, lam = geo.project_points(corners, P)
        if np.any(lam <= 0.1):
            continue
        obj = make_object(cls, dims, (tx, ty, tz), ry, P)
        if in_image(obj.bbox, image_size):
            out.append(obj)
    if len(out) < n:
        raise RuntimeError(f"only {len(out)} of {n} objects fit in the image")
    return out


def jitter_box(b, rng: np.random.Generator, pixels: float) -> geo.Box2D:
    """Move each side independently by a uniform offset in ``[-pixels, pixels]``."""
    noise = rng.uniform(-pixels, pixels, 4)
    x0, y0, x1, y1 = np.asarray(b, dtype=float) + noise
    if x1 - x0 < 1.0:
        x0, x1 = sorted((x0, x1))
        x1 = max(x1, x0 + 1.0)
    if y1 - y0 < 1.0:
        y0, y1 = sorted((y0, y1))
        y1 = max(y1, y0 + 1.0)
    return geo.Box2D(float(x0), float(y0), float(x1), float(y1))
