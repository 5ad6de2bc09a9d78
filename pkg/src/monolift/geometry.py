"""Camera-frame box geometry: rotations, corners, projection and 2D overlap.

Frames follow the KITTI camera convention: x to the right, y down, z forward.
A box is anchored at the centre of its bottom face, so a translation is
directly comparable with the ``location`` field of a KITTI label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from monolift.errors import BehindCamera, DegenerateDepth

TWO_PI = 2.0 * math.pi

# Corner layout in the object frame, in units of (l/2, h, w/2). Indices 0..3 walk
# the bottom ring counter-clockwise seen from above (x right, z up on the page);
# 4..7 sit directly above them.
_CORNER_SIGNS = np.array(
    [
        [1.0, 0.0, -1.0],
        [1.0, 0.0, 1.0],
        [-1.0, 0.0, 1.0],
        [-1.0, 0.0, -1.0],
        [1.0, -1.0, -1.0],
        [1.0, -1.0, 1.0],
        [-1.0, -1.0, 1.0],
        [-1.0, -1.0, -1.0],
    ]
)
BOTTOM = (0, 1, 2, 3)
TOP = (4, 5, 6, 7)


class Box2D(NamedTuple):
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def center(self) -> tuple[float, float]:
        return 0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max)


class Dims3D(NamedTuple):
    h: float
    w: float
    l: float  # noqa: E741


class Translation(NamedTuple):
    tx: float
    ty: float
    tz: float


@dataclass(frozen=True)
class Corners3D:
    """Eight ordered box corners, shape ``(8, 3)``, tagged with their frame."""

    points: np.ndarray
    frame: str = "object"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.shape != (8, 3):
            raise ValueError(f"expected (8, 3) corners, got {pts.shape}")
        if self.frame not in ("object", "camera"):
            raise ValueError(f"unknown frame {self.frame!r}")
        object.__setattr__(self, "points", pts)


def check_box(b) -> Box2D:
    b = Box2D(*map(float, b))
    if not all(math.isfinite(v) for v in b):
        raise ValueError(f"non-finite box {b}")
    if not (b.x_min < b.x_max and b.y_min < b.y_max):
        raise ValueError(f"empty box {b}")
    return b


def check_dims(d) -> Dims3D:
    d = Dims3D(*map(float, d))
    if not all(math.isfinite(v) and v > 0 for v in d):
        raise ValueError(f"dimensions must be positive, got {d}")
    return d


def camera_matrix(p) -> np.ndarray:
    """Validate and return a 3x4 projection matrix (accepts 12 row-major values)."""
    P = np.asarray(p, dtype=float).reshape(3, 4)
    if not np.all(np.isfinite(P)):
        raise ValueError("camera matrix has non-finite entries")
    if abs(np.linalg.det(P[:, :3])) < 1e-12:
        raise ValueError("camera matrix left 3x3 block is singular")
    return P


def decompose_projection(P) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split ``P = K [R | t]`` into intrinsics, rotation and translation.

    ``K`` is upper triangular with a positive diagonal and ``R`` is a proper
    rotation. For a rectified KITTI matrix ``R`` is the identity and ``t``
    holds the stereo baseline offset.
    """
    P = np.asarray(P, dtype=float).reshape(3, 4)
    K, R = scipy.linalg.rq(P[:, :3])
    signs = np.diag(np.sign(np.diag(K)))
    K, R = K @ signs, signs @ R
    if np.linalg.det(R) < 0:
        K, R = -K, -R
    t = np.linalg.solve(K, P[:, 3])
    scale = K[2, 2]
    return K / scale, R, t


def normalize_angle(a):
    """Wrap an angle (scalar or array) into ``(-pi, pi]``."""
    if np.ndim(a) == 0:
        r = math.fmod(float(a) + math.pi, TWO_PI)
        if r <= 0.0:
            r += TWO_PI
        return r - math.pi
    a = np.asarray(a, dtype=float)
    r = np.fmod(a + math.pi, TWO_PI)
    r = np.where(r <= 0.0, r + TWO_PI, r)
    return r - math.pi


def rot_y(alpha: float) -> np.ndarray:
    """Rotation about the camera y axis: ``x' = x cos a + z sin a``, ``z' = -x sin a + z cos a``."""
    c, s = math.cos(alpha), math.sin(alpha)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def corners_at_origin(d) -> Corners3D:
    h, w, l = check_dims(d)
    pts = _CORNER_SIGNS * np.array([l / 2.0, h, w / 2.0])
    return Corners3D(pts + 0.0, "object")


def transform_corners(c: Corners3D, alpha_g: float, t) -> Corners3D:
    """Place object-frame corners in the camera frame: ``R_y(alpha_g) x + t``."""
    if c.frame != "object":
        raise ValueError("transform_corners expects object-frame corners")
    pts = c.points @ rot_y(alpha_g).T + np.asarray(t, dtype=float)
    return Corners3D(pts, "camera")


def inverse_transform_corners(c: Corners3D, alpha_g: float, t) -> Corners3D:
    if c.frame != "camera":
        raise ValueError("inverse_transform_corners expects camera-frame corners")
    pts = (c.points - np.asarray(t, dtype=float)) @ rot_y(alpha_g)
    return Corners3D(pts, "object")


def box_corners(d, alpha_g: float, t) -> np.ndarray:
    """Camera-frame corners of a box as an ``(8, 3)`` array."""
    return transform_corners(corners_at_origin(d), alpha_g, t).points


def project(pt, P) -> np.ndarray:
    """Pinhole projection of one camera-frame point to pixel coordinates."""
    P = np.asarray(P, dtype=float).reshape(3, 4)
    x = P @ np.append(np.asarray(pt, dtype=float), 1.0)
    if abs(x[2]) < 1e-9:
        raise DegenerateDepth(f"point {pt} lies on the principal plane")
    return x[:2] / x[2]


def project_points(pts, P) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised projection of ``(..., 3)`` points; returns ``(uv, depth)``."""
    P = np.asarray(P, dtype=float).reshape(3, 4)
    pts = np.asarray(pts, dtype=float)
    hom = pts @ P[:, :3].T + P[:, 3]
    lam = hom[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = hom[..., :2] / lam[..., None]
    return uv, lam


def projected_bbox(c, P) -> Box2D:
    """Tight image rectangle around the eight projected corners."""
    pts = c.points if isinstance(c, Corners3D) else np.asarray(c, dtype=float)
    uv, lam = project_points(pts, P)
    if np.any(lam <= 0.0):
        raise BehindCamera("box has corners with non-positive depth")
    lo, hi = uv.min(axis=0), uv.max(axis=0)
    return Box2D(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def ray_angle(b, P) -> float:
    """Horizontal angle of the viewing ray through the box centre.

    Signed so that ``local_to_global`` reproduces KITTI labels: a box right
    of the principal point gives a negative angle, i.e. the angle equals
    ``-atan2(x, z)`` of the object centre.
    """
    K, _, _ = decompose_projection(P)
    f_u, c_u = K[0, 0], K[0, 2]
    u_c = 0.5 * (b[0] + b[2])
    return normalize_angle(math.atan2(c_u - u_c, f_u))


def local_to_global(alpha_l: float, theta_ray: float) -> float:
    return normalize_angle(alpha_l - theta_ray)


def global_to_local(alpha_g: float, theta_ray: float) -> float:
    return normalize_angle(alpha_g + theta_ray)


def iou_2d(a, b) -> float:
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return float(inter / union)


def iou_2d_many(a, boxes: np.ndarray) -> np.ndarray:
    """IoU of one box against an ``(N, 4)`` array of boxes."""
    boxes = np.asarray(boxes, dtype=float)
    ix = np.clip(np.minimum(a[2], boxes[:, 2]) - np.maximum(a[0], boxes[:, 0]), 0.0, None)
    iy = np.clip(np.minimum(a[3], boxes[:, 3]) - np.maximum(a[1], boxes[:, 1]), 0.0, None)
    inter = ix * iy
    area_b = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    union = (a[2] - a[0]) * (a[3] - a[1]) + area_b - inter
    return inter / union
