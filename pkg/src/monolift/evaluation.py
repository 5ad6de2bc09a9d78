"""Rotated BEV/3D overlap and KITTI-style average precision."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from monolift import geometry as geo
from monolift.errors import EmptyGroundTruth, EmptyInput


class Box3D(NamedTuple):
    """Minimal 3D box with the same attribute names as a label record."""

    dims: geo.Dims3D
    location: geo.Translation
    rotation_y: float


class OrientedBoxBEV(NamedTuple):
    x: float
    z: float
    l: float  # noqa: E741
    w: float
    yaw: float

    @classmethod
    def from_box(cls, box) -> "OrientedBoxBEV":
        h, w, l = box.dims
        return cls(box.location[0], box.location[2], l, w, box.rotation_y)

    def polygon(self) -> np.ndarray:
        """Footprint corners in the x-z plane, counter-clockwise."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        local = np.array([[1, -1], [1, 1], [-1, 1], [-1, -1]]) * [self.l / 2, self.w / 2]
        rot = np.array([[c, s], [-s, c]])
        return local @ rot.T + [self.x, self.z]


@dataclass(frozen=True)
class Difficulty:
    name: str
    min_height: float
    max_occlusion: int
    max_truncation: float

    def accepts(self, rec) -> bool:
        return (
            rec.bbox[3] - rec.bbox[1] >= self.min_height
            and rec.occluded <= self.max_occlusion
            and rec.truncated <= self.max_truncation
        )


EASY = Difficulty("Easy", 40.0, 0, 0.15)
MODERATE = Difficulty("Moderate", 25.0, 1, 0.30)
HARD = Difficulty("Hard", 25.0, 2, 0.50)
DIFFICULTIES = (EASY, MODERATE, HARD)

DEFAULT_IOU = {"Car": 0.7, "Pedestrian": 0.5, "Cyclist": 0.5}
# ground truth of these classes is neither a positive nor a false-positive trap
NEIGHBOR_CLASSES = {"Car": ("Van",), "Pedestrian": ("Person_sitting",)}


@dataclass
class PrCurve:
    recall: np.ndarray
    precision: np.ndarray
    ap: float
    num_gt: int = 0
    scores: np.ndarray = field(default_factory=lambda: np.zeros(0))


def polygon_area(poly) -> float:
    poly = np.asarray(poly, dtype=float)
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _ccw(poly: np.ndarray) -> np.ndarray:
    x, y = poly[:, 0], poly[:, 1]
    signed = np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))
    return poly if signed >= 0 else poly[::-1]


def clip_polygon(subject, clip) -> list[tuple[float, float]]:
    """Sutherland-Hodgman: clip a polygon by each edge of a convex CCW polygon."""
    out = [tuple(p) for p in subject]
    clip = [tuple(p) for p in clip]

    def cross(a, b, p):
        return (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])

    for i in range(len(clip)):
        if not out:
            break
        a, b = clip[i - 1], clip[i]
        src, out = out, []
        s = src[-1]
        ds = cross(a, b, s)
        for e in src:
            de = cross(a, b, e)
            if de >= 0:
                if ds < 0:
                    r = ds / (ds - de)
                    out.append((s[0] + r * (e[0] - s[0]), s[1] + r * (e[1] - s[1])))
                out.append(e)
            elif ds >= 0:
                r = ds / (ds - de)
                out.append((s[0] + r * (e[0] - s[0]), s[1] + r * (e[1] - s[1])))
            s, ds = e, de
    return out


def polygon_intersection_area(a, b) -> float:
    a = _ccw(np.asarray(a, dtype=float))
    b = _ccw(np.asarray(b, dtype=float))
    inter = clip_polygon(a, b)
    return polygon_area(inter) if len(inter) >= 3 else 0.0


def iou_bev(a: OrientedBoxBEV, b: OrientedBoxBEV) -> float:
    inter = polygon_intersection_area(a.polygon(), b.polygon())
    union = a.l * a.w + b.l * b.w - inter
    return float(min(max(inter / union, 0.0), 1.0))


def iou_3d(a, b) -> float:
    """Volume IoU of two boxes rotated about y only (bottom-centre anchored)."""
    inter_bev = polygon_intersection_area(
        OrientedBoxBEV.from_box(a).polygon(), OrientedBoxBEV.from_box(b).polygon()
    )
    ha, hb = a.dims[0], b.dims[0]
    ya, yb = a.location[1], b.location[1]
    overlap = max(0.0, min(ya, yb) - max(ya - ha, yb - hb))
    inter = inter_bev * overlap
    vol_a = a.dims[0] * a.dims[1] * a.dims[2]
    vol_b = b.dims[0] * b.dims[1] * b.dims[2]
    return float(min(max(inter / (vol_a + vol_b - inter), 0.0), 1.0))


def iou_bev_boxes(a, b) -> float:
    return iou_bev(OrientedBoxBEV.from_box(a), OrientedBoxBEV.from_box(b))


def interpolated_ap(recall: np.ndarray, precision: np.ndarray, points: int = 11) -> float:
    """Mean of max-precision-to-the-right over sampled recall levels.

    ``points=11`` samples ``0, 0.1, ..., 1``; ``points=40`` samples
    ``1/40, ..., 1`` (the later KITTI rule, which drops recall 0).
    """
    if points == 11:
        levels = np.linspace(0.0, 1.0, 11)
    elif points == 40:
        levels = np.linspace(1.0 / 40, 1.0, 40)
    else:
        raise ValueError("points must be 11 or 40")
    total = 0.0
    for r in levels:
        mask = recall >= r - 1e-12
        total += float(precision[mask].max()) if mask.any() else 0.0
    return total / len(levels)


def _match_image(gts, dets, iou_fn, threshold, diff, cls, strict):
    """Greedy matching inside one image.

    Returns ``(num_positive_gt, [(score, is_tp)])``; ignored detections are dropped.
    """
    care, ignore = [], []
    neighbors = NEIGHBOR_CLASSES.get(cls, ())
    for g in gts:
        if g.class_name == cls:
            if diff is None or diff.accepts(g):
                care.append(g)
            elif not strict:
                ignore.append(g)
        elif g.class_name in neighbors and not strict:
            ignore.append(g)

    cand = [d for d in dets if d.class_name == cls]
    cand.sort(key=lambda d: -d.score)
    care_used = [False] * len(care)
    ignore_used = [False] * len(ignore)
    results = []
    for d in cand:
        best, best_iou = -1, -1.0
        for j, g in enumerate(care):
            if care_used[j]:
                continue
            v = iou_fn(d, g)
            if v >= threshold and v > best_iou:
                best, best_iou = j, v
        if best >= 0:
            care_used[best] = True
            results.append((d.score, True))
            continue
        hit = -1
        for j, g in enumerate(ignore):
            if not ignore_used[j] and iou_fn(d, g) >= threshold:
                hit = j
                break
        if hit >= 0:
            ignore_used[hit] = True
            continue
        if not strict and diff is not None and d.bbox[3] - d.bbox[1] < diff.min_height:
            continue
        results.append((d.score, False))
    return len(care), results


def average_precision(
    gt: dict | Sequence,
    det: dict | Sequence,
    iou_fn: Callable = iou_3d,
    iou_threshold: float = 0.7,
    diff: Difficulty | None = MODERATE,
    cls: str = "Car",
    points: int = 11,
    strict: bool = False,
) -> PrCurve:
    """AP for one class over a set of images.

    ``gt`` and ``det`` map an image id to its records (a plain sequence is a
    single image). Detections are consumed in descending score order; each
    claims the unmatched ground truth it overlaps most, provided the overlap
    reaches ``iou_threshold``. Ground truth rejected by ``diff`` (and
    detections landing on it) is ignored unless ``strict`` is set.

    Raises:
        EmptyGroundTruth: no positive ground truth for this class/difficulty.
    """
    if not isinstance(gt, dict):
        gt, det = {0: list(gt)}, {0: list(det)}
    num_gt, scored = 0, []
    for key in sorted(gt, key=str):
        n, res = _match_image(gt[key], det.get(key, ()), iou_fn, iou_threshold, diff, cls, strict)
        num_gt += n
        scored.extend(res)
    if num_gt == 0:
        raise EmptyGroundTruth(f"no ground truth for {cls} ({diff.name if diff else 'all'})")
    if not scored:
        return PrCurve(np.zeros(0), np.zeros(0), 0.0, num_gt)
    scores = np.array([s for s, _ in scored])
    tp = np.array([t for _, t in scored], dtype=float)
    order = np.argsort(-scores, kind="stable")
    tp, scores = tp[order], scores[order]
    ctp = np.cumsum(tp)
    recall = ctp / num_gt
    precision = ctp / np.arange(1, len(tp) + 1)
    return PrCurve(recall, precision, interpolated_ap(recall, precision, points), num_gt, scores)


def accuracy_at_iou(pairs, threshold: float = 0.7, iou_fn: Callable = iou_3d) -> float:
    """Percentage of ``(pred, gt)`` pairs whose overlap reaches ``threshold``."""
    pairs = list(pairs)
    if not pairs:
        raise EmptyInput("no box pairs to score")
    hits = sum(iou_fn(p, g) >= threshold for p, g in pairs)
    return 100.0 * hits / len(pairs)
