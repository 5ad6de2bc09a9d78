"""Closed-form 3D translation from a 2D box, dimensions and orientation.

Each side of the 2D box is tied to one corner of the 3D box. Every tie gives
one linear equation in the unknown translation, and the four equations are
solved in the least-squares sense. Of the 64 possible corner assignments the
one whose reprojected box overlaps the input box best is kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from monolift import geometry as geo
from monolift.errors import NoValidSolution, SingularSystem

MAX_CONDITION = 1e12  # on A^T A
MIN_TZ = 0.5
MIN_CORNER_DEPTH = 0.1


class Configuration(NamedTuple):
    """Corner indices (see ``geometry``) assigned to the four 2D box sides.

    ``xmin_edge``/``xmax_edge`` name vertical edges by their bottom corner.
    """

    xmin_edge: int
    xmax_edge: int
    ymin_corner: int
    ymax_corner: int

    def corners(self) -> tuple[int, int, int, int]:
        """Corner used for the x_min, y_min, x_max, y_max rows, in that order."""
        return (self.xmin_edge, self.ymin_corner, self.xmax_edge, self.ymax_corner)


class ConstraintRow(NamedTuple):
    a: np.ndarray
    b: float


@dataclass(frozen=True)
class LiftSolution:
    translation: geo.Translation
    configuration: Configuration
    reprojection_iou: float
    residual_norm: float
    alpha_g: float
    index: int


def enumerate_configurations() -> list[Configuration]:
    configs = []
    for edge in geo.BOTTOM:
        opposite = (edge + 2) % 4
        for top in geo.TOP:
            for bottom in geo.BOTTOM:
                configs.append(Configuration(edge, opposite, top, bottom))
    return configs


CONFIGURATIONS = enumerate_configurations()
_CORNER_TABLE = np.array([c.corners() for c in CONFIGURATIONS])  # (64, 4)


def _rows(P: np.ndarray, rotated: np.ndarray, sides: np.ndarray):
    """Rows of the linear system for corners ``rotated[..., 4, 3]``.

    ``M = P [[I, R x_o], [0, 1]]`` shares its left 3x3 block with ``P``; only
    the last column depends on the corner.
    """
    m4 = rotated @ P[:, :3].T + P[:, 3]  # (..., 4, 3): column 4 of each M
    coord = np.array([0, 1, 0, 1])  # x, y, x, y sides
    m_side = P[coord, :3]  # (4, 3): m_1 or m_2
    a = m_side - sides[:, None] * P[2, :3]
    a = np.broadcast_to(a, m4.shape).copy()
    b = m4[..., 2] * sides - m4[..., np.arange(4), coord]
    return a, b


def build_system(cfg: Configuration, b2d, d, alpha_g: float, P) -> list[ConstraintRow]:
    """Four constraint rows, ordered x_min, y_min, x_max, y_max."""
    P = np.asarray(P, dtype=float).reshape(3, 4)
    local = geo.corners_at_origin(d).points[list(cfg.corners())]
    rotated = local @ geo.rot_y(alpha_g).T
    a, b = _rows(P, rotated, np.asarray(b2d, dtype=float))
    return [ConstraintRow(a[i], float(b[i])) for i in range(4)]


def solve_normal_equations(rows) -> geo.Translation:
    """Least-squares minimiser of ``||A t - b||`` through a QR factorisation."""
    A = np.array([r.a for r in rows], dtype=float)
    b = np.array([r.b for r in rows], dtype=float)
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] == 0.0 or (s[0] / s[-1]) ** 2 > MAX_CONDITION:
        raise SingularSystem("normal matrix is numerically singular")
    q, r = np.linalg.qr(A)
    return geo.Translation(*np.linalg.solve(r, q.T @ b))


def _solve_many(A: np.ndarray, b: np.ndarray):
    """Batched version of ``solve_normal_equations``; singular rows come back NaN."""
    s = np.linalg.svd(A, compute_uv=False)
    with np.errstate(divide="ignore"):
        ok = (s[:, -1] > 0.0) & ((s[:, 0] / s[:, -1]) ** 2 <= MAX_CONDITION)
    t = np.full((len(A), 3), np.nan)
    if ok.any():
        q, r = np.linalg.qr(A[ok])
        t[ok] = np.linalg.solve(r, np.einsum("nij,ni->nj", q, b[ok])[..., None])[..., 0]
    return t, ok


def lift_candidates(b2d, d, alpha_g: float, P):
    """Solve all 64 configurations at once.

    Returns ``(t, iou, residual, valid)`` arrays indexed like ``CONFIGURATIONS``.
    """
    P = np.asarray(P, dtype=float).reshape(3, 4)
    local = geo.corners_at_origin(d).points
    rotated = local @ geo.rot_y(alpha_g).T
    sides = np.asarray(b2d, dtype=float)
    a, b = _rows(P, rotated[_CORNER_TABLE], sides)
    t, ok = _solve_many(a, b)
    residual = np.full(len(t), np.inf)
    residual[ok] = np.linalg.norm(np.einsum("nij,nj->ni", a[ok], t[ok]) - b[ok], axis=1)

    corners = rotated[None, :, :] + t[:, None, :]
    uv, lam = geo.project_points(corners, P)
    valid = ok & (t[:, 2] > MIN_TZ)
    with np.errstate(invalid="ignore"):
        valid &= np.all(lam > MIN_CORNER_DEPTH, axis=1)
    iou = np.zeros(len(t))
    if valid.any():
        boxes = np.concatenate([uv[valid].min(axis=1), uv[valid].max(axis=1)], axis=1)
        iou[valid] = geo.iou_2d_many(sides, boxes)
    return t, iou, residual, valid


def lift(b2d, d, alpha_l: float, P) -> LiftSolution:
    """Recover the translation of a box seen as ``b2d`` with local yaw ``alpha_l``."""
    b2d = geo.check_box(b2d)
    d = geo.check_dims(d)
    alpha_g = geo.local_to_global(alpha_l, geo.ray_angle(b2d, P))
    return lift_global(b2d, d, alpha_g, P)


def lift_global(b2d, d, alpha_g: float, P) -> LiftSolution:
    """Same as ``lift`` when the global yaw is already known."""
    t, iou, residual, valid = lift_candidates(b2d, d, alpha_g, P)
    if not valid.any():
        raise NoValidSolution("all 64 configurations were rejected")
    idx = np.flatnonzero(valid)
    # lexsort: last key is primary
    best = int(idx[np.lexsort((idx, residual[idx], -iou[idx]))[0]])
    return LiftSolution(
        translation=geo.Translation(*map(float, t[best])),
        configuration=CONFIGURATIONS[best],
        reprojection_iou=float(iou[best]),
        residual_norm=float(residual[best]),
        alpha_g=float(alpha_g),
        index=best,
    )


def lift_reference(b2d, d, alpha_g: float, P) -> LiftSolution:
    """Unvectorised loop over configurations; kept as a cross-check for ``lift_global``."""
    P = np.asarray(P, dtype=float).reshape(3, 4)
    best = None
    for i, cfg in enumerate(CONFIGURATIONS):
        rows = build_system(cfg, b2d, d, alpha_g, P)
        try:
            t = solve_normal_equations(rows)
        except SingularSystem:
            continue
        if t.tz <= MIN_TZ:
            continue
        corners = geo.box_corners(d, alpha_g, t)
        _, lam = geo.project_points(corners, P)
        if np.any(lam <= MIN_CORNER_DEPTH):
            continue
        iou = geo.iou_2d(b2d, geo.projected_bbox(corners, P))
        res = math.sqrt(sum((float(r.a @ np.asarray(t)) - r.b) ** 2 for r in rows))
        key = (-iou, res, i)
        if best is None or key < best[0]:
            best = (key, LiftSolution(t, cfg, iou, res, float(alpha_g), i))
    if best is None:
        raise NoValidSolution("all 64 configurations were rejected")
    return best[1]
