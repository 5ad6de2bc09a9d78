"""KITTI object label / calibration text formats and ground-truth perturbation.

Label lines hold 15 whitespace-separated fields (16 with a detection score)::

    type truncated occluded alpha x1 y1 x2 y2 h w l x y z rotation_y [score]
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from monolift import geometry as geo
from monolift.errors import (
    Degenerate,
    FieldCount,
    IoFailure,
    MissingP2,
    MissingScore,
    NoValidSolution,
    ParseError,
    RangeError,
)
from monolift.shiftnet import Sample, make_sample
from monolift.synthetic import IMAGE_SIZE

DONT_CARE = "DontCare"


@dataclass(frozen=True)
class LabelRecord:
    class_name: str
    truncated: float
    occluded: int
    alpha: float
    bbox: geo.Box2D
    dims: geo.Dims3D
    location: geo.Translation
    rotation_y: float
    score: float | None = None

    @property
    def is_dont_care(self) -> bool:
        return self.class_name == DONT_CARE


@dataclass
class CalibRecord:
    p2: np.ndarray
    matrices: dict[str, np.ndarray]


@dataclass(frozen=True)
class PerturbSpec:
    """Gaussian noise applied to a ground-truth box before re-projection.

    ``t_std`` is per axis in metres; ``t_std_depth`` adds ``t_std_depth * tz``
    to the depth std. ``d_std`` is multiplicative (log-normal) and ``a_std``
    is in radians.
    """

    t_std: tuple[float, float, float] = (0.25, 0.10, 0.0)
    t_std_depth: float = 0.02
    d_std: float = 0.08
    a_std: float = 0.05
    seed: int = 0
    image_size: tuple[int, int] = IMAGE_SIZE
    max_redraws: int = 20

    def __post_init__(self):
        if min(self.t_std) < 0 or self.t_std_depth < 0 or self.d_std < 0 or self.a_std < 0:
            raise ValueError("noise standard deviations must be non-negative")

    @classmethod
    def zero(cls, **kw) -> "PerturbSpec":
        return cls(t_std=(0.0, 0.0, 0.0), t_std_depth=0.0, d_std=0.0, a_std=0.0, **kw)


def _decode(line) -> str:
    if isinstance(line, (bytes, bytearray)):
        try:
            return bytes(line).decode("utf-8")
        except UnicodeDecodeError as e:
            raise ParseError(f"label line is not UTF-8: {e}") from e
    return line


def _float(tok: str, name: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"field {name}: {tok!r} is not a number") from None
    if not math.isfinite(v):
        raise ParseError(f"field {name}: {tok!r} is not finite")
    return v


def parse_label_line(line) -> LabelRecord:
    tokens = _decode(line).split()
    if len(tokens) not in (15, 16):
        raise FieldCount(f"expected 15 or 16 fields, got {len(tokens)}")
    names = ["truncated", "occluded", "alpha", "x1", "y1", "x2", "y2", "h", "w", "l", "x", "y", "z", "rotation_y", "score"]
    v = [_float(t, n) for t, n in zip(tokens[1:], names)]
    if v[1] != int(v[1]) or int(v[1]) not in (-1, 0, 1, 2, 3):
        raise RangeError(f"occluded must be one of -1..3, got {tokens[2]}")
    return LabelRecord(
        class_name=tokens[0],
        truncated=v[0],
        occluded=int(v[1]),
        alpha=v[2],
        bbox=geo.Box2D(*v[3:7]),
        dims=geo.Dims3D(*v[7:10]),
        location=geo.Translation(*v[10:13]),
        rotation_y=v[13],
        score=v[14] if len(v) == 15 else None,
    )


def write_label_line(r: LabelRecord, precision: int = 2, score_precision: int = 4) -> str:
    """Format a record in KITTI field order (``%.2f`` like the devkit by default)."""
    p = precision
    fields = [r.class_name, f"{r.truncated:.2f}", str(int(r.occluded)), f"{r.alpha:.{p}f}"]
    fields += [f"{v:.{p}f}" for v in (*r.bbox, *r.dims, *r.location)]
    fields.append(f"{r.rotation_y:.{p}f}")
    if r.score is not None:
        fields.append(f"{r.score:.{score_precision}f}")
    return " ".join(fields)


def read_labels(path) -> list[LabelRecord]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    return [parse_label_line(line) for line in text.splitlines() if line.strip()]


def atomic_write(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    try:
        tmp.write_text(text, encoding="utf-8")
        tmp.replace(path)
    except OSError as e:
        tmp.unlink(missing_ok=True)
        raise IoFailure(f"cannot write {path}: {e}") from e


def write_labels(records, path, precision: int = 2) -> None:
    atomic_write(path, "".join(write_label_line(r, precision) + "\n" for r in records))


def write_detection(records, path) -> None:
    """Write scored detections, one KITTI line each."""
    records = list(records)
    for r in records:
        if r.score is None:
            raise MissingScore(f"detection {r.class_name} at {r.location} has no score")
    write_labels(records, path)


def parse_calib(text: str) -> CalibRecord:
    matrices = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, sep, rest = line.partition(":")
        if not sep:
            raise ParseError(f"calibration line without 'KEY:' prefix: {line[:40]!r}")
        try:
            matrices[key.strip()] = np.array([float(t) for t in rest.split()])
        except ValueError:
            raise ParseError(f"non-numeric value in calibration key {key.strip()}") from None
    if "P2" not in matrices:
        raise MissingP2("calibration has no P2 entry")
    if matrices["P2"].size != 12:
        raise ParseError(f"P2 needs 12 values, got {matrices['P2'].size}")
    try:
        p2 = geo.camera_matrix(matrices["P2"])
    except ValueError as e:
        raise ParseError(f"P2 is not a usable projection: {e}") from None
    return CalibRecord(p2, matrices)


def read_calib(path) -> CalibRecord:
    try:
        return parse_calib(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e


def format_calib(P, extra: dict | None = None) -> str:
    mats = dict(extra or {})
    mats["P2"] = np.asarray(P, dtype=float).reshape(12)
    return "".join(f"{k}: " + " ".join(f"{v:.12e}" for v in np.ravel(m)) + "\n" for k, m in mats.items())


def draw_perturbation(r: LabelRecord, spec: PerturbSpec, rng: np.random.Generator):
    """One noisy ``(location, dims, rotation_y)`` draw around ``r``, no rejection."""
    loc = np.asarray(r.location, dtype=float)
    std = np.array(spec.t_std) + np.array([0.0, 0.0, spec.t_std_depth * loc[2]])
    t = loc + rng.normal(0.0, 1.0, 3) * std
    d = np.maximum(np.asarray(r.dims, dtype=float) * np.exp(rng.normal(0.0, 1.0, 3) * spec.d_std), 0.1)
    ry = geo.normalize_angle(r.rotation_y + rng.normal(0.0, 1.0) * spec.a_std)
    return t, d, ry


def perturb_record(r: LabelRecord, spec: PerturbSpec, P, rng: np.random.Generator | None = None) -> Sample:
    """Jitter a ground-truth box, re-project it, and lift the result.

    The sample's inputs (2D box, dimensions, yaw) describe the jittered box;
    its target stays at the original location. Draws that leave the image,
    come closer than 0.5 m, or have no lift solution are redrawn.
    """
    if r.is_dont_care:
        raise ValueError("DontCare rows carry no object")
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    for _ in range(spec.max_redraws):
        t, d, ry = draw_perturbation(r, spec, rng)
        if t[2] <= 0.5:
            continue
        corners = geo.box_corners(d, ry, t)
        _, lam = geo.project_points(corners, P)
        if np.any(lam <= 0.0):
            continue
        bbox = geo.projected_bbox(corners, P)
        w, h = spec.image_size
        if bbox.x_min < 0 or bbox.y_min < 0 or bbox.x_max > w - 1 or bbox.y_max > h - 1:
            continue
        alpha_l = geo.global_to_local(ry, geo.ray_angle(bbox, P))
        try:
            return make_sample(bbox, d, alpha_l, P, r.location, r.class_name)
        except NoValidSolution:
            continue
    raise Degenerate(f"no usable perturbation after {spec.max_redraws} draws")
