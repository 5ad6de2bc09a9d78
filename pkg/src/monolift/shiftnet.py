"""Fully connected translation refiner trained with the Volume Displacement Loss.

The network sees the closed-form translation together with the quantities it
was solved from (2D box, dimensions, yaw encodings, camera matrix) and
regresses a corrected translation. Forward and backward passes are written
out by hand in numpy.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from monolift import geometry as geo
from monolift.errors import EmptyDataset, FormatVersionMismatch, IoFailure, UnfittedScaler
from monolift.lift import lift
from monolift.losses import vdl_batch

log = logging.getLogger(__name__)

N_FEATURES = 26
FEATURE_NAMES = (
    ["tp_x", "tp_y", "tp_z", "x_min", "y_min", "x_max", "y_max", "h", "w", "l"]
    + ["sin_alpha_l", "cos_alpha_l", "sin_alpha_g", "cos_alpha_g"]
    + [f"p{i}{j}" for i in range(3) for j in range(4)]
)
MAGIC = b"SHNET"
FORMAT_VERSION = 1


def feature_vector(t_prime, bbox, dims, alpha_l, alpha_g, P) -> np.ndarray:
    """Raw (unstandardised) network input, laid out as ``FEATURE_NAMES``."""
    return np.concatenate(
        [
            np.asarray(t_prime, dtype=float),
            np.asarray(bbox, dtype=float),
            np.asarray(dims, dtype=float),
            [math.sin(alpha_l), math.cos(alpha_l), math.sin(alpha_g), math.cos(alpha_g)],
            np.asarray(P, dtype=float).reshape(12),
        ]
    )


@dataclass
class Sample:
    """One training example: stage-2 inputs/outputs plus the true translation."""

    t_prime: geo.Translation
    bbox: geo.Box2D
    dims: geo.Dims3D
    alpha_l: float
    alpha_g: float
    P: np.ndarray
    target: geo.Translation
    class_name: str = "Car"

    def __post_init__(self):
        if self.target[2] <= 0:
            raise ValueError("target must lie in front of the camera")

    def features(self) -> np.ndarray:
        return feature_vector(self.t_prime, self.bbox, self.dims, self.alpha_l, self.alpha_g, self.P)

    def to_json(self) -> str:
        return json.dumps(
            {
                "class_name": self.class_name,
                "t_prime": list(map(float, self.t_prime)),
                "bbox": list(map(float, self.bbox)),
                "dims": list(map(float, self.dims)),
                "alpha_l": float(self.alpha_l),
                "alpha_g": float(self.alpha_g),
                "P": [float(v) for v in np.asarray(self.P).reshape(12)],
                "target": list(map(float, self.target)),
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "Sample":
        d = json.loads(line)
        return cls(
            t_prime=geo.Translation(*d["t_prime"]),
            bbox=geo.Box2D(*d["bbox"]),
            dims=geo.Dims3D(*d["dims"]),
            alpha_l=d["alpha_l"],
            alpha_g=d["alpha_g"],
            P=np.array(d["P"], dtype=float).reshape(3, 4),
            target=geo.Translation(*d["target"]),
            class_name=d.get("class_name", "Car"),
        )


def make_sample(bbox, dims, alpha_l, P, target, class_name="Car") -> Sample:
    """Run the closed-form lift and package the result as a ``Sample``.

    Raises ``NoValidSolution`` when the lift has no admissible configuration.
    """
    sol = lift(bbox, dims, alpha_l, P)
    return Sample(
        t_prime=sol.translation,
        bbox=geo.Box2D(*map(float, bbox)),
        dims=geo.Dims3D(*map(float, dims)),
        alpha_l=float(alpha_l),
        alpha_g=sol.alpha_g,
        P=np.asarray(P, dtype=float).reshape(3, 4),
        target=geo.Translation(*map(float, target)),
        class_name=class_name,
    )


def write_samples(samples, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in samples:
            f.write(s.to_json() + "\n")


def read_samples(path) -> list[Sample]:
    with open(path, encoding="utf-8") as f:
        return [Sample.from_json(line) for line in f if line.strip()]


def stack(samples) -> dict[str, np.ndarray]:
    """Column arrays for a list of samples."""
    return {
        "x": np.array([s.features() for s in samples]),
        "target": np.array([s.target for s in samples], dtype=float),
        "dims": np.array([s.dims for s in samples], dtype=float),
        "alpha_g": np.array([s.alpha_g for s in samples], dtype=float),
    }


@dataclass
class TrainConfig:
    lr: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 64
    pretrain_epochs: int = 200
    finetune_epochs: int = 100
    seed: int = 0
    hidden: int = 1024
    residual: bool = False  # regress a correction to t' instead of t'' itself

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size <= 0 or self.hidden <= 0:
            raise ValueError("learning rate, batch size and width must be positive")
        if self.pretrain_epochs < 0 or self.finetune_epochs < 0:
            raise ValueError("epoch counts must be non-negative")


@dataclass
class Mlp:
    """Two ReLU hidden layers and a linear 3-output head.

    ``weights[i]`` has shape ``(fan_in, fan_out)``; inputs are standardised
    with ``mean``/``scale`` before the first layer.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None
    residual: bool = False
    history: list[float] = field(default_factory=list, compare=False)

    @classmethod
    def init(cls, rng: np.random.Generator, hidden: int = 1024, n_in: int = N_FEATURES, residual=False) -> "Mlp":
        sizes = [n_in, hidden, hidden, 3]
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            limit = math.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-limit, limit, (fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, residual=residual)

    @property
    def params(self) -> list[np.ndarray]:
        return [p for wb in zip(self.weights, self.biases) for p in wb]

    def fit_scaler(self, x: np.ndarray) -> None:
        self.mean = x.mean(axis=0)
        std = x.std(axis=0)
        self.scale = np.where(std > 1e-8, std, 1.0)

    def _standardize(self, x: np.ndarray) -> np.ndarray:
        if self.mean is None or self.scale is None:
            raise UnfittedScaler("feature standardisation has not been fitted")
        return (x - self.mean) / self.scale

    def _run(self, x):
        z = self._standardize(x)
        acts = [z]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w + b
            if i < len(self.weights) - 1:
                z = np.maximum(z, 0.0)
            acts.append(z)
        out = acts[-1] + x[:, :3] if self.residual else acts[-1]
        return out, acts

    def forward(self, x) -> np.ndarray:
        """Refined translations for raw feature rows ``(N, 26)`` (or a single row)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        out, _ = self._run(np.atleast_2d(x))
        return out[0] if single else out

    def backward(self, x, target, dims, alpha_g):
        """Mean VDL over the rows and its gradient for every parameter.

        Returns ``(loss, grads)`` with ``grads`` ordered like ``params``.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = len(x)
        out, acts = self._run(x)
        losses, g = vdl_batch(out, np.atleast_2d(target), np.atleast_2d(dims), np.atleast_1d(alpha_g))
        g = g / n
        grads = [None] * (2 * len(self.weights))
        for i in reversed(range(len(self.weights))):
            grads[2 * i] = acts[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.weights[i].T) * (acts[i] > 0.0)
        return float(losses.mean()), grads


def _batches(n: int, size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, size):
        yield order[start : start + size]


def train(samples, cfg: TrainConfig, phase: str = "pretrain", model: Mlp | None = None) -> Mlp:
    """Fit the refiner with minibatch SGD plus momentum.

    ``pretrain`` builds a fresh network (fitting the standardiser on
    ``samples``); ``finetune`` continues from ``model`` with its standardiser
    unchanged. The per-epoch mean VDL is logged and appended to
    ``model.history``.
    """
    if not samples:
        raise EmptyDataset("no training samples")
    if phase not in ("pretrain", "finetune"):
        raise ValueError(f"unknown phase {phase!r}")
    data = stack(samples)
    rng = np.random.default_rng(cfg.seed if phase == "pretrain" else cfg.seed + 1)
    if phase == "pretrain" or model is None:
        model = Mlp.init(rng, cfg.hidden, residual=cfg.residual)
        model.fit_scaler(data["x"])
        if not cfg.residual:
            model.biases[-1] = data["target"].mean(axis=0)
        epochs = cfg.pretrain_epochs
    else:
        model = copy.deepcopy(model)
        epochs = cfg.finetune_epochs

    velocity = [np.zeros_like(p) for p in model.params]
    n = len(samples)
    for epoch in range(epochs):
        total = 0.0
        for idx in _batches(n, cfg.batch_size, rng):
            loss, grads = model.backward(data["x"][idx], data["target"][idx], data["dims"][idx], data["alpha_g"][idx])
            total += loss * len(idx)
            for p, v, g in zip(model.params, velocity, grads):
                v *= cfg.momentum
                v -= cfg.lr * g
                p += v
        model.history.append(total / n)
        log.info("%s epoch %d/%d mean VDL %.4f", phase, epoch + 1, epochs, total / n)
    return model


def predict(model: Mlp, samples) -> np.ndarray:
    return model.forward(np.array([s.features() for s in samples]))


def mean_vdl(model: Mlp, samples) -> float:
    data = stack(samples)
    losses, _ = vdl_batch(model.forward(data["x"]), data["target"], data["dims"], data["alpha_g"])
    return float(losses.mean())


# Model file: little-endian throughout.
#   b"SHNET" | u32 version | u32 residual | u32 n_features
#   f64[n] mean | f64[n] scale | u32 n_layers
#   per layer: u32 rows | u32 cols | f64[rows*cols] weights (row-major) | f64[cols] bias


def save_model(model: Mlp, path) -> None:
    if model.mean is None or model.scale is None:
        raise UnfittedScaler("cannot save a model without a fitted standardiser")
    n = len(model.mean)
    parts = [MAGIC, struct.pack("<III", FORMAT_VERSION, int(model.residual), n)]
    parts.append(np.asarray(model.mean, dtype="<f8").tobytes())
    parts.append(np.asarray(model.scale, dtype="<f8").tobytes())
    parts.append(struct.pack("<I", len(model.weights)))
    for w, b in zip(model.weights, model.biases):
        parts.append(struct.pack("<II", *w.shape))
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.asarray(b, dtype="<f8").tobytes())
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(b"".join(parts))
        tmp.replace(path)
    except OSError as e:
        raise IoFailure(f"cannot write model to {path}: {e}") from e


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatVersionMismatch("model file is truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, k: int = 1):
        vals = struct.unpack(f"<{k}I", self.take(4 * k))
        return vals[0] if k == 1 else vals

    def f64(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(float)


def load_model(path) -> Mlp:
    try:
        buf = Path(path).read_bytes()
    except OSError as e:
        raise IoFailure(f"cannot read model {path}: {e}") from e
    r = _Reader(buf)
    if r.take(len(MAGIC)) != MAGIC:
        raise FormatVersionMismatch("not a SHNET model file")
    version, residual, n = r.u32(3)
    if version != FORMAT_VERSION:
        raise FormatVersionMismatch(f"unsupported model version {version}")
    mean, scale = r.f64(n), r.f64(n)
    weights, biases = [], []
    for _ in range(r.u32()):
        rows, cols = r.u32(2)
        weights.append(r.f64(rows * cols).reshape(rows, cols))
        biases.append(r.f64(cols))
    if r.pos != len(buf):
        raise FormatVersionMismatch("trailing bytes after model payload")
    return Mlp(weights, biases, mean, scale, bool(residual))
