"""Registration quality metrics and ground-truth handling."""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .transform import TransformModel, estimate, parse_transform

MIN_CONTROL_POINTS = 4


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Either a sensed-to-reference model or control-point pairs.

    ``points`` rows are ``(x_ref, y_ref, x_sen, y_sen)``.
    """

    model: TransformModel | None = None
    points: np.ndarray | None = None

    def __post_init__(self):
        if (self.model is None) == (self.points is None):
            raise ValueError("ground truth needs exactly one of model or points")
        if self.points is not None:
            pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 4)
            if len(pts) < MIN_CONTROL_POINTS:
                raise ValueError(f"need at least {MIN_CONTROL_POINTS} control points, got {len(pts)}")
            object.__setattr__(self, "points", pts)

    def as_model(self) -> TransformModel:
        if self.model is not None:
            return self.model
        return estimate("projective", self.points[:, 2:], self.points[:, :2])


def classify_correct(ref_points, sen_points, gt: GroundTruth, tol: float = 3.0) -> int:
    """Count pairs whose sensed point lands within ``tol`` px of its reference point."""
    ref = np.asarray(ref_points, dtype=np.float64).reshape(-1, 2)
    sen = np.asarray(sen_points, dtype=np.float64).reshape(-1, 2)
    if len(ref) == 0:
        return 0
    mapped = gt.as_model().apply(sen)
    return int(np.sum(np.hypot(*(mapped - ref).T) <= tol))


def cmr(n_correct: int, n_total: int) -> float:
    """Correct matching rate; undefined (ValueError) when nothing was matched."""
    if n_total < 0 or n_correct < 0:
        raise ValueError("counts must be non-negative")
    if n_total == 0:
        raise ValueError("CMR is meaningless for zero matches")
    return n_correct / n_total


def rmse(ref_points, sen_points) -> float:
    ref = np.asarray(ref_points, dtype=np.float64).reshape(-1, 2)
    sen = np.asarray(sen_points, dtype=np.float64).reshape(-1, 2)
    if len(ref) == 0:
        raise ValueError("RMSE of an empty point set")
    if ref.shape != sen.shape:
        raise ValueError("point set sizes differ")
    return math.sqrt(float(np.sum((ref - sen) ** 2)) / len(ref))


def parse_control_points(text: str) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"line {lineno}: expected 4 numbers, got {len(parts)}")
        rows.append([float(p) for p in parts])
    return np.array(rows, dtype=np.float64).reshape(-1, 4)


def load_ground_truth(path) -> GroundTruth:
    """Read a transform file or a control-point list (auto-detected)."""
    with open(os.fspath(path)) as fh:
        text = fh.read()
    first = next((ln.split("#", 1)[0].strip() for ln in text.splitlines()
                  if ln.split("#", 1)[0].strip()), "")
    if first in ("similarity", "affine", "projective"):
        return GroundTruth(model=parse_transform(text))
    return GroundTruth(points=parse_control_points(text))


@dataclass
class RegistrationReport:
    n_keypoints_ref: int = 0
    n_keypoints_sen: int = 0
    n_initial: int = 0
    n_oriented: int = 0
    n_ransac: int = 0
    n_correct: int | None = None
    cmr: float | None = None
    rmse_px: float | None = None
    model_kind: str = "affine"
    matrix: list | None = None
    unreliable: bool = False
    kernel_backend: str = ""
    stage_times_s: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.n_ransac

    @property
    def Nc(self):
        return self.n_correct

    def to_dict(self, include_timing: bool = True) -> dict:
        d = asdict(self)
        if not include_timing:
            d.pop("stage_times_s")
        return d

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True)
