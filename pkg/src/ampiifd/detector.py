"""Determinant-of-Hessian keypoints in the nonlinear scale space.

Candidates are strict maxima over their 26 space-scale neighbors; each is
refined to subpixel position and fractional level by a quadratic fit of the
response volume, then given its adaptive scale factor ``mu``.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import ConfigError
from .scale_space import NonlinearScaleSpace

# Pixels this close to the frame are skipped: their second derivatives use
# one-sided stencils.
BORDER = 2
MAX_CONDITION = 1e10


@dataclass(frozen=True)
class DetectorParams:
    response_threshold: float = 1e-3
    offset: float = 1.6
    region_multiplier: float = 6.0
    max_keypoints: int = 5000

    def __post_init__(self):
        if not self.response_threshold > 0:
            raise ConfigError("response_threshold: > 0 violated")
        if not self.offset > 0:
            raise ConfigError("offset: > 0 violated")
        if not self.region_multiplier >= 1:
            raise ConfigError("region_multiplier: k ≥ 1 violated")
        if self.max_keypoints < 1:
            raise ConfigError("max_keypoints: ≥ 1 violated")


@dataclass(frozen=True)
class KeyPoint:
    x: float
    y: float
    octave: int
    sublevel: int
    lam: float
    sigma: float
    mu: float
    response: float
    orientation: float = math.nan

    def with_orientation(self, orientation: float) -> "KeyPoint":
        return replace(self, orientation=orientation)


class Candidate(NamedTuple):
    x: int
    y: int
    level: int
    response: float


def _central(img: np.ndarray, axis: int, step: int) -> np.ndarray:
    """``(I(p + step) - I(p - step)) / (2 step)`` with clamped indices."""
    n = img.shape[axis]
    idx = np.arange(n)
    hi = np.take(img, np.minimum(idx + step, n - 1), axis=axis)
    lo = np.take(img, np.maximum(idx - step, 0), axis=axis)
    return (hi - lo) / (2.0 * step)


# stencil step of the Hessian differences, as a fraction of the level sigma
STEP_RATIO = 0.75
# a twice-applied central difference of step h smooths like a Gaussian of
# variance STENCIL_VARIANCE * h**2 (second-order expansion of sin(wh)/h)
STENCIL_VARIANCE = 2.0 / 3.0


def derivative_step(sigma: float) -> int:
    return max(1, int(round(STEP_RATIO * sigma)))


def effective_sigma(sigma: float, step: int) -> float:
    return math.sqrt(sigma * sigma + STENCIL_VARIANCE * step * step)


def hessian_response(level, step: int | None = None) -> np.ndarray:
    """Scale-normalized Hessian determinant ``s**4 (Lxx Lyy - Lxy**2)``.

    Second derivatives come from central differences applied twice with a
    stencil step of ``round(STEP_RATIO * sigma)`` pixels unless ``step`` is
    given.  The normalizing scale ``s`` is the level sigma combined with the
    smoothing of the stencil itself, so the response stays continuous across
    levels where the integer step changes.  ``level`` may also be a bare
    image, which gets step 1 and no normalization.
    """
    if hasattr(level, "image"):
        img = level.image
        step = derivative_step(level.sigma) if step is None else step
        norm = effective_sigma(level.sigma, step) ** 4
    else:
        img, norm = np.asarray(level, dtype=np.float64), 1.0
        step = 1 if step is None else step
    if img.shape[0] < 5 or img.shape[1] < 5:
        raise ValueError(f"hessian response needs at least 5x5 pixels, got {img.shape}")
    lx = _central(img, 1, step)
    ly = _central(img, 0, step)
    lxx = _central(lx, 1, step)
    lxy = _central(lx, 0, step)
    lyy = _central(ly, 0, step)
    return norm * (lxx * lyy - lxy * lxy)


def response_stack(space: NonlinearScaleSpace, fixed_step: int | None = None) -> np.ndarray:
    return np.stack([hessian_response(lv, fixed_step) for lv in space.levels])


def detect_extrema(space: NonlinearScaleSpace, params: DetectorParams,
                   responses: np.ndarray | None = None) -> list[Candidate]:
    """Strict 3x3x3 maxima above threshold, strongest first."""
    if len(space.levels) < 3:
        raise ValueError("extremum detection needs at least 3 levels")
    r = response_stack(space) if responses is None else responses
    n, h, w = r.shape
    b = BORDER
    if h - 2 * b < 1 or w - 2 * b < 1:
        return []
    center = r[1:-1, b:h - b, b:w - b]
    mask = center > params.response_threshold
    for dl in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dl == dy == dx == 0:
                    continue
                nb = r[1 + dl:n - 1 + dl, b + dy:h - b + dy, b + dx:w - b + dx]
                mask &= center > nb
    lv, ys, xs = np.nonzero(mask)
    vals = center[lv, ys, xs]
    lv, ys, xs = lv + 1, ys + b, xs + b
    # strongest first; ties by row, column, level
    order = np.lexsort((lv, xs, ys, -vals))[: params.max_keypoints]
    return [Candidate(int(xs[i]), int(ys[i]), int(lv[i]), float(vals[i])) for i in order]


def refine_offset(cube: np.ndarray):
    """Newton step ``-H^-1 g`` on a 3x3x3 block indexed ``[level, y, x]``.

    Returns the (dx, dy, dlevel) offset, or ``None`` when the Hessian is
    singular or the offset leaves the unit cell.
    """
    c = cube[1, 1, 1]
    g = 0.5 * np.array([
        cube[1, 1, 2] - cube[1, 1, 0],
        cube[1, 2, 1] - cube[1, 0, 1],
        cube[2, 1, 1] - cube[0, 1, 1],
    ])
    dxx = cube[1, 1, 2] - 2 * c + cube[1, 1, 0]
    dyy = cube[1, 2, 1] - 2 * c + cube[1, 0, 1]
    dss = cube[2, 1, 1] - 2 * c + cube[0, 1, 1]
    dxy = 0.25 * (cube[1, 2, 2] - cube[1, 2, 0] - cube[1, 0, 2] + cube[1, 0, 0])
    dxs = 0.25 * (cube[2, 1, 2] - cube[2, 1, 0] - cube[0, 1, 2] + cube[0, 1, 0])
    dys = 0.25 * (cube[2, 2, 1] - cube[2, 0, 1] - cube[0, 2, 1] + cube[0, 0, 1])
    hess = np.array([[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]])
    if not np.all(np.isfinite(hess)) or np.linalg.cond(hess) > MAX_CONDITION:
        return None
    offset = -np.linalg.solve(hess, g)
    if np.any(np.abs(offset) > 1.0):
        return None
    return offset


def refine_subpixel(candidate: Candidate, space: NonlinearScaleSpace,
                    responses: np.ndarray | None = None):
    """Refined ``(x, y, lam)`` for a candidate, or ``None`` if rejected."""
    x, y, i = candidate.x, candidate.y, candidate.level
    if responses is None:
        cube = np.stack([hessian_response(space.levels[j])[y - 1:y + 2, x - 1:x + 2]
                         for j in (i - 1, i, i + 1)])
    else:
        cube = responses[i - 1:i + 2, y - 1:y + 2, x - 1:x + 2]
    offset = refine_offset(cube)
    if offset is None:
        return None
    return x + float(offset[0]), y + float(offset[1]), float(offset[2])


def scale_factor(octave: int, sublevel: int, lam: float, num_sublevels: int = 4,
                 offset: float = 1.6) -> float:
    """Adaptive scale ``offset * 2 ** (o + (s + lam) / S)``."""
    if not -1.0 <= lam <= 1.0:
        raise ValueError(f"subscale offset {lam} outside [-1, 1]")
    return offset * 2.0 ** (octave + (sublevel + lam) / num_sublevels)


def detect(space: NonlinearScaleSpace, params: DetectorParams | None = None) -> list[KeyPoint]:
    params = params or DetectorParams()
    responses = response_stack(space)
    h, w = space.shape
    S = space.params.num_sublevels
    keypoints = []
    for cand in detect_extrema(space, params, responses):
        refined = refine_subpixel(cand, space, responses)
        if refined is None:
            continue
        x, y, lam = refined
        if not (0 <= x < w and 0 <= y < h):
            continue
        lv = space.levels[cand.level]
        mu = scale_factor(lv.octave, lv.sublevel, lam, S, params.offset)
        keypoints.append(KeyPoint(x, y, lv.octave, lv.sublevel, lam, lv.sigma, mu,
                                  cand.response))
    return keypoints


def write_keypoints(keypoints, path) -> None:
    """Text dump, one ``x y sigma mu response o s lambda`` line per keypoint."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        for kp in keypoints:
            fh.write(f"{kp.x!r} {kp.y!r} {kp.sigma!r} {kp.mu!r} {kp.response!r} "
                     f"{kp.octave} {kp.sublevel} {kp.lam!r}\n")
