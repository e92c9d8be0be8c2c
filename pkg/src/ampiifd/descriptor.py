"""Adaptive multi-scale partial-intensity-invariant feature descriptor.

The support region of each keypoint is a square of side ``k * mu`` rotated to
the keypoint's main orientation.  Gradients inside it vote into a 4x4 grid of
orientation histograms whose opposite directions are summed (8 bins over
[0, pi)), and the grid is combined with its 180-degree rotation so that the
descriptor survives both gradient reversal and a half-turn of the frame.
"""
from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, UndescribableError
from .image import bilinear_sample_many

GRID = 4
FOLDED_BINS = 8
RAW_BINS = 2 * FOLDED_BINS
DESCRIPTOR_SIZE = GRID * GRID * FOLDED_BINS
CLAMP = 0.2
MIN_INSIDE_FRACTION = 0.5
MIN_ENERGY = 1e-12


@dataclass(frozen=True)
class DescriptorParams:
    region_multiplier: float = 6.0
    combine_scale: float = 1.0
    min_region: int = 8
    clamp: bool = True
    grid_cells: int = GRID
    folded_bins: int = FOLDED_BINS

    def __post_init__(self):
        if not self.combine_scale > 0:
            raise ConfigError("combine_scale: C > 0 violated")
        if self.min_region < 4:
            raise ConfigError("min_region: ≥ 4 violated")
        if not self.region_multiplier >= 1:
            raise ConfigError("region_multiplier: k ≥ 1 violated")
        if self.grid_cells != GRID:
            raise ConfigError("grid_cells: must be 4")
        if self.folded_bins != FOLDED_BINS:
            raise ConfigError("folded_bins: must be 8")


class RegionSamples(NamedTuple):
    """Gradient samples of one support region, in the keypoint's frame."""
    cell_row: np.ndarray
    cell_col: np.ndarray
    u: np.ndarray
    v: np.ndarray
    gu: np.ndarray
    gv: np.ndarray
    side: int

    @property
    def magnitude(self):
        return np.hypot(self.gu, self.gv)


def region_side(mu: float, params: DescriptorParams) -> int:
    return max(int(round(params.region_multiplier * mu)), params.min_region)


def main_orientation(level, kp, params: DescriptorParams | None = None) -> float:
    """Dominant gradient axis in [0, pi) from Gaussian-averaged squared gradients."""
    params = params or DescriptorParams()
    gx, gy = level.grad
    h, w = gx.shape
    extent = params.region_multiplier * kp.mu
    half = extent / 2.0
    x0, x1 = max(int(math.ceil(kp.x - half)), 0), min(int(math.floor(kp.x + half)), w - 1)
    y0, y1 = max(int(math.ceil(kp.y - half)), 0), min(int(math.floor(kp.y + half)), h - 1)
    if x0 > x1 or y0 > y1:
        raise UndescribableError("orientation window lies outside the image")
    sx = gx[y0:y1 + 1, x0:x1 + 1]
    sy = gy[y0:y1 + 1, x0:x1 + 1]
    yy, xx = np.mgrid[y0:y1 + 1, x0:x1 + 1]
    sigma_w = extent / 4.0
    wgt = np.exp(-((xx - kp.x) ** 2 + (yy - kp.y) ** 2) / (2.0 * sigma_w ** 2))
    c = float(np.sum(wgt * (sx * sx - sy * sy)))
    s = float(np.sum(wgt * 2.0 * sx * sy))
    if abs(c) < MIN_ENERGY and abs(s) < MIN_ENERGY:
        raise UndescribableError("no gradient energy around keypoint")
    theta = (0.5 * math.atan2(s, c)) % math.pi
    return theta if theta < math.pi else 0.0


def sample_region(level, kp, orientation: float, params: DescriptorParams | None = None) -> RegionSamples:
    """Sample the rotated ``side x side`` support grid at one-pixel spacing."""
    params = params or DescriptorParams()
    side = region_side(kp.mu, params)
    gx, gy = level.grad
    h, w = gx.shape
    offs = np.arange(side, dtype=np.float64) - (side - 1) / 2.0
    v, u = np.meshgrid(offs, offs, indexing="ij")
    cos_t, sin_t = math.cos(orientation), math.sin(orientation)
    px = kp.x + cos_t * u - sin_t * v
    py = kp.y + sin_t * u + cos_t * v
    inside = (px >= 0) & (px <= w - 1) & (py >= 0) & (py <= h - 1)
    if inside.sum() < MIN_INSIDE_FRACTION * side * side:
        raise UndescribableError("support region mostly outside the image")
    idx = np.arange(side)
    cells = np.minimum(idx * GRID // side, GRID - 1)
    rows = np.broadcast_to(cells[:, None], (side, side))[inside]
    cols = np.broadcast_to(cells[None, :], (side, side))[inside]
    px, py = px[inside], py[inside]
    sgx = bilinear_sample_many(gx, px, py)
    sgy = bilinear_sample_many(gy, px, py)
    # gradient expressed in the rotated frame
    gu = cos_t * sgx + sin_t * sgy
    gv = -sin_t * sgx + cos_t * sgy
    return RegionSamples(rows, cols, u[inside], v[inside], gu, gv, side)


def build_histograms(samples: RegionSamples) -> np.ndarray:
    """Vote samples into per-cell 16-bin histograms and fold them to 8 bins.

    Votes are magnitude times a Gaussian spatial weight (sigma = side / 2) and
    are split linearly between the two nearest bin centers, which sit at
    multiples of 22.5 degrees.  Returns a ``(4, 4, 8)`` array.
    """
    gu, gv = samples.gu, samples.gv
    # Canonical sign makes g and -g produce bitwise identical axis angles;
    # the flip flag restores the half-plane for the 16-bin vote.
    flip = (gv < 0) | ((gv == 0) & (gu < 0))
    # adding 0.0 turns -0.0 into +0.0, which atan2 would otherwise read as -pi
    cu = np.where(flip, -gu, gu) + 0.0
    cv = np.where(flip, -gv, gv) + 0.0
    axis_angle = np.arctan2(cv, cu)
    axis_angle = np.where(axis_angle >= math.pi, 0.0, axis_angle)
    pos = axis_angle * (FOLDED_BINS / math.pi)
    lower = np.minimum(np.floor(pos).astype(np.intp), FOLDED_BINS - 1)
    frac = pos - lower
    lower = lower + FOLDED_BINS * flip
    upper = (lower + 1) % RAW_BINS

    sigma = samples.side / 2.0
    weight = np.hypot(gu, gv) * np.exp(-(samples.u ** 2 + samples.v ** 2) / (2.0 * sigma ** 2))
    cell = (np.asarray(samples.cell_row) * GRID + np.asarray(samples.cell_col)).astype(np.intp)
    raw = np.bincount(cell * RAW_BINS + lower, weights=weight * (1.0 - frac),
                      minlength=GRID * GRID * RAW_BINS)
    raw += np.bincount(cell * RAW_BINS + upper, weights=weight * frac,
                       minlength=GRID * GRID * RAW_BINS)
    raw = raw.reshape(GRID, GRID, RAW_BINS)
    return raw[..., :FOLDED_BINS] + raw[..., FOLDED_BINS:]


def assemble_piifd(grid: np.ndarray, params: DescriptorParams | None = None) -> np.ndarray:
    """Combine the grid with its half-turn and flatten to a unit 128-vector."""
    params = params or DescriptorParams()
    grid = np.asarray(grid, dtype=np.float64)
    if grid.shape != (GRID, GRID, FOLDED_BINS):
        raise ValueError(f"expected a (4, 4, 8) grid, got {grid.shape}")
    if not np.sum(grid) > 0:
        raise UndescribableError("zero-energy histogram grid")
    rotated = grid[::-1, ::-1, :]
    out = np.empty_like(grid)
    out[:2] = grid[:2] + rotated[:2]
    out[2:] = params.combine_scale * np.abs(grid[2:] - rotated[2:])
    vec = out.ravel()
    norm = np.linalg.norm(vec)
    if not norm > 0:
        raise UndescribableError("zero-length descriptor")
    vec = vec / norm
    if params.clamp:
        vec = np.minimum(vec, CLAMP)
        vec = vec / np.linalg.norm(vec)
    return vec


def describe_keypoint(level, kp, params: DescriptorParams):
    orientation = main_orientation(level, kp, params)
    samples = sample_region(level, kp, orientation, params)
    grid = build_histograms(samples)
    return orientation, assemble_piifd(grid, params)


def describe(space, keypoints, params: DescriptorParams | None = None):
    """Describe keypoints, dropping undescribable ones.

    Returns the kept keypoints (orientation filled in) and an ``(n, 128)``
    descriptor array in the same order.
    """
    params = params or DescriptorParams()
    kept, vecs = [], []
    for kp in keypoints:
        level = space.level(kp.octave, kp.sublevel)
        try:
            orientation, vec = describe_keypoint(level, kp, params)
        except UndescribableError:
            continue
        kept.append(kp.with_orientation(orientation))
        vecs.append(vec)
    desc = np.array(vecs, dtype=np.float64).reshape(len(vecs), DESCRIPTOR_SIZE)
    return kept, desc


# sigma is omitted: it is recomputable from (octave, sublevel)
KP_FIELDS = ("x", "y", "mu", "response", "orientation", "octave", "sublevel", "lam")


def write_descriptors(keypoints, descriptors, path) -> None:
    """Binary dump: ``AMPD``, uint64 count, then per record 8 little-endian
    doubles of keypoint fields and 128 little-endian floats."""
    with open(path, "wb") as fh:
        fh.write(b"AMPD")
        fh.write(struct.pack("<Q", len(keypoints)))
        for kp, vec in zip(keypoints, descriptors):
            fh.write(struct.pack("<8d", *(float(getattr(kp, f)) for f in KP_FIELDS)))
            fh.write(np.asarray(vec, dtype="<f4").tobytes())


def read_descriptors(path):
    """Inverse of :func:`write_descriptors`: ``(fields (n, 8), descriptors (n, 128))``."""
    with open(path, "rb") as fh:
        if fh.read(4) != b"AMPD":
            raise ValueError(f"{path}: bad magic")
        (n,) = struct.unpack("<Q", fh.read(8))
        rec = np.dtype([("kp", "<f8", 8), ("vec", "<f4", DESCRIPTOR_SIZE)])
        data = np.frombuffer(fh.read(n * rec.itemsize), dtype=rec, count=n)
    return data["kp"].astype(np.float64), data["vec"].astype(np.float64)
