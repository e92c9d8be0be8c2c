"""Planar transform models: least-squares estimation, mapping, warping, mosaics."""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError
from .image import bilinear_sample_many

KINDS = ("similarity", "affine", "projective")
MIN_PAIRS = {"similarity": 2, "affine": 3, "projective": 4}
DET_EPS = 1e-12
W_EPS = 1e-12


def _check_kind(kind):
    if kind not in MIN_PAIRS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")


@dataclass(frozen=True, eq=False)
class TransformModel:
    """A 3x3 homogeneous matrix mapping sensed coordinates to reference ones."""

    kind: str
    matrix: np.ndarray

    def __post_init__(self):
        _check_kind(self.kind)
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ValueError("transform matrix must be a finite 3x3 array")
        if self.kind == "projective":
            if abs(m[2, 2]) > W_EPS:
                m = m / m[2, 2]
        else:
            if not np.allclose(m[2], (0.0, 0.0, 1.0), atol=1e-12):
                raise ValueError(f"{self.kind} matrix must have last row (0, 0, 1)")
            m[2] = (0.0, 0.0, 1.0)
        if self.kind == "similarity":
            scale = np.abs(m[:2, :2]).max()
            if (abs(m[0, 0] - m[1, 1]) > 1e-9 * scale
                    or abs(m[0, 1] + m[1, 0]) > 1e-9 * scale):
                raise ValueError("similarity block must be a scaled rotation")
        if abs(np.linalg.det(m)) <= DET_EPS:
            raise DegenerateError("transform matrix is not invertible")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls, kind="affine"):
        return cls(kind, np.eye(3))

    def inverse(self) -> "TransformModel":
        return TransformModel(self.kind, np.linalg.inv(self.matrix))

    def apply(self, points) -> np.ndarray:
        """Map an ``(n, 2)`` array (or a single point) through the model."""
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        hom = pts @ self.matrix[:, :2].T + self.matrix[:, 2]
        w = hom[:, 2]
        if np.any(np.abs(w) < W_EPS):
            raise ValueError("point at infinity")
        out = hom[:, :2] / w[:, None]
        return out[0] if single else out

    def __repr__(self):
        return f"TransformModel({self.kind!r}, {self.matrix.tolist()!r})"


def apply(model: TransformModel, point):
    return model.apply(point)


def _as_pairs(src, dst):
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if src.shape != dst.shape:
        raise ValueError("source and destination point counts differ")
    return src, dst


def _lstsq(a, b, n_params):
    sol, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < n_params:
        raise DegenerateError("rank-deficient point configuration")
    return sol


def _similarity(src, dst):
    # x' = a x - b y + tx,  y' = b x + a y + ty
    n = len(src)
    a = np.zeros((2 * n, 4))
    a[0::2] = np.column_stack([src[:, 0], -src[:, 1], np.ones(n), np.zeros(n)])
    a[1::2] = np.column_stack([src[:, 1], src[:, 0], np.zeros(n), np.ones(n)])
    p = _lstsq(a, dst.ravel(), 4)
    return np.array([[p[0], -p[1], p[2]], [p[1], p[0], p[3]], [0.0, 0.0, 1.0]])


def _affine(src, dst):
    a = np.column_stack([src, np.ones(len(src))])
    p = _lstsq(a, dst, 3)
    return np.vstack([p.T, [0.0, 0.0, 1.0]])


def hartley_normalization(pts):
    """Similarity moving the centroid to 0 and the mean radius to sqrt(2)."""
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    if not d > 0:
        raise DegenerateError("all points coincide")
    s = np.sqrt(2.0) / d
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def _projective(src, dst):
    ts, td = hartley_normalization(src), hartley_normalization(dst)
    ps = src @ ts[:2, :2].T + ts[:2, 2]
    pd = dst @ td[:2, :2].T + td[:2, 2]
    n = len(src)
    a = np.zeros((2 * n, 9))
    x, y = ps[:, 0], ps[:, 1]
    u, v = pd[:, 0], pd[:, 1]
    one, zero = np.ones(n), np.zeros(n)
    a[0::2] = np.column_stack([x, y, one, zero, zero, zero, -u * x, -u * y, -u])
    a[1::2] = np.column_stack([zero, zero, zero, x, y, one, -v * x, -v * y, -v])
    _, sv, vt = np.linalg.svd(a)
    if n >= 4 and len(sv) >= 8 and sv[7] <= 1e-12 * sv[0]:
        raise DegenerateError("rank-deficient point configuration")
    h = vt[-1].reshape(3, 3)
    h = np.linalg.inv(td) @ h @ ts
    if abs(h[2, 2]) <= W_EPS:
        raise DegenerateError("projective solution sends the origin to infinity")
    return h / h[2, 2]


def estimate(kind: str, src, dst=None) -> TransformModel:
    """Least-squares model mapping ``src`` points onto ``dst`` points.

    ``src`` may instead be a sequence of ``((xs, ys), (xd, yd))`` pairs when
    ``dst`` is omitted.
    """
    _check_kind(kind)
    if dst is None:
        pairs = np.asarray(src, dtype=np.float64).reshape(-1, 2, 2)
        src, dst = pairs[:, 0], pairs[:, 1]
    src, dst = _as_pairs(src, dst)
    if len(src) < MIN_PAIRS[kind]:
        raise DegenerateError(f"too few pairs for {kind}: {len(src)} < {MIN_PAIRS[kind]}")
    if kind == "similarity":
        m = _similarity(src, dst)
    elif kind == "affine":
        m = _affine(src, dst)
    else:
        m = _projective(src, dst)
    return TransformModel(kind, m)


def residuals(model: TransformModel, src, dst) -> np.ndarray:
    """Euclidean reprojection error per pair; infinite for points at infinity."""
    src, dst = _as_pairs(src, dst)
    hom = src @ model.matrix[:, :2].T + model.matrix[:, 2]
    w = hom[:, 2]
    ok = np.abs(w) >= W_EPS
    err = np.full(len(src), np.inf)
    mapped = hom[ok, :2] / w[ok, None]
    err[ok] = np.hypot(*(mapped - dst[ok]).T)
    return err


def warp_image(sensed: np.ndarray, model: TransformModel, out_width: int, out_height: int) -> np.ndarray:
    """Resample ``sensed`` into the reference frame by inverse mapping.

    Output pixels whose pre-image falls outside the sensed frame are 0.
    """
    inv = np.linalg.inv(model.matrix)
    h, w = sensed.shape
    ys, xs = np.mgrid[0:out_height, 0:out_width].astype(np.float64)
    hx = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    hy = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    hw = inv[2, 0] * xs + inv[2, 1] * ys + inv[2, 2]
    valid = np.abs(hw) >= W_EPS
    safe_w = np.where(valid, hw, 1.0)
    sx, sy = hx / safe_w, hy / safe_w
    # small tolerance keeps exact border pixels despite rounding in the inverse
    tol = 1e-9
    valid &= (sx >= -tol) & (sx <= w - 1 + tol) & (sy >= -tol) & (sy <= h - 1 + tol)
    out = np.zeros((out_height, out_width))
    out[valid] = bilinear_sample_many(sensed, sx[valid], sy[valid])
    return out


def checkerboard_mosaic(ref: np.ndarray, warped: np.ndarray, tile: int = 64) -> np.ndarray:
    if ref.shape != warped.shape:
        raise ValueError(f"dimension mismatch {ref.shape} vs {warped.shape}")
    if tile < 1:
        raise ValueError("tile must be >= 1")
    ys, xs = np.indices(ref.shape)
    use_warped = ((ys // tile + xs // tile) % 2).astype(bool)
    return np.where(use_warped, warped, ref)


def rgb_overlay(ref: np.ndarray, warped: np.ndarray) -> np.ndarray:
    """Reference in red, warped sensed image in green, blue empty."""
    if ref.shape != warped.shape:
        raise ValueError(f"dimension mismatch {ref.shape} vs {warped.shape}")
    return np.stack([ref, warped, np.zeros_like(ref)], axis=-1)


def save_transform(model: TransformModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(model.kind + "\n")
        fh.write(" ".join(repr(float(v)) for v in model.matrix.ravel()) + "\n")


def parse_transform(text: str) -> TransformModel:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if len(lines) != 2:
        raise ValueError("transform file needs a kind line and a matrix line")
    values = [float(v) for v in lines[1].split()]
    if len(values) != 9:
        raise ValueError(f"expected 9 matrix entries, got {len(values)}")
    return TransformModel(lines[0], np.array(values).reshape(3, 3))


def load_transform(path) -> TransformModel:
    with open(os.fspath(path)) as fh:
        return parse_transform(fh.read())
