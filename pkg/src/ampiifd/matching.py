"""Correspondence search and mismatch removal.

Initial matches come from mutual best-bin-first nearest neighbors, are
filtered by the histogram of main-orientation differences, and finally by a
seeded RANSAC fit of the requested transform kind.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import ConfigError, DegenerateError, NoModelError
from .transform import MIN_PAIRS, TransformModel, estimate, residuals

LEAF_SIZE = 16


@dataclass(frozen=True)
class MatchParams:
    bbf_max_checks: int = 200
    bin_width: float = 5.0
    include_adjacent_bins: bool = True
    ransac_threshold: float = 3.0
    ransac_iterations: int = 2000
    ransac_seed: int = 42
    ratio_threshold: float | None = 0.9

    def __post_init__(self):
        if self.bbf_max_checks < 1:
            raise ConfigError("bbf_max_checks: ≥ 1 violated")
        if not self.bin_width > 0 or abs(360.0 / self.bin_width - round(360.0 / self.bin_width)) > 1e-9:
            raise ConfigError("bin_width: must divide 360")
        if not self.ransac_threshold > 0:
            raise ConfigError("ransac_threshold: > 0 violated")
        if self.ransac_iterations < 1:
            raise ConfigError("ransac_iterations: ≥ 1 violated")
        if self.ratio_threshold is not None and not self.ratio_threshold > 0:
            raise ConfigError("ratio_threshold: > 0 violated")


@dataclass(frozen=True)
class MatchPair:
    ref_index: int
    sen_index: int
    distance: float
    delta_phi: float


class DescriptorIndex:
    """Balanced kd-tree over descriptor rows, stored as flat node arrays.

    Internal nodes split on the dimension of largest spread at the median;
    leaves hold at most ``leaf_size`` points.  ``data`` is reordered so each
    leaf covers the contiguous slice ``start:end``; ``perm`` maps back.
    """

    def __init__(self, descriptors, leaf_size: int = LEAF_SIZE):
        desc = np.ascontiguousarray(descriptors, dtype=np.float64)
        if desc.ndim != 2 or desc.shape[0] == 0:
            raise ValueError("cannot index an empty descriptor set")
        self.leaf_size = leaf_size
        order = np.arange(desc.shape[0])
        split_dim, split_val, left, right, start, end = [], [], [], [], [], []

        def new_node():
            for lst, v in ((split_dim, -1), (split_val, 0.0), (left, -1),
                           (right, -1), (start, 0), (end, 0)):
                lst.append(v)
            return len(split_dim) - 1

        # explicit stack: (node, lo, hi) over the permutation array
        root = new_node()
        stack = [(root, 0, desc.shape[0])]
        while stack:
            node, lo, hi = stack.pop()
            idx = order[lo:hi]
            pts = desc[idx]
            spread = pts.max(axis=0) - pts.min(axis=0) if hi - lo > 0 else None
            if hi - lo <= leaf_size or not np.any(spread > 0):
                start[node], end[node] = lo, hi
                continue
            dim = int(np.argmax(spread))
            mid = (hi - lo) // 2
            part = np.argpartition(pts[:, dim], mid, kind="introselect")
            order[lo:hi] = idx[part]
            split_dim[node] = dim
            split_val[node] = float(desc[order[lo + mid], dim])
            left[node], right[node] = new_node(), new_node()
            stack.append((right[node], lo + mid, hi))
            stack.append((left[node], lo, lo + mid))

        self.perm = order
        self.data = np.ascontiguousarray(desc[order])
        as64 = lambda a: np.asarray(a, dtype=np.int64)
        self.split_dim = as64(split_dim)
        self.split_val = np.asarray(split_val, dtype=np.float64)
        self.left, self.right = as64(left), as64(right)
        self.start, self.end = as64(start), as64(end)

    def __len__(self):
        return self.data.shape[0]

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.split_dim < 0))

    def query2(self, queries, max_checks: int = 200):
        """Two nearest neighbors per query row.

        Returns ``(indices (m, 2), distances (m, 2), leaves_checked (m,))``;
        indices refer to the original descriptor order, -1 when absent.
        """
        q = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float64)
        if q.shape[1] != self.data.shape[1]:
            raise ValueError("query dimension differs from index dimension")
        idx, dist, checks = kernels.bbf_knn2(self.data, self.split_dim, self.split_val,
                                             self.left, self.right, self.start, self.end,
                                             q, int(max_checks))
        idx = np.where(idx >= 0, self.perm[np.maximum(idx, 0)], -1)
        return idx, dist, checks


def build_index(descriptors) -> DescriptorIndex:
    return DescriptorIndex(descriptors)


class Neighbors(NamedTuple):
    nearest: int
    nearest_distance: float
    second: int
    second_distance: float


def bbf_query(index: DescriptorIndex, query, max_checks: int = 200) -> Neighbors:
    idx, dist, _ = index.query2(query, max_checks)
    return Neighbors(int(idx[0, 0]), float(dist[0, 0]), int(idx[0, 1]), float(dist[0, 1]))


def orientation_difference(phi_ref, phi_sen) -> np.ndarray:
    """``(phi_ref - phi_sen)`` in degrees, wrapped to [0, 360)."""
    d = np.mod(np.degrees(np.asarray(phi_ref, dtype=np.float64))
               - np.degrees(np.asarray(phi_sen, dtype=np.float64)), 360.0)
    return np.where(d >= 360.0, 0.0, d)


def bilateral_match(desc_ref, desc_sen, params: MatchParams | None = None,
                    orient_ref=None, orient_sen=None) -> list[MatchPair]:
    """Mutual nearest neighbors under BBF search, with an optional ratio test.

    The ratio test compares the reference descriptor's nearest and second
    nearest sensed neighbors; it is skipped when ``ratio_threshold`` is None
    or the sensed set has a single element.
    """
    params = params or MatchParams()
    desc_ref = np.atleast_2d(np.asarray(desc_ref, dtype=np.float64))
    desc_sen = np.atleast_2d(np.asarray(desc_sen, dtype=np.float64))
    if len(desc_ref) == 0 or len(desc_sen) == 0:
        return []
    fwd_idx, fwd_dist, _ = build_index(desc_sen).query2(desc_ref, params.bbf_max_checks)
    bwd_idx, _, _ = build_index(desc_ref).query2(desc_sen, params.bbf_max_checks)
    if orient_ref is None:
        orient_ref = np.zeros(len(desc_ref))
    if orient_sen is None:
        orient_sen = np.zeros(len(desc_sen))
    matches = []
    use_ratio = params.ratio_threshold is not None and len(desc_sen) > 1
    for i in range(len(desc_ref)):
        j = int(fwd_idx[i, 0])
        if j < 0 or int(bwd_idx[j, 0]) != i:
            continue
        d1, d2 = fwd_dist[i]
        if use_ratio:
            if d2 == 0 or d1 > params.ratio_threshold * d2:
                continue
        dphi = float(orientation_difference(orient_ref[i], orient_sen[j]))
        matches.append(MatchPair(i, j, float(d1), dphi))
    return matches


def orientation_filter(matches, params: MatchParams | None = None) -> list[MatchPair]:
    """Keep matches in the modal orientation-difference bin (and its neighbors).

    Ties between equally populated bins go to the bin whose differences have
    the smaller variance, then to the lower bin index.
    """
    params = params or MatchParams()
    if len(matches) == 0:
        raise ValueError("orientation filter needs at least one match")
    nbins = int(round(360.0 / params.bin_width))
    dphi = np.array([m.delta_phi for m in matches])
    bins = np.minimum((dphi // params.bin_width).astype(np.intp), nbins - 1)
    counts = np.bincount(bins, minlength=nbins)
    top = np.flatnonzero(counts == counts.max())
    if len(top) > 1:
        variances = [float(np.var(dphi[bins == b])) for b in top]
        modal = int(top[int(np.argmin(variances))])
    else:
        modal = int(top[0])
    keep = {modal}
    if params.include_adjacent_bins:
        keep |= {(modal - 1) % nbins, (modal + 1) % nbins}
    return [m for m, b in zip(matches, bins) if int(b) in keep]


def match_points(matches, kp_ref, kp_sen):
    """``(sensed_xy, reference_xy)`` arrays for a list of matches."""
    sen = np.array([[kp_sen[m.sen_index].x, kp_sen[m.sen_index].y] for m in matches],
                   dtype=np.float64).reshape(-1, 2)
    ref = np.array([[kp_ref[m.ref_index].x, kp_ref[m.ref_index].y] for m in matches],
                   dtype=np.float64).reshape(-1, 2)
    return sen, ref


def ransac_points(src, dst, model_kind: str, params: MatchParams | None = None):
    """Seeded RANSAC on point arrays; returns ``(inlier_mask, refit_model)``.

    Each round fits a minimal sample; the consensus with most inliers (ties:
    lower mean inlier error, then earlier round) wins and the final model is
    the least-squares fit to all of its inliers.
    """
    params = params or MatchParams()
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    k = MIN_PAIRS[model_kind]
    n = len(src)
    if n < k:
        raise NoModelError(f"too few matches: {n} < {k} for {model_kind}")
    rng = np.random.default_rng(params.ransac_seed)
    best_mask, best_count, best_err = None, 0, math.inf
    for _ in range(params.ransac_iterations):
        sample = rng.choice(n, size=k, replace=False)
        try:
            model = estimate(model_kind, src[sample], dst[sample])
        except (DegenerateError, ValueError, np.linalg.LinAlgError):
            continue
        err = residuals(model, src, dst)
        mask = err < params.ransac_threshold
        count = int(mask.sum())
        if count < k:
            continue
        mean_err = float(err[mask].mean())
        if count > best_count or (count == best_count and mean_err < best_err):
            best_mask, best_count, best_err = mask, count, mean_err
    if best_mask is None:
        raise NoModelError("no model with sufficient inliers")
    try:
        model = estimate(model_kind, src[best_mask], dst[best_mask])
    except (DegenerateError, ValueError) as exc:
        raise NoModelError(f"no model with sufficient inliers ({exc})") from exc
    return best_mask, model


def ransac(matches, keypoints_ref, keypoints_sen, model_kind: str = "affine",
           params: MatchParams | None = None):
    """Robust fit of a sensed-to-reference model; returns ``(inliers, model)``."""
    if len(matches) < MIN_PAIRS[model_kind]:
        raise NoModelError(f"too few matches: {len(matches)} < {MIN_PAIRS[model_kind]}")
    src, dst = match_points(matches, keypoints_ref, keypoints_sen)
    mask, model = ransac_points(src, dst, model_kind, params)
    return [m for m, keep in zip(matches, mask) if keep], model


def write_matches(path, stages, kp_ref, kp_sen) -> None:
    """Text dump ``ref_x ref_y sen_x sen_y distance delta_phi stage`` per match.

    ``stages`` is an ordered mapping of stage name to match list.
    """
    with open(path, "w") as fh:
        for stage, matches in stages.items():
            for m in matches:
                r, s = kp_ref[m.ref_index], kp_sen[m.sen_index]
                fh.write(f"{r.x!r} {r.y!r} {s.x!r} {s.y!r} {m.distance!r} "
                         f"{m.delta_phi!r} {stage}\n")
