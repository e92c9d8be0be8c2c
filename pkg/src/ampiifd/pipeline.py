"""End-to-end registration of a sensed image onto a reference image."""
from __future__ import annotations

import logging
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage, ImageDraw

from . import kernels
from .config import PipelineConfig
from .descriptor import describe, write_descriptors
from .detector import detect, write_keypoints
from .errors import AmpiifdError, NoModelError, StageError
from .evaluation import GroundTruth, RegistrationReport, classify_correct, cmr, load_ground_truth, rmse
from .image import load_image, quantize8, save_image
from .matching import bilateral_match, match_points, orientation_filter, ransac, write_matches
from .scale_space import build_scale_space, dump_levels
from .transform import TransformModel, checkerboard_mosaic, rgb_overlay, save_transform, warp_image

log = logging.getLogger(__name__)

OUTPUT_FILES = ("matches.txt", "transform.txt", "warped.png", "mosaic_gray.png",
                "mosaic_rgb.png", "matches_vis.png", "report.json")


@dataclass
class RegistrationResult:
    keypoints_ref: list
    keypoints_sen: list
    descriptors_ref: np.ndarray
    descriptors_sen: np.ndarray
    stages: dict
    model: TransformModel | None
    report: RegistrationReport
    spaces: tuple = field(default=(), repr=False)


@contextmanager
def _stage(name, times):
    t0 = time.perf_counter()
    try:
        yield
    except NoModelError:
        raise
    except AmpiifdError as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError(name, exc) from exc
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc) from exc
    finally:
        times[name] = times.get(name, 0.0) + time.perf_counter() - t0


def extract_features(img, config: PipelineConfig, times=None, tag=""):
    """Scale space, keypoints and descriptors of one image."""
    times = {} if times is None else times
    with _stage(f"scale_space{tag}", times):
        space = build_scale_space(img, config.scale_space)
    with _stage(f"detect{tag}", times):
        keypoints = detect(space, config.detector)
    with _stage(f"describe{tag}", times):
        keypoints, desc = describe(space, keypoints, config.descriptor)
    return space, keypoints, desc


def register_images(ref, sen, config: PipelineConfig | None = None,
                    gt: GroundTruth | None = None) -> RegistrationResult:
    """Estimate the sensed-to-reference model for two in-memory images.

    Raises :class:`NoModelError` when RANSAC finds no consensus.
    """
    config = config or PipelineConfig()
    times = {}
    report = RegistrationReport(model_kind=config.model_kind, kernel_backend=kernels.BACKEND,
                                stage_times_s=times)
    space_r, kp_r, d_r = extract_features(ref, config, times, "_ref")
    space_s, kp_s, d_s = extract_features(sen, config, times, "_sen")
    report.n_keypoints_ref, report.n_keypoints_sen = len(kp_r), len(kp_s)

    with _stage("match", times):
        initial = bilateral_match(d_r, d_s, config.matching,
                                  [k.orientation for k in kp_r], [k.orientation for k in kp_s])
        oriented = orientation_filter(initial, config.matching) if initial else []
    report.n_initial, report.n_oriented = len(initial), len(oriented)
    stages = {"initial": initial, "oriented": oriented}
    result = RegistrationResult(kp_r, kp_s, d_r, d_s, stages, None, report, (space_r, space_s))

    with _stage("ransac", times):
        inliers, model = ransac(oriented, kp_r, kp_s, config.model_kind, config.matching)
    stages["ransac"] = inliers
    result.model = model
    report.n_ransac = len(inliers)
    report.matrix = model.matrix.tolist()
    report.unreliable = len(inliers) < config.min_reliable_matches

    with _stage("evaluate", times):
        sen_pts, ref_pts = match_points(inliers, kp_r, kp_s)
        report.rmse_px = rmse(ref_pts, model.apply(sen_pts))
        if gt is not None:
            report.n_correct = classify_correct(ref_pts, sen_pts, gt, config.correct_tol)
            report.cmr = cmr(report.n_correct, report.n_ransac)
    return result


def matches_visualization(ref, sen, matches, kp_ref, kp_sen) -> np.ndarray:
    """Side-by-side RGB rendering with one line per correspondence."""
    h = max(ref.shape[0], sen.shape[0])
    canvas = np.zeros((h, ref.shape[1] + sen.shape[1]), dtype=np.uint8)
    canvas[:ref.shape[0], :ref.shape[1]] = quantize8(ref)
    canvas[:sen.shape[0], ref.shape[1]:] = quantize8(sen)
    pil = PILImage.fromarray(canvas, mode="L").convert("RGB")
    draw = ImageDraw.Draw(pil)
    dx = ref.shape[1]
    for m in matches:
        r, s = kp_ref[m.ref_index], kp_sen[m.sen_index]
        draw.line([(r.x, r.y), (s.x + dx, s.y)], fill=(255, 255, 0), width=1)
        for cx, cy in ((r.x, r.y), (s.x + dx, s.y)):
            draw.ellipse([cx - 2, cy - 2, cx + 2, cy + 2], outline=(255, 0, 0))
    return np.asarray(pil, dtype=np.float64) / 255.0


def write_outputs(result: RegistrationResult, ref, sen, out_dir, debug=False) -> None:
    os.makedirs(out_dir, exist_ok=True)
    kp_r, kp_s = result.keypoints_ref, result.keypoints_sen
    write_matches(os.path.join(out_dir, "matches.txt"), result.stages, kp_r, kp_s)
    save_transform(result.model, os.path.join(out_dir, "transform.txt"))
    warped = warp_image(sen, result.model, ref.shape[1], ref.shape[0])
    save_image(warped, os.path.join(out_dir, "warped.png"))
    save_image(checkerboard_mosaic(ref, warped), os.path.join(out_dir, "mosaic_gray.png"))
    save_image(rgb_overlay(ref, warped), os.path.join(out_dir, "mosaic_rgb.png"))
    vis = matches_visualization(ref, sen, result.stages.get("ransac", []), kp_r, kp_s)
    save_image(vis, os.path.join(out_dir, "matches_vis.png"))
    if debug:
        write_debug_dumps(result, out_dir)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        fh.write(result.report.to_json() + "\n")


def write_debug_dumps(result: RegistrationResult, out_dir) -> None:
    for tag, space, kps, desc in (("ref", result.spaces[0], result.keypoints_ref, result.descriptors_ref),
                                  ("sen", result.spaces[1], result.keypoints_sen, result.descriptors_sen)):
        dump_levels(space, os.path.join(out_dir, f"levels_{tag}"))
        write_keypoints(kps, os.path.join(out_dir, f"keypoints_{tag}.txt"))
        write_descriptors(kps, desc, os.path.join(out_dir, f"descriptors_{tag}.bin"))


def run_register(ref_path, sen_path, config: PipelineConfig | None = None,
                 gt_path=None) -> RegistrationReport:
    """Register two image files and write every artifact into ``config.output_dir``."""
    config = config or PipelineConfig()
    times = {}
    with _stage("load", times):
        ref = load_image(ref_path)
        sen = load_image(sen_path)
        gt = load_ground_truth(gt_path) if gt_path else None
    result = register_images(ref, sen, config, gt)
    result.report.stage_times_s.update(times)
    with _stage("write", result.report.stage_times_s):
        write_outputs(result, ref, sen, config.output_dir, config.debug_dumps)
    if result.report.unreliable:
        log.warning("only %d final matches; result flagged unreliable", result.report.n_ransac)
    return result.report
