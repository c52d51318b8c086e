"""Symmetry-aware pose-error metrics and recall aggregation.

All comparisons take an estimated pose and a reference pose, both
mapping model-frame points into the same camera frame. Symmetric
objects declare a finite set of self-mappings; surface and projection
errors take the minimum over that set, so any declared symmetry of the
reference pose leaves scores unchanged.

Errors:

* surface (MSSD): worst 3D displacement between corresponding model
  points, minimized over symmetries.
* projection (MSPD): the same in projected pixel coordinates.
* visible-surface (VSD): fraction of pixels, within the union of the
  two visibility masks, where the rendered depth maps disagree by more
  than a misalignment tolerance or only one pose is visible at all.
  Visibility is estimated against the scene depth with an occlusion
  tolerance, so an estimate is not penalized where the object is
  genuinely hidden. Rendering is point-splat based; fidelity grows with
  model point density relative to image resolution.
* average distance (ADD): mean displacement of corresponding points,
  or mean closest-point distance for symmetric objects (ADD-S). A pose
  counts as correct when the error is strictly below one tenth of the
  object diameter.

Per-pair recalls average strict ``error < threshold`` indicators over a
threshold sweep; the headline score is the mean of the visible-surface,
surface, and projection recalls.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import BehindCamera, DimensionMismatch, EmptyRender
from .geometry import CameraIntrinsics, ObjectModel, Pose, as_depth, as_mask, project
from .render import splat_depth

DEFAULT_OCCLUSION_TOLERANCE = 0.015  # meters

# 0.05, 0.10, ..., 0.50: the standard threshold sweep.
_TENTH_STEPS = tuple((i + 1) * 0.05 for i in range(10))


@dataclass(frozen=True)
class MetricParams:
    """Threshold sweeps and tolerances for the metric suite.

    Fractions are of the object diameter. Projection thresholds are
    ``multiplier * width / projection_base_width`` pixels, so they scale
    with image resolution.
    """

    error_thresholds: tuple = _TENTH_STEPS  # visible-surface recall sweep
    tolerance_fractions: tuple = _TENTH_STEPS  # visible-surface misalignment
    surface_fractions: tuple = _TENTH_STEPS  # surface-error recall sweep
    projection_multipliers: tuple = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0)
    projection_base_width: float = 640.0
    occlusion_tolerance: float = DEFAULT_OCCLUSION_TOLERANCE
    add_threshold_fraction: float = 0.1

    def __post_init__(self):
        for name in ("error_thresholds", "tolerance_fractions", "surface_fractions",
                     "projection_multipliers"):
            vals = tuple(float(v) for v in getattr(self, name))
            if len(vals) == 0 or any(v <= 0 for v in vals):
                raise ValueError(f"{name} must be non-empty and positive")
            object.__setattr__(self, name, vals)
        if self.occlusion_tolerance <= 0:
            raise ValueError("occlusion_tolerance must be positive")
        if self.add_threshold_fraction <= 0:
            raise ValueError("add_threshold_fraction must be positive")


def mssd_error(model: ObjectModel, pose_true: Pose, pose_est: Pose) -> float:
    """Worst 3D displacement over corresponding points, min over symmetries."""
    est = pose_est.apply(model.points)
    best = math.inf
    for sym in model.symmetries:
        ref = pose_true.apply(sym.apply(model.points))
        err = float(np.linalg.norm(est - ref, axis=1).max())
        best = min(best, err)
    return best


def mspd_error(
    model: ObjectModel,
    pose_true: Pose,
    pose_est: Pose,
    intrinsics: CameraIntrinsics,
) -> float:
    """Worst projected displacement in pixels, min over symmetries.

    Points behind the camera under either pose are excluded (with a
    warning); if every point of every symmetry is excluded the metric is
    undefined and BehindCamera is raised.
    """
    proj_est = project(pose_est.apply(model.points), intrinsics)
    best = math.inf
    excluded = 0
    for sym in model.symmetries:
        proj_ref = project(pose_true.apply(sym.apply(model.points)), intrinsics)
        valid = proj_est.in_front & proj_ref.in_front
        excluded += int(np.count_nonzero(~valid))
        if not np.any(valid):
            continue
        err = float(
            np.linalg.norm(proj_est.uv[valid] - proj_ref.uv[valid], axis=1).max()
        )
        best = min(best, err)
    if not math.isfinite(best):
        raise BehindCamera("every model point is behind the camera")
    if excluded:
        warnings.warn(
            f"projection metric excluded {excluded} behind-camera point(s)",
            stacklevel=2,
        )
    return best


def add_error(
    model: ObjectModel,
    pose_true: Pose,
    pose_est: Pose,
    symmetric: bool | None = None,
) -> float:
    """Mean displacement (ADD), or mean closest-point distance (ADD-S).

    ``symmetric=None`` picks ADD-S exactly when the model declares a
    non-identity symmetry.
    """
    use_adds = model.is_symmetric if symmetric is None else symmetric
    est = pose_est.apply(model.points)
    ref = pose_true.apply(model.points)
    if use_adds:
        dist, _ = cKDTree(ref).query(est, k=1)
        return float(np.mean(dist))
    return float(np.mean(np.linalg.norm(est - ref, axis=1)))


@dataclass(frozen=True)
class AddResult:
    error: float
    threshold: float
    success: bool


def add_result(
    model: ObjectModel,
    pose_true: Pose,
    pose_est: Pose,
    threshold_fraction: float = 0.1,
) -> AddResult:
    """ADD(-S) error plus the strict diameter-fraction success test."""
    err = add_error(model, pose_true, pose_est)
    threshold = threshold_fraction * model.diameter_m
    return AddResult(error=err, threshold=threshold, success=err < threshold)


def _visibility(
    rendered: np.ndarray, scene: np.ndarray, occlusion_tolerance: float
) -> np.ndarray:
    """Pixels where the rendered surface would actually be observed."""
    valid = rendered > 0
    free = scene == 0
    return valid & (free | (rendered < scene + occlusion_tolerance))


def vsd_error_set(
    model: ObjectModel,
    pose_true: Pose,
    pose_est: Pose,
    scene_depth,
    intrinsics: CameraIntrinsics,
    misalignment_tolerances,
    occlusion_tolerance: float = DEFAULT_OCCLUSION_TOLERANCE,
) -> np.ndarray:
    """Visible-surface error at several misalignment tolerances.

    Renders once and sweeps the tolerances, which keeps recall loops
    cheap. Raises EmptyRender when neither pose is visible at all.
    """
    tols = np.asarray(misalignment_tolerances, dtype=np.float64).reshape(-1)
    if len(tols) == 0 or np.any(tols <= 0):
        raise ValueError("misalignment tolerances must be non-empty and positive")
    scene = as_depth(scene_depth, intrinsics)

    d_true, _ = splat_depth(pose_true.apply(model.points), intrinsics)
    d_est, _ = splat_depth(pose_est.apply(model.points), intrinsics)

    visib_true = _visibility(d_true, scene, occlusion_tolerance)
    visib_est = _visibility(d_est, scene, occlusion_tolerance)
    # Where the reference object is visible, an estimate landing on the
    # same pixel competes there even if something occludes it.
    visib_est |= visib_true & (d_est > 0)

    union = visib_true | visib_est
    n_union = int(np.count_nonzero(union))
    if n_union == 0:
        raise EmptyRender("no model point is visible under either pose")

    one_sided = union & ~(visib_true & visib_est)
    diff = np.abs(d_true - d_est)
    errors = np.empty(len(tols))
    for i, tol in enumerate(tols):
        mismatch = one_sided | (union & (diff > tol))
        errors[i] = np.count_nonzero(mismatch) / n_union
    return errors


def vsd_error(
    model: ObjectModel,
    pose_true: Pose,
    pose_est: Pose,
    scene_depth,
    intrinsics: CameraIntrinsics,
    misalignment_tolerance: float,
    occlusion_tolerance: float = DEFAULT_OCCLUSION_TOLERANCE,
) -> float:
    """Visible-surface error at one misalignment tolerance."""
    return float(
        vsd_error_set(
            model,
            pose_true,
            pose_est,
            scene_depth,
            intrinsics,
            [misalignment_tolerance],
            occlusion_tolerance,
        )[0]
    )


def recall_average(errors, thresholds) -> float:
    """Mean over thresholds of the fraction of errors strictly below.

    Fractions are exact ratios and the outer mean uses compensated
    summation, so the result is independent of input ordering.
    """
    errs = np.asarray(errors, dtype=np.float64).reshape(-1)
    thrs = np.asarray(thresholds, dtype=np.float64).reshape(-1)
    if len(errs) == 0:
        raise ValueError("errors must be non-empty")
    if len(thrs) == 0:
        raise ValueError("thresholds must be non-empty")
    fractions = [float(np.count_nonzero(errs < t)) / len(errs) for t in thrs]
    return math.fsum(fractions) / len(thrs)


def miou(pred_mask, gt_mask) -> float:
    """Intersection over union of two masks; 1.0 when both are empty."""
    p = as_mask(pred_mask)
    g = np.asarray(gt_mask)
    if p.shape != g.shape:
        raise DimensionMismatch(
            f"mask shapes differ: {p.shape} vs {g.shape}"
        )
    g = g.astype(bool)
    union = int(np.count_nonzero(p | g))
    if union == 0:
        return 1.0
    return float(np.count_nonzero(p & g)) / union


@dataclass(frozen=True)
class MetricReport:
    """Per-pair scores, all in [0, 1].

    ``ar`` is exactly ``(vsd + mssd + mspd) / 3``; construction fails on
    any other value so the identity can never drift.
    """

    vsd: float
    mssd: float
    mspd: float
    ar: float
    add: float
    miou: float
    mssd_error_m: float
    mspd_error_px: float
    add_error_m: float
    vsd_errors: tuple

    def __post_init__(self):
        for name in ("vsd", "mssd", "mspd", "ar", "add", "miou"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {val}")
        if self.ar != (self.vsd + self.mssd + self.mspd) / 3.0:
            raise ValueError("ar must equal (vsd + mssd + mspd) / 3 exactly")
        object.__setattr__(self, "vsd_errors", tuple(float(v) for v in self.vsd_errors))

    @classmethod
    def from_scores(cls, *, vsd, mssd, mspd, add, miou,
                    mssd_error_m, mspd_error_px, add_error_m, vsd_errors):
        return cls(
            vsd=vsd,
            mssd=mssd,
            mspd=mspd,
            ar=(vsd + mssd + mspd) / 3.0,
            add=add,
            miou=miou,
            mssd_error_m=mssd_error_m,
            mspd_error_px=mspd_error_px,
            add_error_m=add_error_m,
            vsd_errors=vsd_errors,
        )

    def to_dict(self) -> dict:
        return {
            "ar": self.ar,
            "vsd": self.vsd,
            "mssd": self.mssd,
            "mspd": self.mspd,
            "add": self.add,
            "miou": self.miou,
            "mssd_error_m": self.mssd_error_m,
            "mspd_error_px": self.mspd_error_px,
            "add_error_m": self.add_error_m,
            "vsd_errors": list(self.vsd_errors),
        }


def pair_report(
    model: ObjectModel,
    pose_true: Pose,
    pose_est: Pose,
    scene_depth,
    intrinsics: CameraIntrinsics,
    params: MetricParams = MetricParams(),
    pred_mask=None,
    gt_mask=None,
) -> MetricReport:
    """Evaluate one estimated pose against its reference.

    Mask quality defaults to 1.0 when no predicted mask is supplied
    (the reference mask stands in for the prediction).
    """
    d = model.diameter_m

    e_mssd = mssd_error(model, pose_true, pose_est)
    mssd_score = recall_average([e_mssd], [f * d for f in params.surface_fractions])

    e_mspd = mspd_error(model, pose_true, pose_est, intrinsics)
    px_unit = intrinsics.width / params.projection_base_width
    mspd_score = recall_average(
        [e_mspd], [m * px_unit for m in params.projection_multipliers]
    )

    e_vsd = vsd_error_set(
        model,
        pose_true,
        pose_est,
        scene_depth,
        intrinsics,
        [f * d for f in params.tolerance_fractions],
        params.occlusion_tolerance,
    )
    vsd_score = math.fsum(
        recall_average([e], params.error_thresholds) for e in e_vsd
    ) / len(e_vsd)

    add = add_result(model, pose_true, pose_est, params.add_threshold_fraction)

    if gt_mask is None:
        mask_score = 1.0
    else:
        mask_score = miou(gt_mask if pred_mask is None else pred_mask, gt_mask)

    return MetricReport.from_scores(
        vsd=vsd_score,
        mssd=mssd_score,
        mspd=mspd_score,
        add=1.0 if add.success else 0.0,
        miou=mask_score,
        mssd_error_m=e_mssd,
        mspd_error_px=e_mspd,
        add_error_m=add.error,
        vsd_errors=tuple(e_vsd),
    )


def aggregate_reports(reports) -> dict:
    """Dataset means of per-pair scores.

    The aggregate ``ar`` is the mean of per-pair ``ar`` values. Means
    use compensated summation, so any aggregation order produces the
    same bytes.
    """
    reports = list(reports)
    if len(reports) == 0:
        raise ValueError("cannot aggregate zero reports")
    n = len(reports)

    def mean(name):
        return math.fsum(getattr(r, name) for r in reports) / n

    return {
        "count": n,
        "ar": mean("ar"),
        "vsd": mean("vsd"),
        "mssd": mean("mssd"),
        "mspd": mean("mspd"),
        "add": mean("add"),
        "miou": mean("miou"),
    }
