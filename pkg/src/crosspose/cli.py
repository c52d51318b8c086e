"""Command-line pipeline around the library.

Subcommands:

* ``synth``: generate a synthetic dataset (scenes, features, oracles).
* ``gen-matches``: ground-truth correspondences for every pair, with a
  rejection log for pairs below the minimum match count.
* ``register``: match features, lift to 3D, and estimate each pair's
  relative pose.
* ``eval``: score predicted poses against ground truth and print a
  table.
* ``losses``: forward loss diagnostics over ground-truth matches.

Exit codes: 0 on success, 1 when any pair failed but the batch ran,
2 on configuration or usage errors. Every command is deterministic
under a fixed ``--seed`` and safe to re-run into the same directory.
Randomness flows from the master seed through named sub-streams, and
per-pair work derives its own seed from the pair id, so results do not
depend on batch order or on the worker count (``--workers``, default
from ``CROSSPOSE_WORKERS``).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import zlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .config import EvalConfig, PairEntry, derive_seed, load_config, load_pairs
from .errors import ConfigError, CrossposeError
from .geometry import CameraIntrinsics, Pose, compose
from .losses import (
    FeatureSet,
    dice_loss,
    feature_loss,
    hardest_negative_loss,
    positive_loss,
    total_loss,
)
from .matcher import downsample_mask, lift_matches, match_features
from .matchgen import accept_pair, generate_gt_matches
from .metrics import aggregate_reports, pair_report
from .registration import register_spatial_consistency
from .synth import (
    make_descriptor_field,
    make_model,
    make_pair,
    random_rotation,
    rotation_about_axis,
)


def _pair_seed(base_seed: int, pair_id: str) -> int:
    """Stable per-pair seed: independent of batch order and worker count."""
    mixed = np.random.SeedSequence([base_seed, zlib.crc32(pair_id.encode())])
    return int(mixed.generate_state(1, np.uint64)[0])


def _run_pairs(pairs, fn, workers: int):
    """Apply ``fn`` to each pair, collecting per-pair errors.

    Returns ``(results, failures)`` where results is a list of
    ``(pair_id, value)`` in manifest order and failures a list of
    ``(pair_id, message)``.
    """
    def guarded(entry: PairEntry):
        try:
            return entry.pair_id, fn(entry), None
        except (CrossposeError, OSError, ValueError) as exc:
            return entry.pair_id, None, f"{type(exc).__name__}: {exc}"

    if workers <= 1:
        rows = [guarded(p) for p in pairs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(guarded, pairs))
    results = [(pid, value) for pid, value, err in rows if err is None]
    failures = [(pid, err) for pid, _, err in rows if err is not None]
    return results, failures


def _load_view(view):
    depth = io.read_depth(view.depth)
    mask = io.read_mask(view.mask)
    camera = io.read_intrinsics(view.camera)
    pose = io.read_pose(view.pose)
    return depth, mask, camera, pose


def _print_failures(failures):
    for pair_id, message in failures:
        print(f"error: {pair_id}: {message}", file=sys.stderr)


# ---------------------------------------------------------------- synth --


def cmd_synth(args) -> int:
    out = Path(args.out)
    (out / "models").mkdir(parents=True, exist_ok=True)
    (out / "pairs").mkdir(parents=True, exist_ok=True)

    size = args.image_size
    camera = CameraIntrinsics(
        fx=args.focal,
        fy=args.focal,
        cx=(size - 1) / 2.0,
        cy=(size - 1) / 2.0,
        width=size,
        height=size,
    )
    model = make_model(
        args.model_kind,
        n_points=args.model_points,
        size=args.model_size,
        cyclic_order=args.cyclic_order,
        seed=derive_seed(args.seed, "synth"),
    )
    io.write_model(out / "models" / "model.xyz", model)
    io.write_intrinsics(out / "camera.json", camera)

    rng = np.random.default_rng(derive_seed(args.seed, "synth"))
    entries = []
    for i in range(args.pairs):
        pair_id = f"pair_{i:04d}"
        pair_dir = out / "pairs" / pair_id
        pair_dir.mkdir(parents=True, exist_ok=True)

        def view_translation():
            return np.array(
                [
                    rng.uniform(-0.01, 0.01),
                    rng.uniform(-0.01, 0.01),
                    rng.uniform(0.5, 0.6),
                ]
            )

        # The query view re-orients the object by a bounded angle so the
        # two views share a substantial visible surface.
        rot_a = random_rotation(rng)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = rng.uniform(np.radians(10.0), np.radians(args.max_view_angle))
        pose_a = Pose(rot_a, view_translation())
        pose_q = Pose(rotation_about_axis(axis, angle) @ rot_a, view_translation())
        scene_a, scene_q, oracle = make_pair(
            model, pose_a, pose_q, camera,
            background_a=args.background_depth,
            background_q=args.background_depth,
        )
        feat_seed = int(rng.integers(2**63))
        feat_a, feat_q = make_descriptor_field(
            scene_a,
            scene_q,
            dim=args.feature_dim,
            noise=args.noise,
            outlier_fraction=args.outlier_fraction,
            seed=feat_seed,
        )

        io.write_depth(pair_dir / "depth_anchor.pgm", scene_a.depth)
        io.write_depth(pair_dir / "depth_query.pgm", scene_q.depth)
        io.write_mask(pair_dir / "mask_anchor.pgm", scene_a.mask)
        io.write_mask(pair_dir / "mask_query.pgm", scene_q.mask)
        io.write_pose(pair_dir / "pose_anchor.json", pose_a)
        io.write_pose(pair_dir / "pose_query.json", pose_q)
        io.write_pose(pair_dir / "rel_pose.json", oracle.relative)
        io.write_features(pair_dir / "features_anchor.feat", feat_a)
        io.write_features(pair_dir / "features_query.feat", feat_q)
        io.write_matches(pair_dir / "gt_matches.json", oracle)

        rel = f"pairs/{pair_id}"
        entries.append(
            {
                "id": pair_id,
                "model": "models/model.xyz",
                "anchor": {
                    "depth": f"{rel}/depth_anchor.pgm",
                    "mask": f"{rel}/mask_anchor.pgm",
                    "camera": "camera.json",
                    "pose": f"{rel}/pose_anchor.json",
                    "features": f"{rel}/features_anchor.feat",
                },
                "query": {
                    "depth": f"{rel}/depth_query.pgm",
                    "mask": f"{rel}/mask_query.pgm",
                    "camera": "camera.json",
                    "pose": f"{rel}/pose_query.json",
                    "features": f"{rel}/features_query.feat",
                },
            }
        )

    io.write_json(out / "pairs.json", {"pairs": entries})
    io.write_json(
        out / "synth_config.json",
        {
            "pairs": args.pairs,
            "seed": args.seed,
            "image_size": size,
            "focal": args.focal,
            "model_kind": args.model_kind,
            "model_points": args.model_points,
            "model_size": args.model_size,
            "cyclic_order": args.cyclic_order,
            "feature_dim": args.feature_dim,
            "noise": args.noise,
            "outlier_fraction": args.outlier_fraction,
            "background_depth": args.background_depth,
            "max_view_angle": args.max_view_angle,
        },
    )
    print(f"wrote {args.pairs} pairs to {out}")
    return 0


# ---------------------------------------------------------- gen-matches --


def cmd_gen_matches(args) -> int:
    cfg = _config_from_args(args)
    pairs = load_pairs(cfg.pairs_file)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    def work(entry: PairEntry):
        depth_a, mask_a, cam_a, pose_a = _load_view(entry.anchor)
        depth_q, mask_q, cam_q, pose_q = _load_view(entry.query)
        pair = generate_gt_matches(
            depth_a, depth_q, mask_a, mask_q, cam_a, cam_q, pose_a, pose_q,
            nn_radius=cfg.nn_radius,
        )
        accepted = accept_pair(pair, cfg.min_matches)
        if accepted:
            io.write_matches(out / f"{entry.pair_id}.json", pair)
        return {"count": len(pair), "accepted": accepted}

    results, failures = _run_pairs(pairs, work, cfg.workers)
    summary = {
        "accepted": sorted(pid for pid, r in results if r["accepted"]),
        "rejected": {
            pid: r["count"] for pid, r in sorted(results) if not r["accepted"]
        },
        "errors": dict(sorted(failures)),
        "min_matches": cfg.min_matches,
        "nn_radius": cfg.nn_radius,
    }
    io.write_json(out / "summary.json", summary)
    _print_failures(failures)
    n_rej = len(summary["rejected"])
    print(
        f"matched {len(summary['accepted'])} pair(s), rejected {n_rej}, "
        f"failed {len(failures)}"
    )
    return 1 if failures else 0


# -------------------------------------------------------------- register --


def cmd_register(args) -> int:
    cfg = _config_from_args(args)
    pairs = load_pairs(cfg.pairs_file)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    reg_seed = derive_seed(cfg.seed, "registration")

    def work(entry: PairEntry):
        if entry.anchor.features is None or entry.query.features is None:
            raise ConfigError("pair has no feature files")
        depth_a, mask_a, cam_a, _ = _load_view(entry.anchor)
        depth_q, mask_q, cam_q, _ = _load_view(entry.query)
        feat_a = io.read_features(entry.anchor.features)
        feat_q = io.read_features(entry.query.features)

        grid_a = feat_a.shape[:2]
        grid_q = feat_q.shape[:2]
        matches = match_features(
            feat_a,
            feat_q,
            downsample_mask(mask_a, grid_a),
            downsample_mask(mask_q, grid_q),
            cfg.match,
        )
        lifted = lift_matches(
            matches, depth_a, depth_q, cam_a, cam_q, grid_a, grid_q
        )
        params = dataclasses.replace(
            cfg.registration, seed=_pair_seed(reg_seed, entry.pair_id)
        )
        result = register_spatial_consistency(lifted, params)
        payload = {
            "pose": io.pose_to_dict(result.pose),
            "num_matches": len(matches),
            "num_lifted": len(lifted),
            "num_inliers": int(len(result.inliers)),
            "mean_residual": result.mean_residual,
        }
        io.write_json(out / f"{entry.pair_id}.json", payload)
        return payload

    results, failures = _run_pairs(pairs, work, cfg.workers)
    io.write_json(
        out / "summary.json",
        {
            "registered": sorted(pid for pid, _ in results),
            "errors": dict(sorted(failures)),
        },
    )
    _print_failures(failures)
    print(f"registered {len(results)} pair(s), failed {len(failures)}")
    return 1 if failures else 0


# ---------------------------------------------------------------- eval --


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    pairs = load_pairs(cfg.pairs_file)
    pred_dir = Path(args.predictions)
    if not pred_dir.exists():
        raise ConfigError(f"predictions directory does not exist: {pred_dir}")

    def work(entry: PairEntry):
        pred_path = pred_dir / f"{entry.pair_id}.json"
        if not pred_path.exists():
            raise ConfigError(f"no prediction for pair: {pred_path.name}")
        payload = io.read_json(pred_path)
        pred_rel = io.pose_from_dict(
            payload["pose"] if "pose" in payload else payload
        )
        _, _, _, pose_a = _load_view(entry.anchor)
        depth_q, mask_q, cam_q, pose_q = _load_view(entry.query)
        model = io.read_model(entry.model)

        pred_mask = (
            io.read_mask(entry.pred_mask_query)
            if entry.pred_mask_query is not None
            else None
        )
        report = pair_report(
            model,
            pose_true=pose_q,
            pose_est=compose(pred_rel, pose_a),
            scene_depth=depth_q,
            intrinsics=cam_q,
            params=cfg.metrics,
            pred_mask=pred_mask,
            gt_mask=mask_q,
        )
        return report

    results, failures = _run_pairs(pairs, work, cfg.workers)
    if not results:
        _print_failures(failures)
        print("error: no pair could be evaluated", file=sys.stderr)
        return 1

    results.sort(key=lambda row: row[0])
    aggregate = aggregate_reports([r for _, r in results])
    payload = {
        "pairs": {pid: r.to_dict() for pid, r in results},
        "aggregate": aggregate,
        "errors": dict(sorted(failures)),
    }
    io.write_json(args.out, payload)

    header = f"{'pair':<14}{'ar':>8}{'vsd':>8}{'mssd':>8}{'mspd':>8}{'add':>8}{'miou':>8}"
    print(header)
    for pid, r in results:
        print(
            f"{pid:<14}{r.ar:>8.3f}{r.vsd:>8.3f}{r.mssd:>8.3f}"
            f"{r.mspd:>8.3f}{r.add:>8.3f}{r.miou:>8.3f}"
        )
    print(
        f"{'mean':<14}{aggregate['ar']:>8.3f}{aggregate['vsd']:>8.3f}"
        f"{aggregate['mssd']:>8.3f}{aggregate['mspd']:>8.3f}"
        f"{aggregate['add']:>8.3f}{aggregate['miou']:>8.3f}"
    )
    _print_failures(failures)
    return 1 if failures else 0


# --------------------------------------------------------------- losses --


def _pixels_to_cells(pixels: np.ndarray, grid_shape, camera: CameraIntrinsics):
    gh, gw = grid_shape
    u = np.clip(pixels[:, 0] * gw // camera.width, 0, gw - 1)
    v = np.clip(pixels[:, 1] * gh // camera.height, 0, gh - 1)
    return u.astype(np.int64), v.astype(np.int64)


def cmd_losses(args) -> int:
    cfg = _config_from_args(args)
    pairs = load_pairs(cfg.pairs_file)
    matches_dir = Path(args.matches) if args.matches else None
    max_samples = args.max_samples

    def work(entry: PairEntry):
        if entry.anchor.features is None or entry.query.features is None:
            raise ConfigError("pair has no feature files")
        depth_a, mask_a, cam_a, pose_a = _load_view(entry.anchor)
        depth_q, mask_q, cam_q, pose_q = _load_view(entry.query)
        feat_a = io.read_features(entry.anchor.features)
        feat_q = io.read_features(entry.query.features)

        if matches_dir is not None:
            gt = io.read_matches(matches_dir / f"{entry.pair_id}.json")
        else:
            gt = generate_gt_matches(
                depth_a, depth_q, mask_a, mask_q, cam_a, cam_q, pose_a, pose_q,
                nn_radius=cfg.nn_radius,
            )
        if len(gt) > max_samples:
            # Deterministic thinning: evenly spaced over the scan order.
            idx = np.linspace(0, len(gt) - 1, max_samples).astype(np.int64)
            anchor_px, query_px = gt.anchor[idx], gt.query[idx]
        else:
            anchor_px, query_px = gt.anchor, gt.query

        ua, va = _pixels_to_cells(anchor_px, feat_a.shape[:2], cam_a)
        uq, vq = _pixels_to_cells(query_px, feat_q.shape[:2], cam_q)
        set_a = FeatureSet(feat_a[va, ua], anchor_px.astype(np.float64))
        set_q = FeatureSet(feat_q[vq, uq], query_px.astype(np.float64))

        pos = positive_loss(set_a, set_q, cfg.loss)
        neg = hardest_negative_loss(set_a, set_q, cfg.loss)
        feat = feature_loss(pos, neg, cfg.loss)
        pred_mask = (
            io.read_mask(entry.pred_mask_query)
            if entry.pred_mask_query is not None
            else mask_q
        )
        mask_term = dice_loss(pred_mask.astype(np.float64), mask_q)
        return {
            "num_samples": int(len(set_a)),
            "positive": pos,
            "hardest_negative": neg,
            "feature": feat,
            "mask": mask_term,
            "total": total_loss(mask_term, feat, cfg.loss),
        }

    results, failures = _run_pairs(pairs, work, cfg.workers)
    results.sort(key=lambda row: row[0])
    payload = {"pairs": dict(results), "errors": dict(sorted(failures))}
    if results:
        import math

        n = len(results)
        payload["aggregate"] = {
            key: math.fsum(r[key] for _, r in results) / n
            for key in ("positive", "hardest_negative", "feature", "mask", "total")
        }
    io.write_json(args.out, payload)
    for pid, r in results:
        print(
            f"{pid}: positive {r['positive']:.6f}  "
            f"hardest-negative {r['hardest_negative']:.6f}  "
            f"feature {r['feature']:.6f}  mask {r['mask']:.6f}  "
            f"total {r['total']:.6f}"
        )
    _print_failures(failures)
    return 1 if failures else 0


# ---------------------------------------------------------------- main --


def _config_from_args(args) -> EvalConfig:
    workers_env = os.environ.get("CROSSPOSE_WORKERS")
    defaults = {}
    if workers_env is not None:
        try:
            defaults["workers"] = int(workers_env)
        except ValueError as exc:
            raise ConfigError(f"CROSSPOSE_WORKERS must be an integer: {exc}") from exc

    cfg = load_config(
        getattr(args, "config", None),
        defaults=defaults or None,
        pairs_file=getattr(args, "pairs", None),
        output_dir=getattr(args, "out_dir", None),
        workers=getattr(args, "workers", None),
        seed=getattr(args, "seed", None),
        nn_radius=getattr(args, "nn_radius", None),
        min_matches=getattr(args, "min_matches", None),
        match={
            "max_distance": getattr(args, "max_distance", None),
            "max_matches": getattr(args, "max_matches", None),
        },
        registration={
            "inlier_threshold": getattr(args, "inlier_threshold", None),
            "compatibility_tolerance": getattr(args, "compatibility_tolerance", None),
            "iterations": getattr(args, "iterations", None),
        },
        metrics={
            "occlusion_tolerance": getattr(args, "occlusion_tolerance", None),
        },
    )
    if cfg.pairs_file is None:
        raise ConfigError("a pairs manifest is required (--pairs or config file)")
    # eval/losses write one report file (args.out); the others need a directory.
    needs_out_dir = not hasattr(args, "out")
    if needs_out_dir and cfg.output_dir is None:
        raise ConfigError("an output directory is required (--out-dir or config file)")
    return cfg


def _add_common(parser, *, with_out_dir: bool):
    parser.add_argument("--pairs", help="pairs manifest JSON")
    parser.add_argument("--config", help="config file JSON")
    if with_out_dir:
        parser.add_argument("--out-dir", dest="out_dir", help="output directory")
    parser.add_argument("--workers", type=int, help="parallel workers")
    parser.add_argument("--seed", type=int, help="master seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crosspose",
        description="Cross-scene object pose pipeline on depth and features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="dataset directory")
    p.add_argument("--pairs", type=int, default=4, help="number of scene pairs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-size", type=int, default=96)
    p.add_argument("--focal", type=float, default=500.0,
                   help="focal length in pixels (narrow FOV keeps pixel rays tight)")
    p.add_argument("--model-kind", default="blob",
                   choices=["blob", "sphere", "box", "cylinder"])
    p.add_argument("--model-points", type=int, default=6000)
    p.add_argument("--model-size", type=float, default=0.01,
                   help="shape scale (radius / Gaussian scale)")
    p.add_argument("--cyclic-order", type=int, default=1,
                   help="declared rotational symmetry order")
    p.add_argument("--feature-dim", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--outlier-fraction", type=float, default=0.0)
    p.add_argument("--background-depth", type=float, default=0.8)
    p.add_argument("--max-view-angle", type=float, default=35.0,
                   help="largest relative rotation between views (degrees)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gen-matches", help="generate ground-truth matches")
    _add_common(p, with_out_dir=True)
    p.add_argument("--nn-radius", type=float, help="NN acceptance radius (m)")
    p.add_argument("--min-matches", type=int, help="pair rejection threshold")
    p.set_defaults(func=cmd_gen_matches)

    p = sub.add_parser("register", help="match features and estimate poses")
    _add_common(p, with_out_dir=True)
    p.add_argument("--max-distance", type=float, help="match distance threshold")
    p.add_argument("--max-matches", type=int, help="match count cap")
    p.add_argument("--inlier-threshold", type=float)
    p.add_argument("--compatibility-tolerance", type=float)
    p.add_argument("--iterations", type=int)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("eval", help="score predicted poses")
    _add_common(p, with_out_dir=False)
    p.add_argument("--predictions", required=True, help="register output directory")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--occlusion-tolerance", type=float)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("losses", help="forward loss diagnostics")
    _add_common(p, with_out_dir=False)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--matches", help="directory of match files (default: recompute)")
    p.add_argument("--max-samples", type=int, default=500)
    p.add_argument("--nn-radius", type=float)
    p.set_defaults(func=cmd_losses)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CrossposeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
