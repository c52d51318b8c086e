"""Procedural models and depth rendering.

Samples a few object models, renders one into a depth camera over a
background plane, and round-trips the images through the on-disk
formats without losing a bit.
"""

import tempfile
from pathlib import Path

import numpy as np

from crosspose import (
    CameraIntrinsics,
    Pose,
    io,
    make_model,
    random_rotation,
    render_scene,
)


def main():
    rng = np.random.default_rng(3)

    for kind in ("sphere", "box", "cylinder", "blob"):
        model = make_model(kind, n_points=2000, size=0.03, seed=1)
        print(f"{kind:9s} {len(model.points):5d} points, "
              f"diameter {model.diameter_m * 1000:.1f} mm, "
              f"symmetry poses (identity included): {len(model.symmetries)}")

    # A cylinder with a 6-fold symmetry declaration: the sampled cloud is
    # completed so every declared rotation maps it onto itself.
    gear = make_model("cylinder", n_points=3000, size=0.025, cyclic_order=6)
    print(f"6-fold cylinder carries {len(gear.symmetries)} symmetry poses")

    cam = CameraIntrinsics(fx=500.0, fy=500.0, cx=47.5, cy=47.5,
                           width=96, height=96)
    pose = Pose(random_rotation(rng), np.array([0.0, 0.01, 0.55]))
    scene = render_scene(gear, pose, cam, background_depth=0.8)

    on_object = scene.depth[scene.mask]
    print(f"rendered mask covers {int(scene.mask.sum())} px, "
          f"object depth {on_object.min():.3f}..{on_object.max():.3f} m, "
          f"background at {scene.depth[~scene.mask].max():.3f} m")

    # Depth is stored as 16-bit millimeters, masks as binary images;
    # because rendered depth is already millimeter-quantized the files
    # reproduce the arrays exactly.
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        io.write_depth(root / "depth.pgm", scene.depth)
        io.write_mask(root / "mask.pgm", scene.mask)
        same_depth = np.array_equal(io.read_depth(root / "depth.pgm"), scene.depth)
        same_mask = np.array_equal(io.read_mask(root / "mask.pgm"), scene.mask)
        print(f"depth file round-trips exactly: {same_depth}")
        print(f"mask file round-trips exactly:  {same_mask}")


if __name__ == "__main__":
    main()
