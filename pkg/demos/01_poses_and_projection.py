"""Rigid poses and the pinhole camera.

Builds a pose, composes it with another, projects a small cloud into a
camera and unprojects the rendered depth back out, showing that the
geometry primitives invert each other.
"""

import numpy as np

from crosspose import (
    CameraIntrinsics,
    Pose,
    compose,
    project,
    relative_pose,
    rotation_about_axis,
    unproject,
)


def main():
    rng = np.random.default_rng(0)

    # A pose maps model coordinates into the camera frame.
    quarter = rotation_about_axis((0.0, 0.0, 1.0), np.pi / 2)
    pose_a = Pose(quarter, np.array([0.02, -0.01, 0.6]))
    pose_b = Pose(rotation_about_axis((1.0, 0.0, 0.0), 0.3),
                  np.array([0.0, 0.03, 0.55]))

    point = np.array([[0.05, 0.0, 0.0]])
    print("point in model frame:  ", point[0])
    print("seen by camera A:      ", pose_a.apply(point)[0])

    # compose(b, a) applies a first; relative_pose(a, b) maps frame A
    # coordinates into frame B and is exactly their difference.
    rel = relative_pose(pose_a, pose_b)
    direct = pose_b.apply(point)
    via_rel = rel.apply(pose_a.apply(point))
    print("A-then-relative agrees with B:", np.allclose(direct, via_rel))
    round_trip = compose(rel.inverse(), rel)
    print("relative composed with its inverse ~ identity:",
          np.allclose(round_trip.rotation, np.eye(3)))

    # Projection sends camera-frame points to (u, v) pixels; unprojection
    # of a depth image reverses it pixel for pixel.
    cam = CameraIntrinsics(fx=500.0, fy=500.0, cx=47.5, cy=47.5,
                           width=96, height=96)
    cloud = rng.uniform(-0.03, 0.03, size=(200, 3)) + [0.0, 0.0, 0.6]
    proj = project(cloud, cam)
    print(f"{int(proj.in_image.sum())} of {len(cloud)} points land on the sensor")

    depth = np.zeros((96, 96))
    uv = np.rint(proj.uv[proj.in_image]).astype(int)
    depth[uv[:, 1], uv[:, 0]] = cloud[proj.in_image, 2]
    recovered = unproject(depth, cam)
    print(f"unprojected {len(recovered.points)} pixels back to 3D; "
          f"depth column matches: "
          f"{np.allclose(recovered.points[:, 2], depth[depth > 0])}")


if __name__ == "__main__":
    main()
