import math

import numpy as np
import pytest

from idcnet.curation import trajectory_span_score
from idcnet.evaluation import depth_consistency
from idcnet.geometry import Intrinsics, Pose, random_pose, reproject_depth, rot_y
from idcnet.scenes import (
    Plane,
    SceneSpec,
    Sphere,
    fronto_parallel_scene,
    make_trajectory,
    random_room,
    raycast_depth,
    raycast_render,
    render_sequence,
)

INTR = Intrinsics.from_fov(48, 32)


def test_fronto_parallel_plane_depth():
    f = raycast_render(fronto_parallel_scene(4.0), INTR, Pose.identity())
    np.testing.assert_allclose(f.depth, 4.0, atol=1e-12)
    assert f.rgb.shape == (32, 48, 3) and f.rgb.min() >= 0 and f.rgb.max() <= 1


def test_sphere_center_depth():
    intr = Intrinsics(40, 40, 24, 16, 48, 32)
    f = raycast_render(SceneSpec([Sphere([0, 0, 10], 1.0)]), intr, Pose.identity())
    assert abs(f.depth[16, 24] - 9.0) < 1e-12
    assert f.depth[0, 0] == 0 and np.all(f.rgb[0, 0] == 0)  # miss: sentinel depth, black


def _oracle_depth(scene, intr, pose, u, v):
    """Per-primitive brute-force intersection, one pixel at a time."""
    o = pose.center
    dcam = np.array([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0])
    d = pose.R.T @ dcam
    best = math.inf
    for p in scene.primitives:
        if isinstance(p, Plane):
            den = float(d @ p.normal)
            if den != 0:
                s = float((p.point - o) @ p.normal) / den
                if s > 1e-9:
                    best = min(best, s)
        else:
            oc = o - p.center
            a, b, c = d @ d, 2 * d @ oc, oc @ oc - p.radius**2
            disc = b * b - 4 * a * c
            if disc >= 0:
                for s in sorted([(-b - math.sqrt(disc)) / (2 * a), (-b + math.sqrt(disc)) / (2 * a)]):
                    if s > 1e-9:
                        best = min(best, s)
                        break
    # s is along a direction with unit camera-z, so it is the camera depth
    return 0.0 if math.isinf(best) else best


def test_random_scene_matches_oracle():
    rng = np.random.default_rng(4)
    for seed in range(3):
        scene = random_room(seed)
        scene.primitives.append(Plane([0, 0.5, 0], rng.normal(size=3)))
        pose = Pose.from_center(rot_y(rng.uniform(-0.5, 0.5)), rng.uniform(-0.5, 0.5, 3))
        f = raycast_render(scene, INTR, pose)
        for v in range(0, 32, 3):
            for u in range(0, 48, 5):
                ref = _oracle_depth(scene, INTR, pose, u, v)
                assert abs(f.depth[v, u] - ref) < 1e-9 * max(1, ref)


def test_static_trajectory_frames_identical():
    traj = make_trajectory("forward", 4, 0.0, INTR)
    seq = render_sequence(random_room(1), traj)
    for i in range(1, 4):
        np.testing.assert_array_equal(seq.rgb[i], seq.rgb[0])
        np.testing.assert_array_equal(seq.depth[i], seq.depth[0])


def test_forward_motion_plane_depth():
    seq = render_sequence(fronto_parallel_scene(5.0), make_trajectory("forward", 5, 0.3, INTR))
    for i in range(5):
        np.testing.assert_allclose(seq.depth[i], 5.0 - 0.3 * i, atol=1e-12)


def test_render_deterministic():
    traj = make_trajectory("orbit", 3, 0.1, INTR)
    a = render_sequence(random_room(2), traj)
    b = render_sequence(random_room(2), traj)
    assert a.rgb.tobytes() == b.rgb.tobytes() and a.depth.tobytes() == b.depth.tobytes()


def test_rooms_cover_frustum():
    for seed in range(4):
        for kind in ("forward", "strafe"):
            seq = render_sequence(random_room(seed), make_trajectory(kind, 13, 0.1, INTR))
            assert np.all(seq.depth > 0)


def test_cross_frame_consistency_fronto_parallel():
    seq = render_sequence(fronto_parallel_scene(4.0), make_trajectory("forward", 5, 0.25, INTR))
    stats = depth_consistency(seq)
    assert stats.mean_residual <= 1e-6 and stats.inlier_frac == 1.0
    seq = render_sequence(fronto_parallel_scene(4.0), make_trajectory("strafe", 5, 0.1, INTR))
    stats = depth_consistency(seq)
    assert stats.mean_residual <= 1e-6 and stats.inlier_frac == 1.0


def test_cross_frame_consistency_subpixel():
    """Warped points land within 0.5 px of destination pixels whose exact surface depth they match."""
    scene = random_room(3)
    traj = make_trajectory("orbit", 3, 0.05, INTR)
    seq = render_sequence(scene, traj)
    from idcnet.geometry import project, unproject

    vs, us = np.nonzero(seq.depth[0] > 0)
    X = unproject(INTR, traj[0], us.astype(float), vs.astype(float), seq.depth[0][vs, us])
    u2, v2, z2 = project(INTR, traj[2], X)
    ok = (u2 >= 0) & (u2 <= 47) & (v2 >= 0) & (v2 <= 31)
    s, _, _, _ = raycast_depth(scene, INTR, traj[2], u2[ok], v2[ok])
    visible = np.abs(s - z2[ok]) < 1e-6
    assert visible.mean() > 0.95  # the rest is occluded in frame 2
    warped, _, mask = reproject_depth(INTR, traj[0], seq.depth[0], traj[2])
    assert np.all(np.abs(np.rint(u2[ok]) - u2[ok]) <= 0.5)
    rel = np.abs(warped[mask] - seq.depth[2][mask]) / seq.depth[2][mask]
    assert np.median(rel) < 0.01


def test_make_trajectory_forward():
    traj = make_trajectory("forward", 3, 1.0, INTR)
    np.testing.assert_allclose([p.center for p in traj.poses], [[0, 0, 0], [0, 0, 1], [0, 0, 2]], atol=1e-15)


def test_make_trajectory_strafe_and_unknown():
    traj = make_trajectory("strafe", 3, 0.5, INTR)
    np.testing.assert_allclose(traj[2].center, [1.0, 0, 0])
    with pytest.raises(ValueError):
        make_trajectory("spiral", 3, 0.1, INTR)
    with pytest.raises(ValueError):
        make_trajectory("forward", 0, 0.1, INTR)


@pytest.mark.parametrize("n", [4, 7, 12])
def test_orbit_closure(n):
    traj = make_trajectory("orbit", n + 1, 2 * math.pi / n, INTR)
    assert np.max(np.abs(traj[n].matrix - traj[0].matrix)) < 1e-6


def test_orbit_faces_pivot():
    traj = make_trajectory("orbit", 5, 0.3, INTR, pivot_distance=4.0)
    for p in traj.poses:
        np.testing.assert_allclose(p.R @ [0, 0, 4.0] + p.t, [0, 0, 4.0], atol=1e-12)


@pytest.mark.parametrize("gamma", [0.0, 1.0, 7.5])
def test_forward_span_score(gamma):
    assert abs(trajectory_span_score(make_trajectory("forward", 6, 0.4, INTR), gamma) - 2.0) < 1e-12


def test_scene_dict_round_trip():
    scene = random_room(5)
    back = SceneSpec.from_dict(scene.to_dict())
    pose = random_pose(np.random.default_rng(0), scale=0.2)
    a = raycast_render(scene, INTR, pose)
    b = raycast_render(back, INTR, pose)
    np.testing.assert_array_equal(a.depth, b.depth)


def test_invalid_primitives():
    with pytest.raises(ValueError):
        Sphere([0, 0, 0], 0.0)
    with pytest.raises(ValueError):
        Plane([0, 0, 0], [0, 0, 0])
    with pytest.raises(ValueError):
        SceneSpec([])
