# %% [markdown]
# Cameras, rays and the ray-cast renderer.
#
# Poses map world points into the camera frame (x_cam = R x + t). A pixel with
# known depth lifts to a world point, and that point projects back onto the
# same pixel from the same camera.

# %%
import numpy as np

from idcnet.geometry import Intrinsics, Pose, backproject_pixel, plucker_field, project_point, random_pose, reproject_depth
from idcnet.scenes import make_trajectory, random_room, render_sequence

intr = Intrinsics.from_fov(48, 32, fov_x_deg=60.0)
print(intr)

rng = np.random.default_rng(0)
pose = random_pose(rng, scale=2.0)
X = backproject_pixel(intr, pose, 10.0, 7.5, 3.2)
print("world point", X, "-> pixel", project_point(intr, pose, X))

# %% [markdown]
# Render a procedural room along a forward dolly and look at the depth range.

# %%
scene = random_room(0)
traj = make_trajectory("forward", 13, 0.1, intr)
seq = render_sequence(scene, traj)
print(seq.rgb.shape, seq.depth.shape, "depth range", seq.depth.min().round(3), seq.depth.max().round(3))

# %% [markdown]
# Warping frame 0's depth into frame 6 with the true poses reproduces frame 6's
# depth up to the nearest-pixel splat.

# %%
warped, _, mask = reproject_depth(intr, traj[0], seq.depth[0], traj[6])
err = np.abs(warped[mask] - seq.depth[6][mask])
print(f"coverage {mask.mean():.3f}, median |dz| {np.median(err):.2e}")

# %% [markdown]
# Plücker rays: unit direction plus moment, one 6-vector per pixel.

# %%
field = plucker_field(intr, Pose.from_center(np.eye(3), [0.3, 0.0, 0.0]))
d, m = field[:3], field[3:]
print(field.shape, "max |d|-1", np.abs(np.linalg.norm(d, axis=0) - 1).max(), "max d.m", np.abs((d * m).sum(0)).max())
