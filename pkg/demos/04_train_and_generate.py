# %% [markdown]
# Two training stages on a handful of rooms, then generation along a new path.
#
# Stage 1 learns to turn a first frame into an RGB-D clip with no camera input.
# Stage 2 adds the camera branch with a zero output projection, so it starts
# exactly where stage 1 ended. Sizes are kept small so this runs in a few
# minutes on a laptop CPU; raise STEPS for better samples.

# %%
import os

import numpy as np

from idcnet.evaluation import depth_consistency, psnr
from idcnet.inference import generate
from idcnet.scenes import make_trajectory
from idcnet.training import RunConfig, build_dataset, train_stage1, train_stage2

STEPS = int(os.environ.get("STEPS", 400))
config = {
    "training": {"steps": STEPS, "batch": 4, "log_every": 100},
    "dataset": {"scenes": [0, 1], "trajectories": [{"kind": "forward", "step": 0.1}, {"kind": "strafe", "step": 0.1}]},
}
run1 = RunConfig.from_dict(config)
run2 = RunConfig.from_dict({**config, "training": {**config["training"], "stage": 2}})
data = build_dataset(run1.dataset, run1.codec)
print(len(data.clips), "clips, depth divisor", round(data.depth_divisor, 3))

# %%
stage1 = train_stage1(run1, data)
stage2 = train_stage2(run2, stage1.model, data)
print("stage 1 loss", np.round(stage1.losses[:3], 3), "...", np.round(np.mean(stage1.losses[-50:]), 4))
print("stage 2 loss", np.round(stage2.losses[:3], 3), "...", np.round(np.mean(stage2.losses[-50:]), 4))

# %% [markdown]
# Generate both trajectories from the same first frame and check which path
# explains each generated depth sequence better.

# %%
clip = data.clips[0]
intr = run1.dataset.intrinsics()
paths = {k: make_trajectory(k, 13, 0.1, intr) for k in ("forward", "strafe")}
sched = run1.schedule.build()
for kind, traj in paths.items():
    seq = generate(stage2.model, clip.rgb[0], clip.depth[0], traj, data.depth_divisor, sched, run1.codec, seed=11)
    fit = {k: depth_consistency(seq, "anchor", trajectory=p).mean_rel_residual for k, p in paths.items()}
    target = next(c for c in data.clips if c.meta["kind"] == kind and c.meta["scene"] == 0)
    print(f"requested {kind:7s} psnr {psnr(seq.rgb, target.rgb):5.2f} dB  residuals", {k: round(v, 4) for k, v in fit.items()})
