# %% [markdown]
# Filtering clips by length and camera motion.

# %%
import numpy as np

from idcnet.curation import ClipRecord, CurationConfig, curate, trajectory_span_score
from idcnet.geometry import Intrinsics
from idcnet.scenes import make_trajectory

intr = Intrinsics.from_fov(64, 48)
clips = [
    ClipRecord("dolly", make_trajectory("forward", 120, 0.05, intr)),
    ClipRecord("orbit", make_trajectory("orbit", 120, 0.02, intr)),
    ClipRecord("still", make_trajectory("forward", 120, 0.0, intr)),
    ClipRecord("short", make_trajectory("strafe", 40, 0.05, intr)),
]
for c in clips:
    if len(c.trajectory) > 1:
        print(f"{c.id:6s} span {trajectory_span_score(c.trajectory, gamma=1.0):.3f}")

# %% [markdown]
# Keep clips of at least 98 frames whose span exceeds 1.0.

# %%
report = curate(clips, CurationConfig(span_threshold=1.0))
print("kept", report.kept)
print("dropped", report.dropped)
print("reasons", dict(report.reason_counts))
print("histogram counts", report.histogram["counts"], "edges", np.round(report.histogram["edges"], 2))
