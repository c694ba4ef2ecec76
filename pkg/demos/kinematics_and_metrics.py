"""Pose plumbing on its own: quaternion poses to centimetre keypoints and back,
double-cover handling, and the two scores used for evaluation.

    python demos/kinematics_and_metrics.py
"""

import numpy as np

from dram.metrics import SIGMA_GRID, metrics_report
from dram.pose import (default_topology, hemisphere_fix, identity_pose, normalize_pose, positions_to_rotations,
                       rotations_to_positions)

topo = default_topology()
print("joints:", ", ".join(topo.names))

rest = rotations_to_positions(identity_pose(12), topo)
print("rest pose, head at", np.round(rest[topo.names.index("Head")], 2), "cm")

rng = np.random.default_rng(1)
pose = normalize_pose(rng.normal(size=48) * 0.3 + identity_pose(12))
pos = rotations_to_positions(pose, topo)
back = rotations_to_positions(positions_to_rotations(pos, topo), topo)
print(f"positions -> rotations -> positions error: {np.abs(back - pos).max():.2e} cm")

# q and -q are the same rotation; hemisphere_fix picks a consistent sign without moving any joint
seq = np.stack([pose, -pose, pose])
fixed = hemisphere_fix(seq)
print("signs of root w before/after fix:", np.sign(seq[:, 0]), np.sign(fixed[:, 0]))
print(f"keypoint change from the fix: {np.abs(rotations_to_positions(fixed, topo) - rotations_to_positions(seq, topo)).max():.1e}")

# score a jittered copy of a short clip
clip = normalize_pose(identity_pose(12) + rng.normal(size=(50, 48)) * 0.1)
noisy = normalize_pose(clip + rng.normal(size=clip.shape) * 0.05)
rep = metrics_report(rotations_to_positions(noisy, topo), rotations_to_positions(clip, topo), topo)
print(f"APE {rep.ape_avg:.3f} cm;", ", ".join(f"{g} {v:.2f}" for g, v in rep.ape_groups.items()))
print("PCK:", ", ".join(f"{s:g}cm {rep.pck[s]:.2f}" for s in SIGMA_GRID))
