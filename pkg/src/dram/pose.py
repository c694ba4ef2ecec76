"""Quaternion pose features over a fixed upper-body skeleton.

Quaternions are stored ``(w, x, y, z)``. A pose frame is ``(J, 4)`` and the
flattened pose vector is ``J * 4 = 48`` values for the default skeleton.

Forward kinematics uses per-joint local rotations that orient the joint's
own incoming bone: ``G_j = G_parent(j) * q_j`` and
``pos_j = pos_parent(j) + G_j . offset_j``. The root sits at the origin
(body translation is not modeled).
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

GROUPS = ("Torso", "Head", "Neck", "RArm", "LArm", "RWrist", "LWrist")
AUDIO_DIM = 23
QUAT_NORM_TOL = 1e-6


class PoseError(ValueError):
    pass


class DegenerateGeometryError(PoseError):
    pass


class RigidityError(PoseError):
    pass


class NormalizationError(PoseError):
    pass


class StreamError(ValueError):
    pass


@dataclass(frozen=True)
class SkeletonTopology:
    names: tuple[str, ...]
    parents: tuple[int, ...]
    offsets: np.ndarray  # (J, 3) rest offsets from the parent, cm
    groups: tuple[str, ...]

    def __post_init__(self):
        n = len(self.names)
        if not (len(self.parents) == len(self.groups) == n and self.offsets.shape == (n, 3)):
            raise PoseError("topology fields have inconsistent lengths")
        roots = [j for j, p in enumerate(self.parents) if p < 0]
        if roots != [0]:
            raise PoseError(f"joint 0 must be the only root, got roots {roots}")
        for j, p in enumerate(self.parents[1:], start=1):
            if not 0 <= p < j:
                raise PoseError(f"joint {self.names[j]!r} has parent {p}; parents must precede children")
        unknown = set(self.groups) - set(GROUPS)
        if unknown:
            raise PoseError(f"unknown report groups {sorted(unknown)}")

    @property
    def n_joints(self) -> int:
        return len(self.names)

    @property
    def pose_dim(self) -> int:
        return 4 * self.n_joints

    def group_joints(self, group: str) -> list[int]:
        return [j for j, g in enumerate(self.groups) if g == group]

    def joint_index(self, name: str) -> int:
        return self.names.index(name)


def load_topology(path: str | Path) -> SkeletonTopology:
    """Parse ``name parent offset_x offset_y offset_z group`` lines; ``#`` starts a comment."""
    names, parents, offsets, groups = [], [], [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 6:
            raise PoseError(f"{path}:{lineno}: expected 6 fields, got {len(fields)}")
        names.append(fields[0])
        parents.append(int(fields[1]))
        offsets.append([float(v) for v in fields[2:5]])
        groups.append(fields[5])
    return SkeletonTopology(tuple(names), tuple(parents), np.array(offsets, dtype=np.float64), tuple(groups))


def default_topology() -> SkeletonTopology:
    with resources.as_file(resources.files("dram") / "upper_body_12.skel") as p:
        return load_topology(p)


# quaternion algebra -----------------------------------------------------------

def qmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def qconj(q: np.ndarray) -> np.ndarray:
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def qrotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate 3-vectors ``v`` by unit quaternions ``q``."""
    w = q[..., :1]
    u = q[..., 1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def qnormalize(q: np.ndarray) -> np.ndarray:
    """Unit-normalize; near-zero quaternions fall back to identity."""
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    ident = np.zeros_like(q)
    ident[..., 0] = 1.0
    safe = n > 1e-12
    return np.where(safe, q / np.where(safe, n, 1.0), ident)


def quat_from_rotvec(rv: np.ndarray) -> np.ndarray:
    rv = np.asarray(rv, dtype=np.float64)
    angle = np.linalg.norm(rv, axis=-1, keepdims=True)
    half = 0.5 * angle
    # sin(half)/angle with its series near zero
    small = angle < 1e-8
    k = np.where(small, 0.5 - angle**2 / 48.0, np.sin(half) / np.where(small, 1.0, angle))
    return np.concatenate([np.cos(half), rv * k], axis=-1)


def quat_between(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Minimal rotation taking direction ``u`` onto direction ``v`` (no twist)."""
    u = u / np.linalg.norm(u, axis=-1, keepdims=True)
    v = v / np.linalg.norm(v, axis=-1, keepdims=True)
    dot = np.sum(u * v, axis=-1, keepdims=True)
    q = np.concatenate([1.0 + dot, np.cross(u, v)], axis=-1)
    anti = (1.0 + dot[..., 0]) < 1e-12
    if np.any(anti):
        # half-turn about any axis orthogonal to u
        ua = u[anti]
        helper = np.where(np.abs(ua[:, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
        axis = np.cross(ua, helper)
        q[anti] = np.concatenate([np.zeros((len(ua), 1)), axis], axis=-1)
    return qnormalize(q)


# pose <-> positions -------------------------------------------------------------

def _as_joint_quats(pose: np.ndarray, topology: SkeletonTopology) -> np.ndarray:
    pose = np.asarray(pose, dtype=np.float64)
    if pose.shape[-1] == topology.pose_dim:
        pose = pose.reshape(pose.shape[:-1] + (topology.n_joints, 4))
    if pose.shape[-2:] != (topology.n_joints, 4):
        raise PoseError(f"pose shape {pose.shape} does not fit a {topology.n_joints}-joint skeleton")
    return pose


def rotations_to_positions(pose: np.ndarray, topology: SkeletonTopology) -> np.ndarray:
    """Forward kinematics: ``(..., 48)`` or ``(..., J, 4)`` -> ``(..., J, 3)`` in cm."""
    q = _as_joint_quats(pose, topology)
    norm_err = np.abs(np.linalg.norm(q, axis=-1) - 1.0)
    if norm_err.size and norm_err.max() > QUAT_NORM_TOL:
        raise NormalizationError(f"non-unit quaternion (|norm - 1| = {norm_err.max():.3g})")
    glob = np.empty_like(q)
    pos = np.zeros(q.shape[:-1] + (3,))
    glob[..., 0, :] = q[..., 0, :]
    for j in range(1, topology.n_joints):
        par = topology.parents[j]
        glob[..., j, :] = qmul(glob[..., par, :], q[..., j, :])
        pos[..., j, :] = pos[..., par, :] + qrotate(glob[..., j, :], topology.offsets[j])
    return pos


def positions_to_rotations(frame: np.ndarray, topology: SkeletonTopology, rel_tol: float = 1e-6) -> np.ndarray:
    """Recover local joint rotations ``(..., J, 4)`` from positions ``(..., J, 3)``.

    Each joint gets the minimal rotation that carries its rest bone direction
    onto the observed one; twist about the bone is unobservable and set to zero.
    The root rotation is the identity.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape[-2:] != (topology.n_joints, 3):
        raise PoseError(f"position frame shape {frame.shape} does not fit a {topology.n_joints}-joint skeleton")
    q = np.zeros(frame.shape[:-1] + (4,))
    glob = np.zeros_like(q)
    q[..., 0, 0] = 1.0
    glob[..., 0, 0] = 1.0
    for j in range(1, topology.n_joints):
        par = topology.parents[j]
        rest = topology.offsets[j]
        rest_len = np.linalg.norm(rest)
        bone = frame[..., j, :] - frame[..., par, :]
        bone_len = np.linalg.norm(bone, axis=-1)
        if rest_len == 0.0 or np.any(bone_len == 0.0):
            raise DegenerateGeometryError(f"zero-length bone at joint {topology.names[j]!r}")
        dev = np.abs(bone_len - rest_len) / rest_len
        if dev.max() > rel_tol:
            raise RigidityError(
                f"bone {topology.names[j]!r} length deviates from rest by {dev.max():.3g} (tolerance {rel_tol})")
        local_dir = qrotate(qconj(glob[..., par, :]), bone)
        q[..., j, :] = quat_between(np.broadcast_to(rest, local_dir.shape), local_dir)
        glob[..., j, :] = qmul(glob[..., par, :], q[..., j, :])
    return q


def hemisphere_fix(seq: np.ndarray) -> np.ndarray:
    """Pick quaternion signs so frame 0 has ``w >= 0`` and consecutive frames agree.

    Accepts ``(T, J, 4)`` or ``(T, 4J)``; returns the same layout.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if seq.shape[0] == 0:
        raise PoseError("hemisphere_fix needs a non-empty sequence")
    flat = seq.ndim == 2
    q = seq.reshape(seq.shape[0], -1, 4)
    dots = np.sum(q[1:] * q[:-1], axis=-1)
    step = np.where(dots < 0.0, -1.0, 1.0)
    first = np.where(q[0, :, 0] < 0.0, -1.0, 1.0)
    signs = np.cumprod(np.concatenate([first[None], step], axis=0), axis=0)
    out = q * signs[..., None]
    return out.reshape(seq.shape) if flat else out


def normalize_pose(pose: np.ndarray) -> np.ndarray:
    """Unit-normalize each joint quaternion of ``(..., 4J)`` pose vectors."""
    pose = np.asarray(pose, dtype=np.float64)
    q = pose.reshape(pose.shape[:-1] + (-1, 4))
    return qnormalize(q).reshape(pose.shape)


def identity_pose(n_joints: int = 12) -> np.ndarray:
    pose = np.zeros((n_joints, 4))
    pose[:, 0] = 1.0
    return pose.reshape(-1)


# audio streams -------------------------------------------------------------------

def align_to_90hz(stream: np.ndarray, rate: float, target_rate: float = 90.0) -> np.ndarray:
    """Resample ``(N, C)`` frames at ``rate`` Hz onto ``n / target_rate`` timestamps.

    The output covers the source span ``[0, (N - 1) / rate]`` with
    ``floor(duration * target_rate) + 1`` linearly interpolated frames.
    """
    stream = np.asarray(stream, dtype=np.float64)
    if stream.ndim == 1:
        stream = stream[:, None]
    if stream.shape[0] == 0:
        raise StreamError("cannot align an empty stream")
    if rate <= 0:
        raise StreamError(f"source rate must be positive, got {rate}")
    if stream.shape[0] < 2:
        raise StreamError("need at least two source frames to interpolate")
    if rate == target_rate:
        return stream.copy()
    duration = (stream.shape[0] - 1) / rate
    n_out = int(np.floor(duration * target_rate + 1e-9)) + 1
    t_src = np.arange(stream.shape[0]) / rate
    t_out = np.arange(n_out) / target_rate
    return np.stack([np.interp(t_out, t_src, stream[:, c]) for c in range(stream.shape[1])], axis=1)
