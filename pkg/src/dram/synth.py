"""Synthetic dyadic conversations with labeled interpersonal events.

Each participant runs the same generative process: smooth audio descriptors
with sparse emphasis bursts, a per-sequence resting posture, beat gestures
that follow a causally filtered emphasis envelope, and slow postural noise.
The avatar additionally reacts to the human during labeled events, after a
fixed reaction lag:

* ``head_nod_mirror``: the human nods at ``nod_frequency``; the avatar's head
  blends toward the human's head rotation.
* ``pose_switch``: the human's hips step to a new orientation; the avatar's
  hips blend toward it.
* ``interruption``: the human's audio carries a loud burst; the avatar's head
  pitches up following the burst envelope.

All randomness flows from ``numpy.random.SeedSequence`` children, so the
avatar's own motion never depends on the human stream's seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .pose import GROUPS, SkeletonTopology, default_topology, hemisphere_fix, load_topology, quat_from_rotvec

FRAME_RATE = 90.0
EVENT_KINDS = ("head_nod_mirror", "pose_switch", "interruption")
_EVENT_GROUP = {"head_nod_mirror": "Head", "pose_switch": "Torso", "interruption": "Head"}
# (min, max) event duration in seconds
_EVENT_SECONDS = {"head_nod_mirror": (2.0, 3.5), "pose_switch": (3.0, 5.0), "interruption": (1.5, 3.0)}
_MIN_GAP_SECONDS = 1.0
_RAMP_SECONDS = 0.25


class SynthConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    duration: int = 5400
    a: int = 23
    p: int = 48
    topology: str | None = None
    g_intra: float = 1.0
    g_inter: float = 1.0
    event_rate: float = 3.0
    event_kinds: tuple[str, ...] = EVENT_KINDS
    reaction_lag: int = 9
    noise_scale: float = 0.25
    posture_spread: float = 0.25
    seed: int = 0
    human_seed: int | None = None
    beat_amplitude: float = 1.0
    emphasis_rate: float = 0.6
    nod_amplitude: float = 0.25
    nod_frequency: float = 2.0
    switch_amplitude: float = 0.25
    interruption_amplitude: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "event_kinds", tuple(self.event_kinds))
        problems = []
        if self.duration < 2:
            problems.append("duration")
        if self.a < 4:
            problems.append("a")
        if self.g_intra < 0:
            problems.append("g_intra")
        if self.g_inter < 0:
            problems.append("g_inter")
        if self.event_rate < 0:
            problems.append("event_rate")
        if self.reaction_lag < 0:
            problems.append("reaction_lag")
        if self.noise_scale < 0:
            problems.append("noise_scale")
        if self.posture_spread < 0:
            problems.append("posture_spread")
        if set(self.event_kinds) - set(EVENT_KINDS) or not self.event_kinds:
            problems.append("event_kinds")
        if problems:
            raise SynthConfigError(f"invalid synth config fields: {', '.join(problems)}")

    def load_topology(self) -> SkeletonTopology:
        topo = load_topology(self.topology) if self.topology else default_topology()
        if topo.pose_dim != self.p:
            raise SynthConfigError(f"p={self.p} does not match the topology's {topo.pose_dim} pose dims")
        return topo


@dataclass(frozen=True)
class EventLabel:
    kind: str
    start: int
    end: int
    onset: int
    group: str


@dataclass
class DyadicSequence:
    X: np.ndarray   # avatar audio (T, a)
    Y: np.ndarray   # avatar pose (T, p)
    XH: np.ndarray  # human audio (T, a)
    YH: np.ndarray  # human pose (T, p)
    labels: list[EventLabel] = field(default_factory=list)

    @property
    def T(self) -> int:
        return self.X.shape[0]

    def event_mask(self, kinds=None) -> np.ndarray:
        mask = np.zeros(self.T, dtype=bool)
        for lab in self.labels:
            if kinds is None or lab.kind in kinds:
                mask[lab.start: lab.end] = True
        return mask

    def equals(self, other: DyadicSequence) -> bool:
        return (all(np.array_equal(getattr(self, n), getattr(other, n)) for n in ("X", "Y", "XH", "YH"))
                and self.labels == other.labels)


@dataclass
class DatasetSplit:
    train: list
    val: list
    test: list
    ratios: tuple[float, float, float]


# building blocks -----------------------------------------------------------------

def _lowpass(x: np.ndarray, alpha: float, passes: int = 1) -> np.ndarray:
    for _ in range(passes):
        x = lfilter([alpha], [1.0, alpha - 1.0], x, axis=0)
    return x


def _smooth_noise(rng: np.random.Generator, shape, alpha: float, passes: int) -> np.ndarray:
    x = _lowpass(rng.standard_normal(shape), alpha, passes)
    return x / (x.std(axis=0, keepdims=True) + 1e-12)


def _bumps(rng: np.random.Generator, T: int, rate_per_s: float, dur_s=(0.15, 0.35), amp=(0.6, 1.4)) -> np.ndarray:
    env = np.zeros(T)
    n = rng.poisson(rate_per_s * T / FRAME_RATE)
    onsets = rng.integers(0, T, size=n)
    durs = rng.uniform(*dur_s, size=n) * FRAME_RATE
    amps = rng.uniform(*amp, size=n)
    for t0, d, h in zip(onsets, durs, amps):
        w = max(int(d), 3)
        seg = h * np.hanning(w)
        t1 = min(T, t0 + w)
        env[t0:t1] += seg[: t1 - t0]
    return env


def _envelope(T: int, start: int, end: int) -> np.ndarray:
    """Smooth 0..1 window supported on ``[start, end)``."""
    env = np.zeros(T)
    n = end - start
    ramp = max(1, min(int(_RAMP_SECONDS * FRAME_RATE), n // 2))
    u = np.ones(n)
    r = 0.5 - 0.5 * np.cos(np.pi * (np.arange(ramp) + 1) / (ramp + 1))
    u[:ramp] = r
    u[n - ramp:] = r[::-1]
    env[start:end] = u[: max(0, min(T, end) - start)]
    return env


def _lagged(x: np.ndarray, lag: int) -> np.ndarray:
    if lag == 0:
        return x.copy()
    out = np.zeros_like(x)
    out[lag:] = x[:-lag]
    return out


@dataclass
class _Persona:
    audio: np.ndarray      # (T, a)
    rotvec: np.ndarray     # (T, J, 3)
    emphasis: np.ndarray   # (T,)


def _persona(rng: np.random.Generator, cfg: SynthConfig, topo: SkeletonTopology) -> _Persona:
    T, a, J = cfg.duration, cfg.a, topo.n_joints
    idx = topo.joint_index

    emphasis = _bumps(rng, T, cfg.emphasis_rate)
    audio = 0.5 * _smooth_noise(rng, (T, a), alpha=0.15, passes=1)
    audio[:, :4] += np.outer(emphasis, [1.5, 1.0, 0.8, 0.5])

    rv = np.zeros((T, J, 3))
    # resting posture, fixed per sequence
    rest = np.zeros((J, 3))
    spread = cfg.posture_spread
    for side in ("R", "L"):
        rest[idx(f"{side}Elbow")] = [-0.5 + spread * rng.uniform(-0.2, 0.2), 0.0, 0.0]
        rest[idx(f"{side}Shoulder")] = [-0.1 + spread * rng.uniform(-0.1, 0.1), 0.0,
                                        spread * rng.uniform(-0.15, 0.15)]
    rest[idx("Spine")] = [spread * rng.uniform(-0.1, 0.1), spread * rng.uniform(-0.1, 0.1), 0.0]
    rv += rest

    # beat gestures follow the causally filtered emphasis envelope
    drive = _lowpass(emphasis, alpha=0.08, passes=2)
    handed = rng.uniform(0.4, 1.0)
    amp = cfg.g_intra * cfg.beat_amplitude
    rv[:, idx("RElbow"), 0] -= amp * drive
    rv[:, idx("RShoulder"), 0] -= 0.4 * amp * drive
    rv[:, idx("RWrist"), 0] -= 0.5 * amp * drive
    rv[:, idx("LElbow"), 0] -= handed * amp * drive
    rv[:, idx("LShoulder"), 0] -= 0.4 * handed * amp * drive
    rv[:, idx("LWrist"), 0] -= 0.5 * handed * amp * drive
    rv[:, idx("Head"), 0] += 0.1 * amp * drive

    # slow postural noise; torso and neck move less than the limbs
    scale = np.full(J, 0.04)
    scale[[idx("Hips"), idx("Spine"), idx("Neck")]] = 0.015
    rv += cfg.noise_scale * scale[None, :, None] * _smooth_noise(rng, (T, J, 3), alpha=0.04, passes=2)
    return _Persona(audio, rv, emphasis)


def _sample_events(rng: np.random.Generator, cfg: SynthConfig) -> list[tuple[str, int, int]]:
    T = cfg.duration
    minutes = T / (60.0 * FRAME_RATE)
    gap = int(_MIN_GAP_SECONDS * FRAME_RATE)
    mean_len = np.mean([np.mean(_EVENT_SECONDS[k]) for k in cfg.event_kinds]) * FRAME_RATE
    expected = cfg.event_rate * minutes
    if expected * (mean_len + gap) > 0.8 * T:
        raise SynthConfigError(
            f"event_rate {cfg.event_rate}/min is infeasible for {T} frames "
            f"(expected events need {expected * (mean_len + gap):.0f} of {T} frames)")
    n = rng.poisson(expected)
    kinds = [cfg.event_kinds[i] for i in rng.integers(0, len(cfg.event_kinds), size=n)]
    lens = [int(rng.uniform(*_EVENT_SECONDS[k]) * FRAME_RATE) for k in kinds]
    while kinds and sum(lens) + gap * (len(lens) + 1) > T:
        kinds.pop()
        lens.pop()
    if not kinds:
        return []
    free = T - sum(lens) - gap * (len(lens) + 1)
    spare = np.floor(rng.dirichlet(np.ones(len(lens) + 1)) * free).astype(int)
    events, t = [], 0
    for kind, length, extra in zip(kinds, lens, spare):
        t += gap + extra
        events.append((kind, t, t + length))
        t += length
    return events


def generate_sequence(cfg: SynthConfig, index: int = 0) -> DyadicSequence:
    """Generate sequence ``index`` of the corpus defined by ``cfg``."""
    topo = cfg.load_topology()
    T, lag = cfg.duration, cfg.reaction_lag
    idx = topo.joint_index
    root = np.random.SeedSequence([cfg.seed, index])
    avatar_ss, human_ss, event_ss = root.spawn(3)
    if cfg.human_seed is not None:
        human_ss = np.random.SeedSequence([cfg.human_seed, index, 1])

    avatar = _persona(np.random.default_rng(avatar_ss), cfg, topo)
    human = _persona(np.random.default_rng(human_ss), cfg, topo)
    ev_rng = np.random.default_rng(event_ss)
    events = _sample_events(ev_rng, cfg)

    t_sec = np.arange(T) / FRAME_RATE
    head, hips = idx("Head"), idx("Hips")
    labels = []
    for kind, start, end in events:
        env = _envelope(T, start, end)
        if kind == "head_nod_mirror":
            phase = ev_rng.uniform(0, 2 * np.pi)
            human.rotvec[:, head, 0] += env * cfg.nod_amplitude * np.sin(2 * np.pi * cfg.nod_frequency * t_sec + phase)
            joints = [head]
        elif kind == "pose_switch":
            yaw = ev_rng.choice([-1.0, 1.0]) * cfg.switch_amplitude
            lean = ev_rng.uniform(-0.5, 0.5) * cfg.switch_amplitude
            human.rotvec[:, hips, 1] += env * yaw
            human.rotvec[:, hips, 0] += env * lean
            joints = [hips]
        else:
            human.audio[:, :4] += np.outer(env, [2.5, 2.0, 1.5, 1.0])
            joints = []
        w = cfg.g_inter * _lagged(env, lag)
        if joints:
            # blend toward the human's lagged rotation of the same joints
            target = _lagged(human.rotvec[:, joints, :], lag)
            own = avatar.rotvec[:, joints, :]
            avatar.rotvec[:, joints, :] = own + w[:, None, None] * (target - own)
        else:
            avatar.rotvec[:, head, 0] += w * cfg.interruption_amplitude
        onset = min(start + lag, T - 1)
        labels.append(EventLabel(kind, start, min(T, end + lag), onset, _EVENT_GROUP[kind]))

    def to_pose(rv: np.ndarray) -> np.ndarray:
        return hemisphere_fix(quat_from_rotvec(rv)).reshape(T, -1)

    return DyadicSequence(avatar.audio, to_pose(avatar.rotvec), human.audio, to_pose(human.rotvec), labels)


def generate_corpus(cfg: SynthConfig, n_sequences: int) -> list[DyadicSequence]:
    return [generate_sequence(cfg, i) for i in range(n_sequences)]


def make_split(sequences, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> DatasetSplit:
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) <= 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios must be three positive numbers summing to 1, got {ratios}")
    seqs = list(sequences)
    n = len(seqs)
    if n < 3:
        raise ValueError(f"need at least 3 sequences for a 3-way split, got {n}")
    raw = np.array(ratios) * n
    sizes = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - sizes), kind="stable")[: n - sizes.sum()]:
        sizes[i] += 1
    # every part gets at least one sequence
    for i in range(3):
        while sizes[i] == 0:
            j = int(np.argmax(sizes))
            sizes[j] -= 1
            sizes[i] += 1
    order = np.random.default_rng(seed).permutation(n)
    parts, lo = [], 0
    for s in sizes:
        parts.append([seqs[i] for i in order[lo: lo + s]])
        lo += s
    return DatasetSplit(parts[0], parts[1], parts[2], ratios)


# container file ---------------------------------------------------------------------

DATASET_MAGIC = b"DYADSET1"
_KIND_CODE = {k: i for i, k in enumerate(EVENT_KINDS)}
_GROUP_CODE = {g: i for i, g in enumerate(GROUPS)}
_HEADER = struct.Struct("<IIdI")
_LABEL = struct.Struct("<BIIIB")


class DatasetFormatError(ValueError):
    pass


def dataset_nbytes(sequences) -> int:
    total = len(DATASET_MAGIC) + _HEADER.size
    for s in sequences:
        total += 4 + 8 * s.T * (2 * s.X.shape[1] + 2 * s.Y.shape[1]) + 4 + _LABEL.size * len(s.labels)
    return total


def write_dataset(path: str | Path, sequences, frame_rate: float = FRAME_RATE) -> None:
    """Layout (little-endian)::

        8s  magic "DYADSET1"
        u32 a, u32 p, f64 frame rate, u32 sequence count
        per sequence:
            u32 T
            f64[T*a] X, f64[T*p] Y, f64[T*a] XH, f64[T*p] YH   (row-major, time first)
            u32 label count
            per label: u8 kind, u32 start, u32 end, u32 onset, u8 group
    """
    sequences = list(sequences)
    if not sequences:
        a = p = 0
    else:
        a, p = sequences[0].X.shape[1], sequences[0].Y.shape[1]
    out = [DATASET_MAGIC, _HEADER.pack(a, p, frame_rate, len(sequences))]
    for s in sequences:
        if s.X.shape[1] != a or s.Y.shape[1] != p:
            raise DatasetFormatError("all sequences in a container must share a and p")
        out.append(struct.pack("<I", s.T))
        for arr in (s.X, s.Y, s.XH, s.YH):
            out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        out.append(struct.pack("<I", len(s.labels)))
        for lab in s.labels:
            out.append(_LABEL.pack(_KIND_CODE[lab.kind], lab.start, lab.end, lab.onset, _GROUP_CODE[lab.group]))
    Path(path).write_bytes(b"".join(out))


def read_dataset(path: str | Path) -> tuple[list[DyadicSequence], dict]:
    buf = Path(path).read_bytes()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise DatasetFormatError(f"{path}: truncated at byte offset {pos} (need {n} more bytes)")
        chunk = buf[pos: pos + n]
        pos += n
        return chunk

    magic = take(8)
    if magic != DATASET_MAGIC:
        if magic[:7] == DATASET_MAGIC[:7]:
            raise DatasetFormatError(f"{path}: unsupported container version {magic[7:]!r} at byte offset 7")
        raise DatasetFormatError(f"{path}: bad magic {magic!r} at byte offset 0")
    a, p, rate, count = _HEADER.unpack(take(_HEADER.size))
    kinds = {v: k for k, v in _KIND_CODE.items()}
    groups = {v: g for g, v in _GROUP_CODE.items()}
    seqs = []
    for _ in range(count):
        (T,) = struct.unpack("<I", take(4))
        arrays = []
        for dim in (a, p, a, p):
            arrays.append(np.frombuffer(take(8 * T * dim), dtype="<f8").reshape(T, dim).astype(np.float64))
        (n_labels,) = struct.unpack("<I", take(4))
        labels = []
        for _ in range(n_labels):
            at = pos
            kc, start, end, onset, gc = _LABEL.unpack(take(_LABEL.size))
            if kc not in kinds or gc not in groups:
                raise DatasetFormatError(f"{path}: bad label codes ({kc}, {gc}) at byte offset {at}")
            labels.append(EventLabel(kinds[kc], start, end, onset, groups[gc]))
        seqs.append(DyadicSequence(*arrays, labels=labels))
    if pos != len(buf):
        raise DatasetFormatError(f"{path}: {len(buf) - pos} trailing bytes at byte offset {pos}")
    return seqs, {"a": a, "p": p, "frame_rate": rate, "count": count}


def with_seed(cfg: SynthConfig, seed: int) -> SynthConfig:
    return replace(cfg, seed=seed)


def read_dataset_header(path: str | Path) -> dict:
    """Container header fields without loading the payload."""
    with open(path, "rb") as fh:
        head = fh.read(len(DATASET_MAGIC) + _HEADER.size)
    if len(head) < len(DATASET_MAGIC) + _HEADER.size:
        raise DatasetFormatError(f"{path}: truncated at byte offset {len(head)} (header incomplete)")
    if head[:8] != DATASET_MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {head[:8]!r} at byte offset 0")
    a, p, rate, count = _HEADER.unpack(head[8:])
    return {"a": a, "p": p, "frame_rate": rate, "count": count}
