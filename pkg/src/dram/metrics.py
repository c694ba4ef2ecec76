"""Position-space error metrics and report/trace files."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pose import GROUPS, SkeletonTopology

SIGMA_GRID = (1.0, 2.0, 3.0, 5.0, 8.0, 13.0, 21.0)
REPORT_COLUMNS = ("Avg.",) + GROUPS


def _errors(pred: np.ndarray, true: np.ndarray, keypoints) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    true = np.asarray(true, dtype=np.float64)
    if pred.shape != true.shape:
        raise ValueError(f"predicted positions {pred.shape} and true positions {true.shape} differ")
    keypoints = list(keypoints)
    if not keypoints:
        raise ValueError("empty keypoint selection")
    return np.linalg.norm(pred[..., keypoints, :] - true[..., keypoints, :], axis=-1)


def ape(pred: np.ndarray, true: np.ndarray, keypoints) -> float:
    """Mean Euclidean error over frames and the selected keypoints (cm)."""
    return float(_errors(pred, true, keypoints).mean())


def pck(pred: np.ndarray, true: np.ndarray, sigma: float, keypoints) -> float:
    """Fraction of (frame, keypoint) pairs whose error is at most ``sigma``."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return float(np.mean(_errors(pred, true, keypoints) <= sigma))


@dataclass
class MetricsReport:
    ape_avg: float
    ape_groups: dict[str, float]
    pck: dict[float, float]
    n_frames: int
    variant: str = ""
    extra: dict[str, float] = field(default_factory=dict)

    def row(self) -> list[float]:
        return [self.ape_avg] + [self.ape_groups[g] for g in GROUPS]

    def write(self, path: str | Path) -> None:
        """Plain ``key = value`` lines; floats use ``repr`` so they round-trip exactly."""
        lines = ["# dram metrics report v1", f"variant = {self.variant}", f"frames = {self.n_frames}",
                 f"ape.avg = {self.ape_avg!r}"]
        lines += [f"ape.{g} = {self.ape_groups[g]!r}" for g in GROUPS]
        lines += [f"pck.{s:g} = {v!r}" for s, v in self.pck.items()]
        lines += [f"extra.{k} = {v!r}" for k, v in self.extra.items()]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path: str | Path) -> MetricsReport:
        kv = {}
        for line in Path(path).read_text().splitlines():
            if line.startswith("#") or "=" not in line:
                continue
            key, val = (s.strip() for s in line.split("=", 1))
            kv[key] = val
        return cls(
            ape_avg=float(kv["ape.avg"]),
            ape_groups={g: float(kv[f"ape.{g}"]) for g in GROUPS},
            pck={float(k[4:]): float(v) for k, v in kv.items() if k.startswith("pck.")},
            n_frames=int(kv["frames"]),
            variant=kv.get("variant", ""),
            extra={k[6:]: float(v) for k, v in kv.items() if k.startswith("extra.")},
        )


def metrics_report(pred_pos: np.ndarray, true_pos: np.ndarray, topology: SkeletonTopology,
                   sigmas=SIGMA_GRID, variant: str = "") -> MetricsReport:
    """``pred_pos``/``true_pos`` are ``(frames, J, 3)`` pooled over sequences."""
    all_joints = range(topology.n_joints)
    groups = {g: ape(pred_pos, true_pos, topology.group_joints(g)) for g in GROUPS}
    return MetricsReport(
        ape_avg=ape(pred_pos, true_pos, all_joints),
        ape_groups=groups,
        pck={float(s): pck(pred_pos, true_pos, s, all_joints) for s in sigmas},
        n_frames=int(pred_pos.shape[0]),
        variant=variant,
    )


def write_attention_trace(path: str | Path, delta: np.ndarray) -> None:
    """Comma-separated table: ``frame, d0 .. d{p-1}, mean``."""
    delta = np.asarray(delta, dtype=np.float64)
    header = ",".join(["frame"] + [f"d{i}" for i in range(delta.shape[1])] + ["mean"])
    table = np.column_stack([np.arange(len(delta)), delta, delta.mean(axis=1)])
    fmt = ["%d"] + ["%.17g"] * (table.shape[1] - 1)
    np.savetxt(path, table, fmt=fmt, delimiter=",", header=header, comments="")


def read_attention_trace(path: str | Path) -> np.ndarray:
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return table[:, 1:-1]
