"""Scheduled-sampling training, autoregressive rollout and evaluation."""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .metrics import SIGMA_GRID, MetricsReport, metrics_report
from .model import ForecastModel, ModelStream, Variant, dram_loss
from .pose import SkeletonTopology, identity_pose, normalize_pose, rotations_to_positions

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainerConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    batch_size: int = 16
    chunk_length: int = 128
    epochs: int = 20
    steps_per_epoch: int | None = None
    tf_start: float = 1.0
    tf_end: float = 0.0
    tf_decay_epochs: float | None = None
    clip_norm: float = 5.0
    seed: int = 0
    val_frames: int | None = None
    monadic_warmup_epochs: int = 0

    def __post_init__(self):
        bad = []
        if self.optimizer not in ("adam", "sgd"):
            bad.append("optimizer")
        if not self.learning_rate > 0:
            bad.append("learning_rate")
        if self.clip_norm <= 0:
            bad.append("clip_norm")
        if not (0 <= self.tf_start <= 1 and 0 <= self.tf_end <= 1):
            bad.append("tf_start/tf_end")
        if self.batch_size < 1 or self.chunk_length < 1 or self.epochs < 0:
            bad.append("batch_size/chunk_length/epochs")
        if self.monadic_warmup_epochs < 0:
            bad.append("monadic_warmup_epochs")
        if bad:
            raise ValueError(f"invalid trainer config fields: {', '.join(bad)}")

    def teacher_ratio(self, epoch: int) -> float:
        decay = self.tf_decay_epochs if self.tf_decay_epochs is not None else self.epochs / 2
        if decay <= 0:
            return self.tf_end
        frac = min(1.0, epoch / decay)
        return self.tf_start + (self.tf_end - self.tf_start) * frac


# padded stream buffers ----------------------------------------------------------------
# Index 2k of every buffer is frame 0; the 2k leading entries are warm-up frames.

def _pad(seq_arrays, k: int, n_joints: int):
    X, Y, XH, YH = (np.asarray(s, dtype=np.float64) for s in seq_arrays)
    ident = identity_pose(n_joints)
    pad_a = np.zeros((2 * k, X.shape[1]))
    pad_p = np.broadcast_to(ident, (2 * k, ident.size))
    return (np.concatenate([pad_a, X]), np.concatenate([pad_p, Y]),
            np.concatenate([pad_a, XH]), np.concatenate([pad_p, YH]))


def _win(arr: np.ndarray, i: int, k: int) -> np.ndarray:
    """Window of indices ``i-k .. i-1`` as ``(B, dims, k)``."""
    return np.swapaxes(arr[:, i - k: i], 1, 2)


def _free_run(model: ForecastModel, X, Y, XH, YH, Z, first: int, last: int,
              keep_truth: np.ndarray | None = None) -> np.ndarray | None:
    """Step the model over buffer indices ``first .. last-1`` in place.

    Each prediction is unit-normalized and written into ``Y`` (the pose
    history) unless ``keep_truth[:, i - first]`` is set. Raw monadic outputs
    go to ``Z``. Returns the per-step attention vectors for DRAM.
    """
    deltas = np.empty((X.shape[0], last - first, model.p)) if model.variant is Variant.DRAM else None
    stream = ModelStream(model, X, Y, XH, YH, Z, first, last - first)
    for n, i in enumerate(range(first, last)):
        out = stream.step(i)
        if out.zm is not None:
            Z[:, i] = out.zm
        if deltas is not None:
            deltas[:, n] = out.delta
        pred = normalize_pose(out.y)
        if keep_truth is None:
            Y[:, i] = pred
        else:
            Y[:, i] = np.where(keep_truth[:, n, None], Y[:, i], pred)
    return deltas


@dataclass
class RolloutResult:
    poses: np.ndarray                 # (T, p) unit quaternions
    delta: np.ndarray | None = None   # (T, p) for DRAM

    @property
    def mean_delta(self) -> np.ndarray | None:
        return None if self.delta is None else self.delta.mean(axis=1)


def rollout(model: ForecastModel, X, XH, YH, T: int | None = None, seed_history=None) -> RolloutResult:
    """Fully autoregressive generation of ``T`` avatar frames.

    ``X``, ``XH``, ``YH`` are ``(>= T, dims)``. ``seed_history`` is ``(k, p)``
    for the frames just before frame 0 (identity poses by default). The
    avatar's ground-truth pose is never an input.
    """
    res = rollout_batch(model, [X], [XH], [YH], T, None if seed_history is None else [seed_history])
    return res[0]


def rollout_batch(model: ForecastModel, Xs, XHs, YHs, T: int | None = None, seed_histories=None) -> list[RolloutResult]:
    T = min(len(x) for x in Xs) if T is None else T
    if T == 0:
        empty = np.zeros((0, model.p))
        return [RolloutResult(empty, empty.copy() if model.variant is Variant.DRAM else None) for _ in Xs]
    k, nj = model.k, model.p // 4
    bufs = [_pad((x[:T], np.zeros((T, model.p)), xh[:T], yh[:T]), k, nj) for x, xh, yh in zip(Xs, XHs, YHs)]
    X, Y, XH, YH = (np.stack(parts) for parts in zip(*bufs))
    if seed_histories is not None:
        Y[:, k: 2 * k] = np.stack([np.asarray(s, dtype=np.float64) for s in seed_histories])
    Z = np.broadcast_to(identity_pose(nj), Y.shape).copy()

    if not model.variant.uses_pose_history:
        # no feedback path: one parallel pass gives the same forecasts
        with ad.no_grad():
            y = model.forward_chunk(X, Y, XH, YH, first_frame=0).y.data
        return [RolloutResult(normalize_pose(yi)) for yi in y]

    deltas = _free_run(model, X, Y, XH, YH, Z, 2 * k, 2 * k + T)
    return [RolloutResult(Y[b, 2 * k:].copy(), None if deltas is None else deltas[b]) for b in range(len(Xs))]


# optimizers ----------------------------------------------------------------------------

class _Optimizer:
    def __init__(self, params, cfg: TrainerConfig):
        self.params = params
        self.cfg = cfg
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def step(self) -> float:
        grads = [p.grad for p in self.params]
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
        scale = min(1.0, self.cfg.clip_norm / norm) if norm > 0 else 1.0
        lr = self.cfg.learning_rate
        self.t += 1
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            g = g * scale
            if self.cfg.optimizer == "sgd":
                p.data -= lr * g
                continue
            m *= 0.9
            m += 0.1 * g
            v *= 0.999
            v += 0.001 * g * g
            m_hat = m / (1 - 0.9 ** self.t)
            v_hat = v / (1 - 0.999 ** self.t)
            p.data -= lr * m_hat / (np.sqrt(v_hat) + 1e-8)
        return norm


# training ---------------------------------------------------------------------------------

@dataclass
class TrainResult:
    model: ForecastModel
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_ape: float = math.inf


def _sequence_arrays(seq):
    return seq.X, seq.Y, seq.XH, seq.YH


def _validation_ape(model: ForecastModel, seqs, topology: SkeletonTopology, n_frames: int | None) -> float:
    if not seqs:
        return math.nan
    T = min(s.T for s in seqs) if n_frames is None else min(n_frames, min(s.T for s in seqs))
    results = rollout_batch(model, [s.X for s in seqs], [s.XH for s in seqs], [s.YH for s in seqs], T)
    errs = []
    for s, r in zip(seqs, results):
        pp = rotations_to_positions(r.poses, topology)
        tp = rotations_to_positions(s.Y[:T], topology)
        errs.append(np.linalg.norm(pp - tp, axis=-1).mean())
    return float(np.mean(errs))


def train(model: ForecastModel, train_seqs, val_seqs, cfg: TrainerConfig, topology: SkeletonTopology,
          on_epoch=None) -> TrainResult:
    """Minimize the per-frame squared pose error with scheduled sampling.

    Each step draws ``batch_size`` chunks of ``chunk_length`` frames. With
    teacher-forcing ratio ``r`` every history frame inside a chunk is the
    ground truth with probability ``r`` and otherwise the model's own
    (renormalized) prediction from a no-grad free run; the gradient pass then
    conditions on that same mixed history.

    For models with a monadic branch, the first ``monadic_warmup_epochs``
    epochs fit that branch alone to the targets before the full blend is
    trained.
    """
    rng = np.random.default_rng(cfg.seed)
    k = model.k
    nj = model.p // 4
    padded = [_pad(_sequence_arrays(s), k, nj) for s in train_seqs]
    if not padded:
        raise ValueError("training split is empty")
    L = min(cfg.chunk_length, min(s.T for s in train_seqs))
    total_frames = sum(s.T for s in train_seqs)
    steps = cfg.steps_per_epoch or max(1, math.ceil(total_frames / (cfg.batch_size * L)))
    params = model.parameters()
    opt = _Optimizer(params, cfg)
    result = TrainResult(model)
    best_state = [p.data.copy() for p in params]

    for epoch in range(cfg.epochs):
        ratio = cfg.teacher_ratio(epoch)
        losses = []
        for step in range(steps):
            which = rng.integers(0, len(padded), size=cfg.batch_size)
            starts = [int(rng.integers(0, train_seqs[w].T - L + 1)) for w in which]
            X, Y, XH, YH = (np.stack([padded[w][j][s: s + L + 2 * k] for w, s in zip(which, starts)])
                            for j in range(4))
            target = Y[:, 2 * k:].copy()
            keep = rng.random((cfg.batch_size, L)) < ratio
            if model.variant.uses_pose_history and not keep.all():
                _scheduled_history(model, X, Y, XH, YH, starts, keep)

            model.zero_grad()
            out = model.forward_chunk(X, Y, XH, YH, first_frame=np.array(starts))
            warmup = out.zm is not None and epoch < cfg.monadic_warmup_epochs
            loss = dram_loss(out.zm if warmup else out.y, target)
            if not np.isfinite(loss.data):
                raise TrainingDiverged(f"loss became {float(loss.data)} at epoch {epoch}, step {step}")
            loss.backward()
            opt.step()
            losses.append(float(loss.data))

        val = _validation_ape(model, val_seqs, topology, cfg.val_frames)
        record = {"epoch": epoch, "loss": float(np.mean(losses)) if losses else math.nan,
                  "val_ape": val, "teacher_ratio": ratio}
        result.history.append(record)
        log.info("epoch %d loss %.6f val_ape %.4f tf %.2f", epoch, record["loss"], val, ratio)
        if on_epoch is not None:
            on_epoch(record)
        if not np.isfinite(record["loss"]):
            raise TrainingDiverged(f"non-finite mean loss at epoch {epoch}")
        if result.best_epoch < 0 or (np.isfinite(val) and val < result.best_val_ape):
            result.best_epoch = epoch
            result.best_val_ape = val
            best_state = [p.data.copy() for p in params]

    for p, best in zip(params, best_state):
        p.data[...] = best
    return result


def _scheduled_history(model, X, Y, XH, YH, starts, keep) -> None:
    """Overwrite non-kept history frames of ``Y`` with free-run predictions."""
    k = model.k
    L = keep.shape[1]
    Z = np.broadcast_to(identity_pose(model.p // 4), Y.shape).copy()
    if model.variant.is_dyadic:
        with ad.no_grad():
            net = model.nets["monadic"]
            inp = np.swapaxes(np.concatenate([X[:, : 2 * k - 1], Y[:, : 2 * k - 1]], axis=2), 1, 2)
            ctx = np.swapaxes(net.forward_windows(inp).data, 1, 2)  # frames s-k .. s-1
        for b, s in enumerate(starts):
            n_warm = max(0, k - s)
            ctx[b, :n_warm] = identity_pose(model.p // 4)
        Z[:, k: 2 * k] = ctx
    _free_run(model, X, Y, XH, YH, Z, 2 * k, 2 * k + L, keep_truth=keep)


# evaluation --------------------------------------------------------------------------------

@dataclass
class Evaluation:
    report: MetricsReport
    rollouts: list[RolloutResult]


def evaluate(model: ForecastModel, test_seqs, topology: SkeletonTopology, sigmas=SIGMA_GRID,
             n_frames: int | None = None) -> Evaluation:
    if model.p != topology.pose_dim:
        raise ValueError(f"model pose dim {model.p} does not match topology pose dim {topology.pose_dim}")
    for s in test_seqs:
        if s.X.shape[1] != model.a or s.Y.shape[1] != model.p:
            raise ValueError(f"sequence dims (a={s.X.shape[1]}, p={s.Y.shape[1]}) do not match model "
                             f"(a={model.a}, p={model.p})")
    rollouts = []
    by_len: dict[int, list[int]] = {}
    for i, s in enumerate(test_seqs):
        by_len.setdefault(s.T if n_frames is None else min(s.T, n_frames), []).append(i)
    slot: dict[int, RolloutResult] = {}
    for T, ids in by_len.items():
        res = rollout_batch(model, [test_seqs[i].X for i in ids], [test_seqs[i].XH for i in ids],
                            [test_seqs[i].YH for i in ids], T)
        slot.update(zip(ids, res))
    rollouts = [slot[i] for i in range(len(test_seqs))]
    return Evaluation(score_rollouts(rollouts, test_seqs, topology, sigmas, model.variant.value), rollouts)


def score_rollouts(rollouts, test_seqs, topology, sigmas=SIGMA_GRID, variant: str = "") -> MetricsReport:
    pred = np.concatenate([rotations_to_positions(r.poses, topology) for r in rollouts])
    true = np.concatenate([rotations_to_positions(s.Y[: len(r.poses)], topology)
                           for r, s in zip(rollouts, test_seqs)])
    return metrics_report(pred, true, topology, sigmas, variant)


def delta_event_contrast(rollouts, seqs) -> dict[str, float]:
    """Mean attention inside vs outside labeled event windows, pooled over frames."""
    inside, outside, overall = [], [], []
    for r, s in zip(rollouts, seqs):
        if r.delta is None:
            continue
        md = r.mean_delta
        mask = s.event_mask()[: len(md)]
        inside.append(md[mask])
        outside.append(md[~mask])
        overall.append(md)
    cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0)  # noqa: E731
    i, o, a = cat(inside), cat(outside), cat(overall)
    return {
        "delta_in": float(i.mean()) if i.size else math.nan,
        "delta_out": float(o.mean()) if o.size else math.nan,
        "delta_mean": float(a.mean()) if a.size else math.nan,
    }


def clone_model(model: ForecastModel) -> ForecastModel:
    return copy.deepcopy(model)
