"""Monadic/dyadic pose forecasters, the residual-attention combiner and baselines.

Time conventions. Streams are time-major ``(T, dims)``. The prediction for
frame ``t`` reads the history window of frames ``t-k .. t-1``. For the
dyadic network the monadic buffer holds ``zm_{t-k+1} .. zm_t`` by default
(``monadic_buffer="current"``) or ``zm_{t-k} .. zm_{t-1}`` when set to
``"previous"``. Frames before ``t = 0`` are warm-up frames: zero audio,
identity-quaternion poses and identity monadic predictions.
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor
from .backbones import Backbone, ConfigError, build_backbone
from .pose import identity_pose


class Variant(str, enum.Enum):
    AVATAR_AUDIO_ONLY = "avatar_audio_only"
    AVATAR_MONADIC_ONLY = "avatar_monadic_only"
    HUMAN_AUDIO_ONLY = "human_audio_only"
    HUMAN_MONADIC_ONLY = "human_monadic_only"
    EARLY_FUSION = "early_fusion"
    DRAM_NO_ATTENTION = "dram_no_attention"
    DRAM = "dram"

    @property
    def label(self) -> str:
        return _LABELS[self]

    @property
    def is_dyadic(self) -> bool:
        return self in (Variant.DRAM, Variant.DRAM_NO_ATTENTION)

    @property
    def uses_pose_history(self) -> bool:
        return self in (Variant.AVATAR_MONADIC_ONLY, Variant.EARLY_FUSION,
                        Variant.DRAM_NO_ATTENTION, Variant.DRAM)

    @classmethod
    def parse(cls, name: str) -> Variant:
        key = str(name).strip().lower().replace("-", "_").replace(" ", "_")
        for v in cls:
            if key in (v.value, v.name.lower()):
                return v
        raise ConfigError(f"unknown variant {name!r}; expected one of {[v.value for v in cls]}")


_LABELS = {
    Variant.HUMAN_AUDIO_ONLY: "Human Audio Only",
    Variant.HUMAN_MONADIC_ONLY: "Human Monadic Only",
    Variant.AVATAR_AUDIO_ONLY: "Avatar Audio Only",
    Variant.AVATAR_MONADIC_ONLY: "Avatar Monadic Only",
    Variant.EARLY_FUSION: "Early Fusion",
    Variant.DRAM_NO_ATTENTION: "DRAM w/o Attention",
    Variant.DRAM: "DRAM",
}


# tanh saturates to exactly 1.0 in float64 for |r| > ~19; keep the attention strictly below 1
DELTA_MAX = float(np.nextafter(1.0, 0.0))


class WarmupError(ValueError):
    """The monadic prediction buffer is shorter than the history length."""


# attention algebra ------------------------------------------------------------------

def residual_attention(zm, zd) -> Tensor:
    """``tanh(|zd - zm|)`` component-wise; values lie in ``[0, 1)``."""
    zm, zd = ad.as_tensor(zm), ad.as_tensor(zd)
    if zm.shape != zd.shape:
        raise DimensionError(f"monadic shape {zm.shape} != dyadic shape {zd.shape}")
    delta = ad.tanh(ad.absolute(zd - zm))
    # the backward pass keeps tanh's own derivative, which is 0 where the clamp bites
    delta.data = np.minimum(delta.data, DELTA_MAX)
    return delta


def dram_combine(zm, zd, delta) -> Tensor:
    zm, zd, delta = ad.as_tensor(zm), ad.as_tensor(zd), ad.as_tensor(delta)
    if not zm.shape == zd.shape == delta.shape:
        raise DimensionError(f"combine shapes differ: zm {zm.shape}, zd {zd.shape}, delta {delta.shape}")
    return (1.0 - delta) * zm + delta * zd


def dram_loss(predictions, targets) -> Tensor:
    """Squared L2 error summed per frame and averaged over frames."""
    predictions, targets = ad.as_tensor(predictions), ad.as_tensor(targets)
    if predictions.shape != targets.shape:
        raise DimensionError(f"prediction shape {predictions.shape} != target shape {targets.shape}")
    return ad.mse_loss(predictions, targets)


# model -------------------------------------------------------------------------------

def input_channels(variant: Variant, a: int, p: int) -> dict[str, int]:
    return {
        Variant.AVATAR_AUDIO_ONLY: {"f": a},
        Variant.HUMAN_AUDIO_ONLY: {"f": a},
        Variant.AVATAR_MONADIC_ONLY: {"f": a + p},
        Variant.HUMAN_MONADIC_ONLY: {"f": a + p},
        Variant.EARLY_FUSION: {"f": 2 * (a + p)},
        Variant.DRAM_NO_ATTENTION: {"monadic": a + p, "dyadic": a + 2 * p},
        Variant.DRAM: {"monadic": a + p, "dyadic": a + 2 * p},
    }[variant]


def _cols(arr) -> Tensor:
    """``(B, N, C)`` time-major batch -> ``(B, C, N)`` column tensor."""
    if isinstance(arr, Tensor):
        return ad.swapaxes(arr, 1, 2)
    return Tensor(np.swapaxes(np.asarray(arr, dtype=np.float64), 1, 2))


@dataclass
class StepOutput:
    y: np.ndarray | Tensor
    zm: np.ndarray | Tensor | None = None
    zd: np.ndarray | Tensor | None = None
    delta: np.ndarray | Tensor | None = None


@dataclass
class ForecastModel:
    """One Table-1 style forecaster: a variant plus its backbone(s)."""

    variant: Variant
    a: int
    p: int
    k: int
    backbone_kind: str = "tcn"
    backbone_hyper: dict = field(default_factory=dict)
    seed: int = 0
    detach_delta: bool = False
    monadic_buffer: str = "current"
    nets: dict[str, Backbone] = field(init=False)

    def __post_init__(self):
        self.variant = Variant.parse(self.variant) if not isinstance(self.variant, Variant) else self.variant
        if self.monadic_buffer not in ("current", "previous"):
            raise ConfigError(f"monadic_buffer must be 'current' or 'previous', got {self.monadic_buffer!r}")
        self.nets = {}
        for i, (name, d_in) in enumerate(input_channels(self.variant, self.a, self.p).items()):
            self.nets[name] = build_backbone(self.backbone_kind, d_in, self.p, self.k,
                                             seed=self.seed * 1000 + i, **self.backbone_hyper)

    # bookkeeping ---------------------------------------------------------------
    def named_parameters(self) -> dict[str, ad.Parameter]:
        return {f"{net}.{name}": prm for net, bb in self.nets.items() for name, prm in bb.params.items()}

    def parameters(self) -> list[ad.Parameter]:
        return list(self.named_parameters().values())

    def n_parameters(self) -> int:
        return sum(bb.n_parameters() for bb in self.nets.values())

    def zero_grad(self) -> None:
        for prm in self.parameters():
            prm.zero_grad()

    def header(self) -> dict:
        return {
            "variant": self.variant.value,
            "a": self.a,
            "p": self.p,
            "k": self.k,
            "backbone_kind": self.backbone_kind,
            "backbone_hyper": {k: list(v) if isinstance(v, tuple) else v for k, v in self.backbone_hyper.items()},
            "backbone_configs": {name: bb.config_dict() for name, bb in self.nets.items()},
            "seed": self.seed,
            "detach_delta": self.detach_delta,
            "monadic_buffer": self.monadic_buffer,
        }

    # single-step API (history matrices are (dims, k), most recent column last) ---
    def monadic_step(self, X, Y) -> Tensor:
        net = self.nets.get("monadic") or self.nets["f"]
        return net(ad.concat([_check(X, self.a, self.k, "X"), _check(Y, self.p, self.k, "Y")], axis=0))

    def dyadic_step(self, XH, YH, Zm) -> Tensor:
        Zm = ad.as_tensor(Zm)
        if Zm.ndim != 2 or Zm.shape[1] < self.k:
            raise WarmupError(f"monadic buffer has {Zm.shape[-1] if Zm.ndim else 0} columns, need k={self.k}; "
                              "pad with identity poses before t=0")
        Zm = Zm[:, -self.k:]
        inp = ad.concat([_check(XH, self.a, self.k, "XH"), _check(YH, self.p, self.k, "YH"),
                         _check(Zm, self.p, self.k, "Zm")], axis=0)
        return self.nets["dyadic"](inp)

    def variant_step(self, X, Y, XH, YH, zm_prev=None) -> StepOutput:
        """One forecast from ``(dims, k)`` histories.

        ``zm_prev`` holds the ``k`` most recent earlier monadic predictions
        ``(p, k)``; it is only used by the two DRAM variants.
        """
        out = self.step_batch(*(None if m is None else ad.as_tensor(m)[None]
                                for m in (X, Y, XH, YH, zm_prev)))
        return StepOutput(*(None if v is None else v[0] for v in (out.y, out.zm, out.zd, out.delta)))

    # batched step ----------------------------------------------------------------
    def step_batch(self, X, Y, XH, YH, zm_prev=None) -> StepOutput:
        """Batched windows ``(B, dims, k)`` -> predictions ``(B, p)``."""
        v = self.variant
        if v is Variant.AVATAR_AUDIO_ONLY:
            return StepOutput(self._net1(X))
        if v is Variant.HUMAN_AUDIO_ONLY:
            return StepOutput(self._net1(XH))
        if v is Variant.AVATAR_MONADIC_ONLY:
            return StepOutput(self._net1(ad.concat([X, Y], axis=1)))
        if v is Variant.HUMAN_MONADIC_ONLY:
            return StepOutput(self._net1(ad.concat([XH, YH], axis=1)))
        if v is Variant.EARLY_FUSION:
            return StepOutput(self._net1(ad.concat([XH, YH, X, Y], axis=1)))
        if zm_prev is None:
            raise ConfigError(f"variant {v.value} needs the monadic prediction buffer")
        zm_prev = ad.as_tensor(zm_prev)
        if zm_prev.shape[-1] < self.k:
            raise WarmupError(f"monadic buffer has {zm_prev.shape[-1]} columns, need k={self.k}")
        zm = self.nets["monadic"].forward_windows(ad.concat([X, Y], axis=1))[:, :, 0]
        if self.monadic_buffer == "current":
            buf = ad.concat([zm_prev[:, :, zm_prev.shape[-1] - self.k + 1:], zm[:, :, None]], axis=2)
        else:
            buf = zm_prev[:, :, zm_prev.shape[-1] - self.k:]
        zd = self.nets["dyadic"].forward_windows(ad.concat([XH, YH, buf], axis=1))[:, :, 0]
        return self._blend(zm, zd)

    def _net1(self, inp) -> Tensor:
        return self.nets["f"].forward_windows(inp)[:, :, 0]

    def _blend(self, zm: Tensor, zd: Tensor) -> StepOutput:
        if self.variant is Variant.DRAM_NO_ATTENTION:
            return StepOutput(zd, zm, zd)
        delta = residual_attention(zm, zd)
        if self.detach_delta:
            delta = delta.detach()
        return StepOutput(dram_combine(zm, zd, delta), zm, zd, delta)

    # whole-chunk forward -------------------------------------------------------------
    def forward_chunk(self, X, Y, XH, YH, first_frame=0) -> StepOutput:
        """Predict ``L`` consecutive frames in one pass.

        Inputs are ``(B, L + 2k, dims)`` arrays for frames
        ``first_frame - 2k .. first_frame + L - 1``; ``Y`` is the pose history
        the model conditions on. ``first_frame`` is an int or one start per
        batch row. Returns ``(B, L, p)`` outputs for frames
        ``first_frame .. first_frame + L - 1``.
        """
        k = self.k
        n = np.shape(X)[1]
        L = n - 2 * k
        if L < 1:
            raise DimensionError(f"chunk of {n} frames leaves no targets after 2k={2 * k} context frames")
        v = self.variant
        # columns for frames s-k .. s+L-2 predict frames s .. s+L-1
        lo, hi = k, n - 1
        sl = (slice(None), slice(lo, hi))
        if v is Variant.AVATAR_AUDIO_ONLY:
            inp = _cols(X[sl])
        elif v is Variant.HUMAN_AUDIO_ONLY:
            inp = _cols(XH[sl])
        elif v is Variant.AVATAR_MONADIC_ONLY:
            inp = _cols(np.concatenate([X[sl], Y[sl]], axis=2))
        elif v is Variant.HUMAN_MONADIC_ONLY:
            inp = _cols(np.concatenate([XH[sl], YH[sl]], axis=2))
        elif v is Variant.EARLY_FUSION:
            inp = _cols(np.concatenate([XH[sl], YH[sl], X[sl], Y[sl]], axis=2))
        else:
            return self._forward_chunk_dyadic(X, Y, XH, YH, first_frame)
        out = self.nets["f"].forward_windows(inp)
        return StepOutput(ad.swapaxes(out, 1, 2))

    def _forward_chunk_dyadic(self, X, Y, XH, YH, first_frame: int) -> StepOutput:
        k = self.k
        n = np.shape(X)[1]
        B = np.shape(X)[0]
        # monadic outputs for frames s-k .. s+L-1 from columns s-2k .. s+L-2
        m_inp = _cols(np.concatenate([X[:, : n - 1], Y[:, : n - 1]], axis=2))
        zm_all = self.nets["monadic"].forward_windows(m_inp)  # (B, p, L + k)
        # frames before t=0 carry identity monadic predictions
        frames = np.asarray(first_frame).reshape(-1, 1) - k + np.arange(zm_all.shape[2])
        warm = np.broadcast_to(frames < 0, (B, zm_all.shape[2]))[:, None, :]
        if warm.any():
            ident = identity_pose(self.p // 4)[None, :, None]
            zm_all = zm_all * (1.0 - warm) + ident * warm
        buf = zm_all[:, :, 1:] if self.monadic_buffer == "current" else zm_all[:, :, :-1]
        d_inp = ad.concat([_cols(np.concatenate([XH[:, k: n - 1], YH[:, k: n - 1]], axis=2)), buf], axis=1)
        zd = self.nets["dyadic"].forward_windows(d_inp)
        zm = zm_all[:, :, k:]
        out = self._blend(zm, zd)
        return StepOutput(*(None if t is None else ad.swapaxes(t, 1, 2) for t in (out.y, out.zm, out.zd, out.delta)))


class ModelStream:
    """Step-by-step inference over time-major buffers ``(B, N, dims)``.

    Opened at buffer index ``i0``; ``step(i)`` forecasts index ``i`` from
    history indices ``i-k .. i-1`` and must be called for ``i0, i0+1, ...``
    in order. Buffers may be written between steps (fed-back predictions,
    monadic outputs in ``Z``), but never at indices already consumed.
    Matches ``step_batch`` on the same windows.
    """

    def __init__(self, model: ForecastModel, X, Y, XH, YH, Z, i0: int, capacity: int):
        self.model = model
        self.bufs = (X, Y, XH, YH, Z)
        self.next = i0
        k = model.k
        js = range(i0 - k, i0 - 1)
        if model.variant.is_dyadic:
            self.mono = model.nets["monadic"].stream(self._stack(self._mono_col, js), capacity)
            zcols = [self._dy_col(j, Z[:, j + 1] if model.monadic_buffer == "current" else Z[:, j]) for j in js]
            self.dy = model.nets["dyadic"].stream(_stack_cols(zcols, Z.shape[0]), capacity)
        else:
            self.net = model.nets["f"].stream(self._stack(self._single_col, js), capacity)

    def _stack(self, fn, js) -> np.ndarray:
        return _stack_cols([fn(j) for j in js], self.bufs[0].shape[0])

    def _single_col(self, j: int) -> np.ndarray:
        X, Y, XH, YH, _ = self.bufs
        v = self.model.variant
        parts = {Variant.AVATAR_AUDIO_ONLY: (X,), Variant.HUMAN_AUDIO_ONLY: (XH,),
                 Variant.AVATAR_MONADIC_ONLY: (X, Y), Variant.HUMAN_MONADIC_ONLY: (XH, YH),
                 Variant.EARLY_FUSION: (XH, YH, X, Y)}[v]
        return np.concatenate([a[:, j] for a in parts], axis=1)

    def _mono_col(self, j: int) -> np.ndarray:
        X, Y = self.bufs[:2]
        return np.concatenate([X[:, j], Y[:, j]], axis=1)

    def _dy_col(self, j: int, zcol: np.ndarray) -> np.ndarray:
        XH, YH = self.bufs[2:4]
        return np.concatenate([XH[:, j], YH[:, j], zcol], axis=1)

    def step(self, i: int) -> StepOutput:
        if i != self.next:
            raise ValueError(f"stream expects index {self.next}, got {i}")
        self.next += 1
        j = i - 1
        if not self.model.variant.is_dyadic:
            return StepOutput(self.net.push(self._single_col(j)))
        zm = self.mono.push(self._mono_col(j))
        zcol = zm if self.model.monadic_buffer == "current" else self.bufs[4][:, j]
        zd = self.dy.push(self._dy_col(j, zcol))
        if self.model.variant is Variant.DRAM_NO_ATTENTION:
            return StepOutput(zd, zm, zd)
        delta = np.minimum(np.tanh(np.abs(zd - zm)), DELTA_MAX)
        return StepOutput((1.0 - delta) * zm + delta * zd, zm, zd, delta)


def _stack_cols(cols: list[np.ndarray], B: int) -> np.ndarray:
    if not cols:
        return np.zeros((B, 0, 0))
    return np.stack(cols, axis=2)


def _check(m, rows: int, k: int, name: str) -> Tensor:
    m = ad.as_tensor(m)
    if m.shape != (rows, k):
        raise DimensionError(f"{name} history has shape {m.shape}, expected {(rows, k)}")
    return m


# checkpoints ----------------------------------------------------------------------------

CKPT_MAGIC = b"DRAMCKPT"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: ForecastModel, path: str | Path, extra: dict | None = None) -> None:
    """Layout (little-endian)::

        8s   magic "DRAMCKPT"
        u32  format version
        u32  header length H
        H    UTF-8 JSON header (variant, a, p, k, backbone configs, ...)
        u32  number of tensors
        per tensor: u16 name length, name, u8 ndim, ndim x u32 dims, float64 values
    """
    header = model.header()
    if extra:
        header["extra"] = extra
    hbytes = json.dumps(header, sort_keys=True).encode()
    params = model.named_parameters()
    chunks = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(hbytes)), hbytes, struct.pack("<I", len(params))]
    for name, prm in params.items():
        nb = name.encode()
        chunks.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", prm.data.ndim))
        chunks.append(struct.pack(f"<{prm.data.ndim}I", *prm.data.shape))
        chunks.append(prm.data.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> tuple[ForecastModel, dict]:
    buf = Path(path).read_bytes()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated at byte offset {pos} (need {n} more bytes)")
        out = buf[pos: pos + n]
        pos += n
        return out

    if take(8) != CKPT_MAGIC:
        raise CheckpointError(f"{path}: bad magic at byte offset 0")
    version, hlen = struct.unpack("<II", take(8))
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version} at byte offset 8")
    header = json.loads(take(hlen))
    model = ForecastModel(
        Variant.parse(header["variant"]), header["a"], header["p"], header["k"],
        backbone_kind=header["backbone_kind"],
        backbone_hyper={k: tuple(v) if isinstance(v, list) else v for k, v in header["backbone_hyper"].items()},
        seed=header["seed"], detach_delta=header["detach_delta"], monadic_buffer=header["monadic_buffer"])
    params = model.named_parameters()
    (count,) = struct.unpack("<I", take(4))
    if count != len(params):
        raise CheckpointError(f"{path}: checkpoint holds {count} tensors, model expects {len(params)}")
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode()
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        if name not in params or params[name].shape != shape:
            raise CheckpointError(f"{path}: unexpected tensor {name!r} with shape {shape} at byte offset {pos}")
        size = int(np.prod(shape)) if ndim else 1
        params[name].data[...] = np.frombuffer(take(8 * size), dtype="<f8").reshape(shape)
    if pos != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - pos} trailing bytes at byte offset {pos}")
    return model, header.get("extra", {})
