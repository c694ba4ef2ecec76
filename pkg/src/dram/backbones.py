"""Causal temporal backbones mapping a ``d_in x k`` history to ``d_out``.

Both kinds expose ``forward_windows(inp)``: given ``(B, d_in, N)`` columns it
returns ``(B, d_out, N - k + 1)``, one output per complete ``k``-column
window (output ``i`` reads columns ``i .. i + k - 1``). A TCN whose receptive
field equals ``k`` gets this in one causal pass over all columns; a wider
one is evaluated window by window with zero padding before each window. The
LSTM restarts from a zero state for every window.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TcnConfig:
    d_in: int
    d_out: int
    hidden: int = 32
    kernel_size: int = 2
    dilations: tuple[int, ...] = (1, 2, 4, 8, 16)
    residual: bool = True

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        if min(self.d_in, self.d_out, self.hidden, self.kernel_size) < 1 or not self.dilations:
            raise ConfigError(f"invalid TCN config {self}")
        if min(self.dilations) < 1:
            raise ConfigError(f"dilations must be positive, got {self.dilations}")


@dataclass(frozen=True)
class LstmConfig:
    d_in: int
    d_out: int
    hidden: int = 64
    layers: int = 1

    def __post_init__(self):
        if min(self.d_in, self.d_out, self.hidden, self.layers) < 1:
            raise ConfigError(f"invalid LSTM config {self}")


def receptive_field(cfg: TcnConfig) -> int:
    return 1 + (cfg.kernel_size - 1) * sum(cfg.dilations)


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class Backbone:
    kind: str
    config: TcnConfig | LstmConfig
    k: int
    params: dict[str, Parameter] = field(default_factory=dict)

    @property
    def d_in(self) -> int:
        return self.config.d_in

    @property
    def d_out(self) -> int:
        return self.config.d_out

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def config_dict(self) -> dict:
        return {"kind": self.kind, "k": self.k, **asdict(self.config)}

    def forward_windows(self, inp) -> Tensor:
        raise NotImplementedError

    def stream(self, prefix: np.ndarray, capacity: int) -> BackboneStream:
        """Incremental evaluator primed with ``prefix`` ``(B, d_in, n0)``, ``n0 < k``.

        After the prefix, each ``push(column)`` returns the output for the
        window ending at that column, equal to ``forward_windows`` on the
        last ``k`` columns pushed so far (zero columns before the prefix).
        """
        return WindowStream(self, prefix, capacity)

    def __call__(self, H) -> Tensor:
        """Single history matrix ``(d_in, k)`` (most recent column last) -> ``(d_out,)``."""
        H = ad.as_tensor(H)
        if H.shape != (self.d_in, self.k):
            raise ad.DimensionError(f"history shape {H.shape} != expected {(self.d_in, self.k)}")
        out = self.forward_windows(H[None])
        return out[0, :, 0]

    def _check_columns(self, inp: Tensor) -> None:
        if inp.ndim != 3 or inp.shape[1] != self.d_in:
            raise ad.DimensionError(f"input shape {inp.shape} is not (B, {self.d_in}, N)")
        if inp.shape[2] < self.k:
            raise ad.DimensionError(f"need at least k={self.k} columns, got {inp.shape[2]}")


class BackboneStream:
    def push(self, col: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class WindowStream(BackboneStream):
    """Re-evaluates the last ``k`` columns on every push."""

    def __init__(self, model: Backbone, prefix: np.ndarray, capacity: int):
        B, _, n0 = prefix.shape
        self.model = model
        self.window = np.zeros((B, model.d_in, model.k))
        if n0:
            self.window[:, :, -n0:] = prefix[:, :, -model.k:]

    def push(self, col: np.ndarray) -> np.ndarray:
        self.window = np.concatenate([self.window[:, :, 1:], col[:, :, None]], axis=2)
        with ad.no_grad():
            return self.model.forward_windows(self.window).data[:, :, 0]


class TcnStream(BackboneStream):
    """Caches every layer's activations so a push costs one column per layer."""

    def __init__(self, model: Tcn, prefix: np.ndarray, capacity: int):
        B, _, n0 = prefix.shape
        cfg = model.config
        self.model = model
        self.n = 0
        widths = [cfg.d_in] + [cfg.hidden] * len(cfg.dilations)
        self.cols = [np.zeros((n0 + capacity, B, w)) for w in widths]  # time-major
        p = model.params
        self.taps = [np.ascontiguousarray(p[f"block{i}.conv.weight"].data.transpose(2, 1, 0))
                     for i in range(len(cfg.dilations))]  # (K, C_in, C_out)
        self.bias = [p[f"block{i}.conv.bias"].data for i in range(len(cfg.dilations))]
        self.skip = [np.ascontiguousarray(p[f"block{i}.skip.weight"].data[:, :, 0].T) if f"block{i}.skip.weight" in p else None
                     for i in range(len(cfg.dilations))]
        self.head_w = np.ascontiguousarray(p["head.weight"].data.T)
        self.head_b = p["head.bias"].data
        for j in range(n0):
            self._advance(prefix[:, :, j])

    def _advance(self, col: np.ndarray) -> None:
        n = self.n
        cfg = self.model.config
        K = cfg.kernel_size
        self.cols[0][n] = col
        for i, d in enumerate(cfg.dilations):
            src = self.cols[i]
            acc = self.bias[i] + src[n] @ self.taps[i][0]
            for j in range(1, K):
                at = n - j * d
                if at >= 0:
                    acc += src[at] @ self.taps[i][j]
            out = np.maximum(acc, 0.0)
            if cfg.residual:
                out += src[n] @ self.skip[i] if self.skip[i] is not None else src[n]
            self.cols[i + 1][n] = out
        self.n = n + 1

    def push(self, col: np.ndarray) -> np.ndarray:
        self._advance(col)
        return self.cols[-1][self.n - 1] @ self.head_w + self.head_b


class Tcn(Backbone):
    def __init__(self, config: TcnConfig, k: int, seed: int = 0):
        rf = receptive_field(config)
        if k < 1 or rf < k:
            raise ConfigError(f"TCN receptive field {rf} does not cover the history length k={k}")
        super().__init__("tcn", config, k)
        rng = np.random.default_rng(seed)
        c_in = config.d_in
        K = config.kernel_size
        for i, _ in enumerate(config.dilations):
            self.params[f"block{i}.conv.weight"] = Parameter(
                _uniform(rng, (config.hidden, c_in, K), c_in * K), f"block{i}.conv.weight")
            self.params[f"block{i}.conv.bias"] = Parameter(
                _uniform(rng, (config.hidden,), c_in * K), f"block{i}.conv.bias")
            if config.residual and c_in != config.hidden:
                self.params[f"block{i}.skip.weight"] = Parameter(
                    _uniform(rng, (config.hidden, c_in, 1), c_in), f"block{i}.skip.weight")
            c_in = config.hidden
        self.params["head.weight"] = Parameter(_uniform(rng, (config.d_out, c_in), c_in), "head.weight")
        self.params["head.bias"] = Parameter(_uniform(rng, (config.d_out,), c_in), "head.bias")

    @staticmethod
    def analytic_parameter_count(config: TcnConfig) -> int:
        total, c_in = 0, config.d_in
        for _ in config.dilations:
            total += config.hidden * c_in * config.kernel_size + config.hidden
            if config.residual and c_in != config.hidden:
                total += config.hidden * c_in
            c_in = config.hidden
        return total + config.d_out * c_in + config.d_out

    @property
    def receptive_field(self) -> int:
        return receptive_field(self.config)

    def stream(self, prefix: np.ndarray, capacity: int) -> BackboneStream:
        if self.receptive_field == self.k:
            return TcnStream(self, prefix, capacity)
        return WindowStream(self, prefix, capacity)

    def hidden_columns(self, inp) -> Tensor:
        """Last block activations at every column, ``(B, hidden, N)``."""
        h = ad.as_tensor(inp)
        p = self.params
        for i, d in enumerate(self.config.dilations):
            a = ad.relu(ad.causal_dilated_conv1d(h, p[f"block{i}.conv.weight"], d, p[f"block{i}.conv.bias"]))
            if self.config.residual:
                skip = p.get(f"block{i}.skip.weight")
                h = a + (ad.causal_dilated_conv1d(h, skip) if skip is not None else h)
            else:
                h = a
        return h

    def forward_windows(self, inp) -> Tensor:
        inp = ad.as_tensor(inp)
        self._check_columns(inp)
        k = self.k
        if self.receptive_field == k:
            # the last column of every window only sees that window's columns
            h = self.hidden_columns(inp)[:, :, k - 1:]
        else:
            M = inp.shape[2] - k + 1
            h = ad.concat([self.hidden_columns(inp[:, :, i: i + k])[:, :, k - 1:] for i in range(M)], axis=2)
        out = ad.linear(ad.swapaxes(h, 1, 2), self.params["head.weight"], self.params["head.bias"])
        return ad.swapaxes(out, 1, 2)


class Lstm(Backbone):
    def __init__(self, config: LstmConfig, k: int, seed: int = 0):
        if k < 1:
            raise ConfigError(f"history length must be positive, got {k}")
        super().__init__("lstm", config, k)
        rng = np.random.default_rng(seed)
        H = config.hidden
        d = config.d_in
        for layer in range(config.layers):
            self.params[f"lstm{layer}.w_ih"] = Parameter(_uniform(rng, (4 * H, d), H), f"lstm{layer}.w_ih")
            self.params[f"lstm{layer}.w_hh"] = Parameter(_uniform(rng, (4 * H, H), H), f"lstm{layer}.w_hh")
            self.params[f"lstm{layer}.bias"] = Parameter(_uniform(rng, (4 * H,), H), f"lstm{layer}.bias")
            d = H
        self.params["head.weight"] = Parameter(_uniform(rng, (config.d_out, H), H), "head.weight")
        self.params["head.bias"] = Parameter(_uniform(rng, (config.d_out,), H), "head.bias")

    @staticmethod
    def analytic_parameter_count(config: LstmConfig) -> int:
        H, total, d = config.hidden, 0, config.d_in
        for _ in range(config.layers):
            total += 4 * H * d + 4 * H * H + 4 * H
            d = H
        return total + config.d_out * H + config.d_out

    def forward_windows(self, inp) -> Tensor:
        inp = ad.as_tensor(inp)
        self._check_columns(inp)
        B, _, N = inp.shape
        M = N - self.k + 1
        H = self.config.hidden
        xs = ad.swapaxes(inp, 1, 2)  # (B, N, d_in)
        layer_in = [xs[:, s: s + M, :] for s in range(self.k)]
        for layer in range(self.config.layers):
            w_ih = self.params[f"lstm{layer}.w_ih"]
            w_hh = self.params[f"lstm{layer}.w_hh"]
            bias = self.params[f"lstm{layer}.bias"]
            h = c = Tensor(np.zeros((B, M, H)))
            outs = []
            for x in layer_in:
                h, c = ad.lstm_cell_step(x, h, c, w_ih, w_hh, bias)
                outs.append(h)
            layer_in = outs
        out = ad.linear(layer_in[-1], self.params["head.weight"], self.params["head.bias"])
        return ad.swapaxes(out, 1, 2)


def build_backbone(kind: str, d_in: int, d_out: int, k: int, seed: int = 0, **hyper) -> Backbone:
    if kind == "tcn":
        return Tcn(TcnConfig(d_in=d_in, d_out=d_out, **hyper), k, seed)
    if kind == "lstm":
        return Lstm(LstmConfig(d_in=d_in, d_out=d_out, **hyper), k, seed)
    raise ConfigError(f"unknown backbone kind {kind!r} (expected 'tcn' or 'lstm')")


def causality_probe(model, H: np.ndarray, t: int, rng: np.random.Generator | None = None) -> bool:
    """True iff perturbing history columns after ``t`` leaves outputs at columns ``<= t`` bit-identical.

    Runs the model's column-wise path on the history with ``k - 1`` leading
    zero columns, so every column of ``H`` owns an output.
    """
    H = np.asarray(H, dtype=np.float64)
    d_in, k = H.shape
    if not 0 <= t < k - 1:
        raise ValueError(f"probe index must satisfy 0 <= t < k - 1, got t={t}, k={k}")
    rng = rng or np.random.default_rng(0)
    pad = np.zeros((d_in, model.k - 1))
    with ad.no_grad():
        base = model.forward_windows(np.concatenate([pad, H], axis=1)[None]).data
        perturbed = H.copy()
        perturbed[:, t + 1:] += rng.normal(size=perturbed[:, t + 1:].shape)
        moved = model.forward_windows(np.concatenate([pad, perturbed], axis=1)[None]).data
    return bool(np.array_equal(base[..., : t + 1], moved[..., : t + 1]))
