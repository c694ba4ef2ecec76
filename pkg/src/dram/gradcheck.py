"""Registry of finite-difference gradient checks over every differentiable op.

Each entry builds a random toy instance from a generator and returns
``(fn, inputs)`` for :func:`dram.autodiff.grad_check`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .backbones import Lstm, LstmConfig, Tcn, TcnConfig
from .model import ForecastModel, dram_combine, residual_attention

TOLERANCE = 1e-4
DEFAULT_SEEDS = 20

Case = Callable[[np.random.Generator], tuple[Callable[[], Tensor], list[Tensor]]]


def _p(rng: np.random.Generator, *shape, away_from_zero: bool = False) -> Parameter:
    x = rng.normal(size=shape)
    if away_from_zero:
        # keep kinks (relu, abs) well outside the finite-difference stencil
        x = np.where(np.abs(x) < 0.05, np.sign(x + 1e-12) * 0.05 + x, x)
    return Parameter(x)


def _add(rng):
    a, b = _p(rng, 3, 4), _p(rng, 4)
    return (lambda: (a + b) * a), [a, b]


def _sub_neg(rng):
    a, b = _p(rng, 3, 4), _p(rng, 3, 4)
    return (lambda: -(a - b) * b), [a, b]


def _mul(rng):
    a, b = _p(rng, 2, 3, 4), _p(rng, 3, 1)
    return (lambda: a * b * a), [a, b]


def _getitem(rng):
    a = _p(rng, 4, 5)
    w = rng.normal(size=(2, 3))
    return (lambda: a[1:3, ::2] * w), [a]


def _concat(rng):
    a, b = _p(rng, 2, 3), _p(rng, 2, 2)
    w = rng.normal(size=(2, 5))
    return (lambda: ad.concat([a, b], axis=1) * w), [a, b]


def _swapaxes(rng):
    a = _p(rng, 2, 3, 4)
    w = rng.normal(size=(2, 4, 3))
    return (lambda: ad.swapaxes(a, 1, 2) * w), [a]


def _tsum(rng):
    a = _p(rng, 3, 3)
    return (lambda: ad.tsum(a * a)), [a]


def _linear(rng):
    x, W, b = _p(rng, 3, 4), _p(rng, 5, 4), _p(rng, 5)
    w = rng.normal(size=(3, 5))
    return (lambda: ad.linear(x, W, b) * w), [x, W, b]


def _conv(rng):
    x, k, b = _p(rng, 2, 3, 9), _p(rng, 4, 3, 2), _p(rng, 4)
    d = int(rng.integers(1, 4))
    w = rng.normal(size=(2, 4, 9))
    return (lambda: ad.causal_dilated_conv1d(x, k, d, b) * w), [x, k, b]


def _lstm_cell(rng):
    x, h, c = _p(rng, 2, 3), _p(rng, 2, 4), _p(rng, 2, 4)
    W_ih, W_hh, b = _p(rng, 16, 3), _p(rng, 16, 4), _p(rng, 16)
    w1, w2 = rng.normal(size=(2, 4)), rng.normal(size=(2, 4))

    def fn():
        h2, c2 = ad.lstm_cell_step(x, h, c, W_ih, W_hh, b)
        return h2 * w1 + c2 * w2

    return fn, [x, h, c, W_ih, W_hh, b]


def _elementwise(kind: str) -> Case:
    def case(rng):
        x = _p(rng, 4, 5, away_from_zero=kind in ("relu", "abs"))
        w = rng.normal(size=(4, 5))
        return (lambda: ad.elementwise(kind, x) * w), [x]
    return case


def _mse(rng):
    pred = _p(rng, 5, 4)
    target = rng.normal(size=(5, 4))
    return (lambda: ad.mse_loss(pred, target)), [pred]


def _dram_blend(rng):
    zm, zd = _p(rng, 3, 4), _p(rng, 3, 4)
    # keep |zd - zm| away from zero, where abs has a kink
    zd.data = zm.data + np.where(rng.random((3, 4)) < 0.5, -1, 1) * rng.uniform(0.1, 1.0, size=(3, 4))
    w = rng.normal(size=(3, 4))
    return (lambda: dram_combine(zm, zd, residual_attention(zm, zd)) * w), [zm, zd]


def _tcn(rng):
    model = Tcn(TcnConfig(d_in=3, d_out=2, hidden=4, kernel_size=2, dilations=(1, 2)), k=4,
                seed=int(rng.integers(1 << 31)))
    x = _p(rng, 2, 3, 6)
    w = rng.normal(size=(2, 2, 3))
    return (lambda: model.forward_windows(x) * w), [x] + model.parameters()


def _lstm(rng):
    model = Lstm(LstmConfig(d_in=3, d_out=2, hidden=3, layers=int(rng.integers(1, 3))), k=3,
                 seed=int(rng.integers(1 << 31)))
    x = _p(rng, 2, 3, 4)
    w = rng.normal(size=(2, 2, 2))
    return (lambda: model.forward_windows(x) * w), [x] + model.parameters()


def _dram_step(rng):
    a, p, k = 2, 4, 4
    model = ForecastModel("dram", a, p, k, backbone_hyper={"hidden": 3, "dilations": (1, 2)},
                          seed=int(rng.integers(1 << 31)))
    L = 3
    X, Y, XH, YH = (rng.normal(size=(2, L + 2 * k, d)) for d in (a, p, a, p))
    w = rng.normal(size=(2, L, p))
    return (lambda: model.forward_chunk(X, Y, XH, YH, first_frame=5).y * w), model.parameters()


OPS: dict[str, Case] = {
    "add": _add,
    "sub_neg": _sub_neg,
    "mul": _mul,
    "getitem": _getitem,
    "concat": _concat,
    "swapaxes": _swapaxes,
    "sum": _tsum,
    "linear": _linear,
    "causal_conv1d": _conv,
    "lstm_cell": _lstm_cell,
    "tanh": _elementwise("tanh"),
    "sigmoid": _elementwise("sigmoid"),
    "relu": _elementwise("relu"),
    "abs": _elementwise("abs"),
    "mse_loss": _mse,
    "dram_blend": _dram_blend,
    "tcn": _tcn,
    "lstm": _lstm,
    "dram_step": _dram_step,
}


@dataclass
class CheckRow:
    op: str
    seeds: int
    max_rel_error: float
    seconds: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_error) and self.max_rel_error < TOLERANCE)


KINK_MARGIN = 100.0  # in units of the finite-difference step
MAX_REDRAWS = 50


def draw_case(case: Case, rng: np.random.Generator, h: float):
    """Draw an instance whose relu/abs inputs all stay clear of their kinks.

    Central differences straddling a kink measure neither one-sided
    derivative, so such draws say nothing about the backward pass.
    """
    for _ in range(MAX_REDRAWS):
        fn, inputs = case(rng)
        with ad.no_grad(), ad.track_kinks() as margins:
            fn()
        if not margins or min(margins) > KINK_MARGIN * h:
            return fn, inputs
    raise RuntimeError(f"no kink-free draw after {MAX_REDRAWS} attempts")


def run_gradcheck(ops: dict[str, Case] | None = None, seeds: int = DEFAULT_SEEDS, base_seed: int = 0,
                  h: float = 1e-5) -> list[CheckRow]:
    rows = []
    for name, case in (ops or OPS).items():
        t0 = time.perf_counter()
        worst = 0.0
        for s in range(seeds):
            fn, inputs = draw_case(case, np.random.default_rng([base_seed, s]), h)
            err = ad.grad_check(fn, inputs, h=h)
            worst = max(worst, err) if np.isfinite(err) else float("inf")
        rows.append(CheckRow(name, seeds, worst, time.perf_counter() - t0))
    return rows


def format_table(rows: list[CheckRow]) -> str:
    lines = [f"{'op':<16}{'seeds':>6}{'max rel err':>14}{'time s':>9}  result"]
    for r in rows:
        lines.append(f"{r.op:<16}{r.seeds:>6}{r.max_rel_error:>14.3e}{r.seconds:>9.2f}  "
                     f"{'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
