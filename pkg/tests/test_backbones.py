import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dram import autodiff as ad
from dram.backbones import (ConfigError, Lstm, LstmConfig, Tcn, TcnConfig, TcnStream, WindowStream, build_backbone,
                            causality_probe, receptive_field)


def zeroed(model):
    for p in model.parameters():
        p.data[...] = 0.0
    return model


@pytest.mark.parametrize("K, dil, rf", [(2, (1,), 2), (2, (1, 2, 4), 8), (3, (1, 2, 4, 8), 31)])
def test_receptive_field(K, dil, rf):
    assert receptive_field(TcnConfig(d_in=1, d_out=1, kernel_size=K, dilations=dil)) == rf


def test_default_tcn_covers_default_history():
    assert receptive_field(TcnConfig(d_in=3, d_out=2)) >= 32
    Tcn(TcnConfig(d_in=3, d_out=2), k=32)


def test_short_receptive_field_rejected_at_construction():
    with pytest.raises(ConfigError, match="receptive field 8"):
        Tcn(TcnConfig(d_in=3, d_out=2, dilations=(1, 2, 4)), k=16)


@pytest.mark.parametrize("bad", [dict(hidden=0), dict(kernel_size=0), dict(dilations=()), dict(dilations=(1, 0))])
def test_bad_tcn_config(bad):
    with pytest.raises(ConfigError):
        TcnConfig(d_in=2, d_out=2, **bad)


def test_unknown_backbone_kind():
    with pytest.raises(ConfigError):
        build_backbone("gru", 2, 2, 4)


@pytest.mark.parametrize("kind", ["tcn", "lstm"])
def test_zero_parameters_give_zero_output(kind):
    m = zeroed(build_backbone(kind, 3, 2, 8, hidden=4, **({"dilations": (1, 2, 4)} if kind == "tcn" else {})))
    H = np.random.default_rng(0).normal(size=(3, 8))
    np.testing.assert_array_equal(m(H).data, 0.0)


def test_identity_tcn_returns_last_column():
    m = zeroed(Tcn(TcnConfig(d_in=3, d_out=3, hidden=3, dilations=(1,)), k=2))
    m.params["head.weight"].data[...] = np.eye(3)
    H = np.random.default_rng(1).normal(size=(3, 2))
    np.testing.assert_array_equal(m(H).data, H[:, -1])


@pytest.mark.parametrize("kind", ["tcn", "lstm"])
def test_forward_is_deterministic(kind):
    m = build_backbone(kind, 3, 2, 8, seed=5, hidden=4, **({"dilations": (1, 2, 4)} if kind == "tcn" else {}))
    H = np.random.default_rng(2).normal(size=(3, 8))
    assert m(H).data.tobytes() == m(H).data.tobytes()


def test_history_shape_checked():
    m = Lstm(LstmConfig(d_in=3, d_out=2, hidden=4), k=5)
    with pytest.raises(ad.DimensionError):
        m(np.zeros((3, 4)))


@pytest.mark.parametrize("cfg, cls", [
    (TcnConfig(d_in=5, d_out=3, hidden=7, kernel_size=3, dilations=(1, 2, 4)), Tcn),
    (TcnConfig(d_in=7, d_out=3, hidden=7, dilations=(1, 2, 4, 8), residual=False), Tcn),
    (LstmConfig(d_in=5, d_out=3, hidden=6, layers=2), Lstm),
])
def test_parameter_count_matches_config(cfg, cls):
    assert cls(cfg, k=8).n_parameters() == cls.analytic_parameter_count(cfg)


# causality ------------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["tcn", "lstm"]), st.data())
def test_backbones_are_causal(seed, kind, data):
    k = 8
    hyper = {"hidden": 4, "dilations": (1, 2, 4)} if kind == "tcn" else {"hidden": 4, "layers": 2}
    m = build_backbone(kind, 3, 2, k, seed=seed, **hyper)
    t = data.draw(st.integers(0, k - 2))
    H = np.random.default_rng(seed).normal(size=(3, k))
    assert causality_probe(m, H, t)


class CenteredConv:
    """Acausal double: every output column averages its neighbours on both sides."""

    k = 6

    def forward_windows(self, inp):
        x = ad.as_tensor(inp).data
        padded = np.pad(x, ((0, 0), (0, 0), (1, 1)))
        out = (padded[:, :, :-2] + padded[:, :, 1:-1] + padded[:, :, 2:]).sum(axis=1, keepdims=True)
        return ad.Tensor(out[:, :, self.k - 1:])


def test_probe_flags_acausal_double():
    H = np.random.default_rng(0).normal(size=(2, 6))
    assert not causality_probe(CenteredConv(), H, 2)


def test_probe_index_range():
    m = Lstm(LstmConfig(d_in=2, d_out=1, hidden=2), k=4)
    with pytest.raises(ValueError):
        causality_probe(m, np.zeros((2, 4)), 3)


def test_tcn_ignores_columns_older_than_receptive_field():
    m = Tcn(TcnConfig(d_in=2, d_out=2, hidden=4, dilations=(1, 2, 4)), k=8, seed=3)
    rng = np.random.default_rng(4)
    x = rng.normal(size=(1, 2, 20))
    base = m.hidden_columns(x).data
    x2 = x.copy()
    x2[:, :, :5] = rng.normal(size=(1, 2, 5)) * 10
    moved = m.hidden_columns(x2).data
    # column t sees columns t-7..t only
    assert np.array_equal(base[:, :, 12:], moved[:, :, 12:])


# window evaluation paths ------------------------------------------------------------

def _per_window(m, x):
    k = m.k
    return np.stack([m(x[0, :, i: i + k]).data for i in range(x.shape[2] - k + 1)], axis=1)


def test_wide_receptive_field_matches_per_window_forward():
    m = Tcn(TcnConfig(d_in=3, d_out=2, hidden=4, dilations=(1, 2, 4, 8)), k=10, seed=1)
    x = np.random.default_rng(5).normal(size=(1, 3, 18))
    np.testing.assert_allclose(m.forward_windows(x).data[0], _per_window(m, x), atol=1e-13)


def test_exact_receptive_field_path_matches_per_window_forward():
    m = Tcn(TcnConfig(d_in=3, d_out=2, hidden=4, dilations=(1, 2, 4)), k=8, seed=1)
    x = np.random.default_rng(6).normal(size=(1, 3, 15))
    np.testing.assert_allclose(m.forward_windows(x).data[0], _per_window(m, x), atol=1e-13)


@pytest.mark.parametrize("model, cls", [
    (Tcn(TcnConfig(d_in=3, d_out=2, hidden=4, dilations=(1, 2, 4)), k=8, seed=2), TcnStream),
    (Tcn(TcnConfig(d_in=3, d_out=2, hidden=3, dilations=(1, 2, 4)), k=6, seed=2), WindowStream),
    (Lstm(LstmConfig(d_in=3, d_out=2, hidden=4), k=5, seed=2), WindowStream),
])
def test_stream_matches_window_forward(model, cls):
    rng = np.random.default_rng(7)
    k, n0, steps = model.k, model.k - 1, 12
    x = rng.normal(size=(2, 3, n0 + steps))
    stream = model.stream(x[:, :, :n0], steps)
    assert isinstance(stream, cls)
    got = np.stack([stream.push(x[:, :, n0 + s]) for s in range(steps)], axis=2)
    ref = model.forward_windows(x).data
    assert ref.shape[2] == steps and k == n0 + 1
    np.testing.assert_allclose(got, ref, atol=1e-12)
