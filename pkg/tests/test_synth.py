import numpy as np
import pytest

from dram.pose import default_topology, rotations_to_positions
from dram.synth import (DATASET_MAGIC, DatasetFormatError, SynthConfig, SynthConfigError, dataset_nbytes,
                        generate_corpus, generate_sequence, make_split, read_dataset, read_dataset_header,
                        write_dataset)

SHORT = SynthConfig(duration=900, seed=3)


def test_same_seed_is_bit_identical():
    assert generate_sequence(SHORT, 2).equals(generate_sequence(SHORT, 2))
    assert not generate_sequence(SHORT, 2).equals(generate_sequence(SHORT, 3))


def test_stream_shapes_and_labels():
    s = generate_sequence(SynthConfig(duration=2700, seed=1))
    assert s.X.shape == s.XH.shape == (2700, 23)
    assert s.Y.shape == s.YH.shape == (2700, 48)
    for lab in s.labels:
        assert 0 <= lab.start < lab.onset < lab.end <= s.T
        assert lab.group in ("Head", "Torso")


def test_poses_are_unit_quaternions():
    s = generate_sequence(SHORT)
    for Y in (s.Y, s.YH):
        q = Y.reshape(len(Y), 12, 4)
        assert np.abs(np.linalg.norm(q, axis=-1) - 1).max() < 1e-9
        assert np.all(q[0, :, 0] >= 0)
    assert np.isfinite(rotations_to_positions(s.Y, default_topology())).all()


def test_events_do_not_overlap():
    for s in generate_corpus(SynthConfig(duration=5400, seed=2, event_rate=6.0), 5):
        spans = sorted((lab.start, lab.end) for lab in s.labels)
        assert all(a[1] <= b[0] for a, b in zip(spans, spans[1:]))


def test_without_coupling_avatar_ignores_the_human():
    base = generate_sequence(SynthConfig(duration=1800, seed=4, g_inter=0.0))
    other = generate_sequence(SynthConfig(duration=1800, seed=4, g_inter=0.0, human_seed=99))
    assert not np.array_equal(base.YH, other.YH)
    assert np.array_equal(base.X, other.X) and np.array_equal(base.Y, other.Y)


def test_avatar_response_starts_after_lag():
    kw = dict(duration=5400, seed=5, event_rate=6.0)
    coupled = generate_sequence(SynthConfig(**kw))
    free = generate_sequence(SynthConfig(**kw, g_inter=0.0))
    assert coupled.labels == free.labels and coupled.labels
    changed = np.any(coupled.Y != free.Y, axis=1) | np.any(coupled.X != free.X, axis=1)
    allowed = np.zeros(coupled.T, dtype=bool)
    for lab in coupled.labels:
        allowed[lab.onset: lab.end] = True
    assert changed.any()
    assert not np.any(changed & ~allowed)


def test_event_rate_matches_configuration():
    cfg = SynthConfig(duration=5400, seed=6)
    counts = [len(s.labels) for s in generate_corpus(cfg, 100)]
    assert abs(np.mean(counts) - 3.0) <= 0.5


def test_infeasible_event_rate():
    with pytest.raises(SynthConfigError, match="infeasible"):
        generate_sequence(SynthConfig(duration=900, event_rate=60.0))


@pytest.mark.parametrize("bad", [dict(g_intra=-1.0), dict(g_inter=-0.1), dict(event_kinds=("wave",)),
                                 dict(noise_scale=-1.0), dict(duration=1)])
def test_invalid_config(bad):
    with pytest.raises(SynthConfigError):
        SynthConfig(**bad)


def _lagged_corr(a, b, lag):
    a, b = a[:-lag], b[lag:]
    return float(np.corrcoef(a, b)[0, 1])


def test_uncoupled_streams_are_uncorrelated():
    # head pitch and hip yaw of the human against the avatar, lagged by the reaction time
    cfg = SynthConfig(duration=5400, g_inter=0.0, seed=7)
    seqs = generate_corpus(cfg, 50)
    lag = cfg.reaction_lag
    head, hips = 4 * 3 + 1, 0 * 4 + 2
    paired = [_lagged_corr(s.YH[:, c], s.Y[:, c], lag) for s in seqs for c in (head, hips)]
    shuffled = [_lagged_corr(s.YH[:, c], t.Y[:, c], lag) for s, t in zip(seqs, seqs[1:] + seqs[:1])
                for c in (head, hips)]
    assert abs(np.mean(paired)) < 0.1
    assert abs(np.mean(paired) - np.mean(shuffled)) < 0.1


def test_coupled_streams_correlate_during_events():
    s = generate_sequence(SynthConfig(duration=5400 * 2, seed=8, event_kinds=("head_nod_mirror",), event_rate=6.0))
    lab = s.labels[0]
    head, lag = 4 * 3 + 1, lab.onset - lab.start
    human = s.YH[lab.start: lab.end - lag, head]
    avatar = s.Y[lab.onset: lab.end, head]
    assert np.corrcoef(human, avatar)[0, 1] > 0.5


# splits ---------------------------------------------------------------------------------

def test_split_sizes_and_partition():
    items = list(range(10))
    sp = make_split(items, (0.8, 0.1, 0.1), seed=1)
    assert (len(sp.train), len(sp.val), len(sp.test)) == (8, 1, 1)
    assert sorted(sp.train + sp.val + sp.test) == items
    again = make_split(items, (0.8, 0.1, 0.1), seed=1)
    assert (sp.train, sp.val, sp.test) == (again.train, again.val, again.test)


def test_split_errors():
    with pytest.raises(ValueError):
        make_split([1, 2], (0.8, 0.1, 0.1))
    with pytest.raises(ValueError):
        make_split(list(range(10)), (0.5, 0.5, 0.5))


# container file -------------------------------------------------------------------------

def test_dataset_roundtrip_and_size(tmp_path):
    seqs = generate_corpus(SynthConfig(duration=400, seed=9, event_rate=8.0), 3)
    path = tmp_path / "d.dyad"
    write_dataset(path, seqs)
    back, header = read_dataset(path)
    assert header == {"a": 23, "p": 48, "frame_rate": 90.0, "count": 3}
    assert all(a.equals(b) for a, b in zip(seqs, back))
    labels = sum(len(s.labels) for s in seqs)
    expected = 8 + 20 + sum(4 + 8 * s.T * (2 * 23 + 2 * 48) + 4 for s in seqs) + 14 * labels
    assert path.stat().st_size == expected == dataset_nbytes(seqs)
    assert read_dataset_header(path) == header


def test_dataset_writes_are_byte_identical(tmp_path):
    cfg = SynthConfig(duration=300, seed=10)
    write_dataset(tmp_path / "a.dyad", generate_corpus(cfg, 2))
    write_dataset(tmp_path / "b.dyad", generate_corpus(cfg, 2))
    assert (tmp_path / "a.dyad").read_bytes() == (tmp_path / "b.dyad").read_bytes()


def test_dataset_format_errors(tmp_path):
    path = tmp_path / "d.dyad"
    write_dataset(path, generate_corpus(SynthConfig(duration=200, seed=11), 1))
    raw = path.read_bytes()
    (tmp_path / "magic.dyad").write_bytes(b"NOTADYAD" + raw[8:])
    (tmp_path / "version.dyad").write_bytes(DATASET_MAGIC[:7] + b"9" + raw[8:])
    (tmp_path / "short.dyad").write_bytes(raw[:-3])
    with pytest.raises(DatasetFormatError, match="offset 0"):
        read_dataset(tmp_path / "magic.dyad")
    with pytest.raises(DatasetFormatError, match="version"):
        read_dataset(tmp_path / "version.dyad")
    with pytest.raises(DatasetFormatError, match="truncated at byte offset"):
        read_dataset(tmp_path / "short.dyad")
