import numpy as np
import pytest

from oarl.buffer import ReplayBuffer, stack_frames
from oarl.exceptions import ConfigurationError, ContractViolation


def fill(buffer, lengths, rng):
    """Insert whole episodes; return the raw per-episode observation log."""
    log = []
    for ep, n in enumerate(lengths):
        frames = rng.normal(size=(n + 1, buffer.obs_dim))
        log.append(frames)
        for t in range(n):
            buffer.add(frames[t], rng.uniform(-1, 1), 0.0, frames[t + 1], t == n - 1, ep, t)
    return log


def naive_history(log, ep, t, l, global_index, total, capacity):
    """Previous l frames of the episode, zero before the start or once evicted."""
    out = np.zeros((l, log[ep].shape[1]))
    for k in range(1, l + 1):
        if t - k >= 0 and global_index - k >= total - capacity:
            out[l - k] = log[ep][t - k]
    return out


def test_ring_evicts_oldest():
    buf = ReplayBuffer(5, 1)
    for g in range(8):
        buf.add([float(g)], 0.0, 0.0, [0.0], False, 0, g)
    assert len(buf) == 5
    assert sorted(buf.index.tolist()) == [3, 4, 5, 6, 7]
    assert sorted(buf.obs[:, 0].tolist()) == [3.0, 4.0, 5.0, 6.0, 7.0]


def test_sampling_distinct_and_filled():
    buf = ReplayBuffer(100, 2)
    rng = np.random.default_rng(0)
    fill(buf, [10, 10], rng)
    for _ in range(50):
        pos = buf.sample_positions(16, rng)
        assert len(set(pos.tolist())) == 16
        assert np.all(buf.index[pos] >= 0)
    with pytest.raises(ContractViolation):
        buf.sample_positions(21, rng)


def test_history_matches_naive_replay_with_eviction():
    rng = np.random.default_rng(1)
    buf = ReplayBuffer(97, 3, history_len=2)
    lengths = rng.integers(1, 9, size=40)
    log = fill(buf, lengths, rng)
    where = [(ep, t) for ep, n in enumerate(lengths) for t in range(n)]
    pos = np.arange(len(buf))
    hist = buf.history(pos)
    for p, h in zip(pos, hist):
        g = buf.index[p]
        ep, t = where[g]
        assert buf.episode[p] == ep and buf.step[p] == t
        assert np.array_equal(h, naive_history(log, ep, t, 2, g, buf.total, buf.capacity))


def test_step_zero_history_is_zero_and_next_history_slides():
    rng = np.random.default_rng(2)
    buf = ReplayBuffer(50, 2, history_len=2)
    log = fill(buf, [6], rng)
    h = buf.history(np.arange(6))
    assert np.array_equal(h[0], np.zeros((2, 2)))
    assert np.array_equal(h[1], np.stack([np.zeros(2), log[0][0]]))
    nh = buf.next_history(np.arange(6))
    for t in range(5):
        assert np.array_equal(nh[t], h[t + 1])


def test_history_never_mixes_episodes():
    rng = np.random.default_rng(3)
    buf = ReplayBuffer(64, 2, history_len=2)
    fill(buf, rng.integers(1, 5, size=40), rng)
    pos = np.arange(len(buf))
    hist = buf.history(pos)
    for p, h in zip(pos, hist):
        for k in range(1, 3):
            frame = h[2 - k]
            if np.any(frame):
                q = (p - k) % buf.capacity
                assert buf.episode[q] == buf.episode[p]


def test_zero_length_history():
    buf = ReplayBuffer(10, 2, history_len=0)
    fill(buf, [4], np.random.default_rng(4))
    assert buf.history([0, 1]).shape == (2, 0, 2)
    assert buf.next_history([0, 1]).shape == (2, 0, 2)


def test_add_rejects_wrong_width():
    with pytest.raises(ConfigurationError):
        ReplayBuffer(4, 3).add([1.0, 2.0], 0, 0, [1.0, 2.0], False, 0, 0)


def test_stack_frames_shapes_and_padding():
    o = np.arange(1.0, 5.0)
    assert np.array_equal(stack_frames(o, np.zeros((2, 4))), np.r_[np.zeros(8), o])
    rv = np.ones(2 + 2 * 12)
    assert stack_frames(rv, np.zeros((2, 26))).size == 78
    assert np.array_equal(stack_frames(o, np.stack([o, o])), np.tile(o, 3))
    batch = stack_frames(np.ones((5, 4)), np.zeros((5, 2, 4)))
    assert batch.shape == (5, 12)
    with pytest.raises(ConfigurationError):
        stack_frames(o, np.zeros((2, 3)))
