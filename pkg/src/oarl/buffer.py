"""Ring replay buffer that rebuilds observation histories at sample time.

Each slot remembers the episode it came from and its global insertion
index. A history frame is taken from the ring only if it is the direct
predecessor in the same episode and has not been overwritten; anything else
becomes a zero frame.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .exceptions import ConfigurationError, ContractViolation


class Batch(NamedTuple):
    obs: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_obs: np.ndarray
    done: np.ndarray
    hist: np.ndarray | None = None
    next_hist: np.ndarray | None = None


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, history_len: int = 0):
        if capacity <= 0 or obs_dim <= 0 or history_len < 0:
            raise ConfigurationError("capacity and obs_dim must be positive")
        self.capacity = int(capacity)
        self.obs_dim = int(obs_dim)
        self.history_len = int(history_len)
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.action = np.zeros(capacity)
        self.reward = np.zeros(capacity)
        self.done = np.zeros(capacity)
        self.episode = np.full(capacity, -1, dtype=np.int64)
        self.step = np.full(capacity, -1, dtype=np.int64)
        self.index = np.full(capacity, -1, dtype=np.int64)
        self.total = 0

    def __len__(self) -> int:
        return min(self.total, self.capacity)

    def add(self, obs, action, reward, next_obs, done, episode: int, step: int) -> int:
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape != (self.obs_dim,):
            raise ConfigurationError(f"observation shape {obs.shape} != ({self.obs_dim},)")
        p = self.total % self.capacity
        self.obs[p] = obs
        self.next_obs[p] = next_obs
        self.action[p] = action
        self.reward[p] = reward
        self.done[p] = float(done)
        self.episode[p] = episode
        self.step[p] = step
        self.index[p] = self.total
        self.total += 1
        return p

    def sample_positions(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if len(self) < n:
            raise ContractViolation(f"buffer holds {len(self)} < {n} transitions")
        return rng.choice(len(self), size=n, replace=False)

    def history(self, positions) -> np.ndarray:
        """Frames ``o_{t-l} .. o_{t-1}`` (oldest first) for each stored position."""
        positions = np.asarray(positions)
        l = self.history_len
        out = np.zeros((positions.size, l, self.obs_dim))
        gidx = self.index[positions]
        ep = self.episode[positions]
        for k in range(1, l + 1):
            p = (positions - k) % self.capacity
            ok = (self.index[p] == gidx - k) & (self.episode[p] == ep) & (gidx - k >= 0)
            out[ok, l - k] = self.obs[p[ok]]
        return out

    def next_history(self, positions, hist: np.ndarray | None = None) -> np.ndarray:
        """History for the successor observation: drop the oldest frame, append ``o_t``."""
        positions = np.asarray(positions)
        if hist is None:
            hist = self.history(positions)
        if self.history_len == 0:
            return hist
        return np.concatenate([hist[:, 1:], self.obs[positions][:, None, :]], axis=1)

    def sample(self, n: int, rng: np.random.Generator, with_history: bool = False) -> Batch:
        pos = self.sample_positions(n, rng)
        hist = next_hist = None
        if with_history:
            hist = self.history(pos)
            next_hist = self.next_history(pos, hist)
        return Batch(self.obs[pos], self.action[pos], self.reward[pos], self.next_obs[pos],
                     self.done[pos], hist, next_hist)

    def state(self) -> dict:
        return {k: getattr(self, k).copy() for k in
                ("obs", "next_obs", "action", "reward", "done", "episode", "step", "index")} | {
                    "total": np.array(self.total)}

    def load_state(self, state: dict) -> None:
        for k in ("obs", "next_obs", "action", "reward", "done", "episode", "step", "index"):
            getattr(self, k)[...] = state[k]
        self.total = int(state["total"])


def stack_frames(current: np.ndarray, previous: np.ndarray) -> np.ndarray:
    """Concatenate the previous frames (oldest first) with the current observation.

    ``previous`` has shape ``(l, d)`` or ``(B, l, d)``; zero frames stand in for
    steps before the episode start.
    """
    current = np.asarray(current, dtype=np.float64)
    previous = np.asarray(previous, dtype=np.float64)
    if previous.shape[-1] != current.shape[-1]:
        raise ConfigurationError("frames must share one observation width")
    if current.ndim == 1:
        return np.concatenate([previous.ravel(), current])
    return np.concatenate([previous.reshape(current.shape[0], -1), current], axis=1)
