"""Complex-OA: twelve obstacles with passing rules, recycled along a random corridor.

Obstacles 0-5 must be passed on the right, 6-11 on the left. Once two
obstacles of the same group are behind the agent, the older one is placed
ahead again so that, at its crossing time, it sits a sampled distance above
(right group) or below (left group) a smoothed AR(1) reference path.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, ContractViolation
from .kinematics import (LEFT, MDP, MODES, RIGHT, AgentState, KinematicParams, Obstacles,
                         apply_action, integrate, obs_dim, observe, ttc)

ENV_ID = "complex-oa"


@dataclass(frozen=True)
class ComplexOaConfig:
    n_obstacles: int = 12
    x_scale: float = 3000.0
    y_scale: float = 3000.0
    max_ttc_gap: float = 300.0       # s, spacing window for a recycled obstacle
    ar_phi: float = 0.99
    ar_var: float = 28.3             # m^2, innovation variance
    smoothing: float = 0.03
    offset_mean: float = 100.0       # m
    offset_var: float = 50.0         # m^2
    offset_min: float = 40.0         # m
    lateral_var: float = 25.0        # m^2, reward width across the path
    ttc_var: float = 25.0            # s^2, reward width along the path
    horizon: int = 500               # steps per episode
    min_speed_x: float = 1.0
    min_rel_speed_x: float = 0.01    # m/s, keeps recomputed TTC well conditioned
    kin: KinematicParams = field(default=None)

    def __post_init__(self):
        if self.n_obstacles < 2 or self.n_obstacles % 2:
            raise ConfigurationError("need an even number of obstacles (two groups)")
        if min(self.ar_var, self.offset_var, self.lateral_var, self.ttc_var) <= 0:
            raise ConfigurationError("variances must be positive")
        if not self.offset_min < self.offset_mean:
            raise ConfigurationError("offset_min must lie below offset_mean")
        if not abs(self.ar_phi) < 1 or not 0 < self.smoothing <= 1:
            raise ConfigurationError("need |phi| < 1 and smoothing in (0, 1]")
        if self.horizon <= 0 or self.max_ttc_gap <= 0:
            raise ConfigurationError("horizon and max_ttc_gap must be positive")
        if self.kin is None:
            object.__setattr__(self, "kin", KinematicParams(x_scale=self.x_scale,
                                                            y_scale=self.y_scale))


class ReferenceTrajectory:
    """Exponentially smoothed AR(1) lateral path, indexed by simulation step.

    Generated lazily from a private generator, so its values depend only on
    the seed it was built from and not on how far ahead it was queried.
    """

    def __init__(self, phi: float, var: float, beta: float, rng: np.random.Generator,
                 length: int = 0, x0: float = 0.0):
        self.phi, self.sd, self.beta = phi, math.sqrt(var), beta
        self.rng = rng
        self.ar = np.array([x0])
        self.path = np.array([x0])
        if length > 1:
            self._extend(length)

    def _extend(self, length: int) -> None:
        n_new = length - self.ar.size
        if n_new <= 0:
            return
        noise = self.rng.normal(0.0, self.sd, size=n_new)
        ar = np.empty(n_new)
        path = np.empty(n_new)
        x, y = self.ar[-1], self.path[-1]
        phi, beta = self.phi, self.beta
        for k in range(n_new):
            x = phi * x + noise[k]
            y = beta * x + (1.0 - beta) * y
            ar[k] = x
            path[k] = y
        self.ar = np.concatenate([self.ar, ar])
        self.path = np.concatenate([self.path, path])

    def __len__(self) -> int:
        return self.path.size

    def __getitem__(self, k: int) -> float:
        if k < 0:
            raise IndexError("trajectory has no negative steps")
        if k >= self.path.size:
            self._extend(max(k + 1, 2 * self.path.size))
        return float(self.path[k])


def gaussian_ratio(z):
    """Standard normal density at ``z`` divided by its peak value."""
    return np.exp(-0.5 * np.square(z))


def obstacle_rewards(agent: AgentState, obstacles: Obstacles, ttcs: np.ndarray,
                     cfg: ComplexOaConfig) -> np.ndarray:
    along = gaussian_ratio(ttcs / math.sqrt(cfg.ttc_var))
    side = np.where(obstacles.rule == RIGHT, obstacles.y - agent.y, agent.y - obstacles.y)
    across = gaussian_ratio(np.maximum(0.0, side) / math.sqrt(cfg.lateral_var))
    return -along * across


@dataclass
class Replacement:
    """Bookkeeping for one placement, used by tests and traces."""

    step: int
    obstacle: int
    ttc: float
    crossing_step: int
    offset: float
    agent_x: float


class ComplexOA:
    """Gym-style environment; ``reset()`` -> obs, ``step(a)`` -> (obs, reward, done)."""

    env_id = ENV_ID

    def __init__(self, config: ComplexOaConfig | None = None, mode: str = MDP,
                 rng: np.random.Generator | None = None, record_trace: bool = False):
        if mode not in MODES:
            raise ConfigurationError(f"unknown mode {mode!r}")
        self.config = config or ComplexOaConfig()
        self.mode = mode
        self.rng = rng if rng is not None else np.random.default_rng()
        self.obs_dim = obs_dim(self.config.n_obstacles, mode)
        half = self.config.n_obstacles // 2
        self.groups = (np.arange(half), np.arange(half, 2 * half))
        self.record_trace = record_trace
        self.trace: list[list[float]] = []
        self.replacements: list[Replacement] = []
        self.agent: AgentState | None = None
        self.obstacles: Obstacles | None = None
        self.traj: ReferenceTrajectory | None = None
        self.steps = 0
        self.done = True

    # -- setup ------------------------------------------------------------------
    def reset(self) -> np.ndarray:
        cfg, kin = self.config, self.config.kin
        n = cfg.n_obstacles
        self.agent = AgentState(vx=self.rng.uniform(cfg.min_speed_x, kin.max_speed_x))
        traj_rng = np.random.default_rng(self.rng.integers(2 ** 63))
        layout_steps = int(math.ceil((n // 2 + 1) * cfg.max_ttc_gap / kin.dt))
        self.traj = ReferenceTrajectory(cfg.ar_phi, cfg.ar_var, cfg.smoothing, traj_rng,
                                        length=cfg.horizon + layout_steps + 1)
        rule = np.where(np.arange(n) < n // 2, RIGHT, LEFT)
        self.obstacles = Obstacles(np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n), rule)
        self.steps = 0
        self.done = False
        self.replacements = []
        self.trace = []
        for group in self.groups:
            latest = 0.0
            for i in group:
                latest = self.rng.uniform(latest, latest + cfg.max_ttc_gap)
                self._place(i, latest)
        if self.record_trace:
            self._record(0.0)
        return self.observe()

    def _place(self, i: int, new_ttc: float) -> None:
        cfg, kin, rng, agent, obs = self.config, self.config.kin, self.rng, self.agent, self.obstacles
        vx = rng.uniform(-kin.max_speed_x, kin.max_speed_x)
        while abs(agent.vx - vx) < cfg.min_rel_speed_x:
            vx = rng.uniform(-kin.max_speed_x, kin.max_speed_x)
        vy = rng.uniform(-kin.max_speed_y, kin.max_speed_y)
        offset = max(cfg.offset_min, rng.normal(cfg.offset_mean, math.sqrt(cfg.offset_var)))
        crossing = self.steps + int(round(new_ttc / kin.dt))
        side = offset if obs.rule[i] == RIGHT else -offset
        obs.vx[i] = vx
        obs.vy[i] = vy
        obs.x[i] = (agent.vx - vx) * new_ttc + agent.x
        obs.y[i] = self.traj[crossing] + side - vy * new_ttc
        self.replacements.append(Replacement(self.steps, int(i), float(new_ttc), crossing,
                                             float(offset), agent.x))

    # -- dynamics -----------------------------------------------------------------
    def ttcs(self) -> np.ndarray:
        return ttc(self.agent, self.obstacles.x, self.obstacles.vx)

    def maybe_replace(self) -> None:
        """Recycle the oldest passed obstacle of any group with two or more passed."""
        for group in self.groups:
            while True:
                t = self.ttcs()[group]
                passed = np.flatnonzero(t < 0)
                if passed.size < 2:
                    break
                oldest = group[passed[np.argmin(t[passed])]]
                top = float(t.max())
                self._place(oldest, self.rng.uniform(top, top + self.config.max_ttc_gap))

    def reward(self) -> float:
        return float(np.min(obstacle_rewards(self.agent, self.obstacles, self.ttcs(), self.config)))

    def observe(self) -> np.ndarray:
        return observe(self.agent, self.obstacles, self.config.kin, self.mode)

    def step(self, action: float):
        if self.done:
            raise ContractViolation("episode is over; call reset()")
        kin = self.config.kin
        agent = apply_action(self.agent, float(action), kin)
        self.agent, self.obstacles = integrate(agent, self.obstacles, kin)
        self.steps += 1
        self.maybe_replace()
        r = self.reward()
        self.done = self.steps >= self.config.horizon
        if self.record_trace:
            self._record(r)
        return self.observe(), r, self.done

    # -- trace dump -----------------------------------------------------------------
    def trace_header(self) -> list[str]:
        cols = ["t", "agent_x", "agent_y", "agent_vx", "agent_vy", "agent_ay", "traj_y"]
        for i in range(self.config.n_obstacles):
            cols += [f"obs{i}_{q}" for q in ("x", "y", "vx", "vy", "rule")]
        return cols + ["reward"]

    def _record(self, r: float) -> None:
        a, o = self.agent, self.obstacles
        row = [self.steps, a.x, a.y, a.vx, a.vy, a.ay, self.traj[self.steps]]
        for i in range(len(o)):
            row += [o.x[i], o.y[i], o.vx[i], o.vy[i], int(o.rule[i])]
        self.trace.append(row + [r])

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.trace_header())
            w.writerows(self.trace)
