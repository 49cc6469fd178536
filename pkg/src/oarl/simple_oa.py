"""Simple-OA: pass between two obstacles that form a laterally moving gate."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, ContractViolation
from .kinematics import (MDP, MODES, AgentState, KinematicParams, Obstacles, apply_action,
                         integrate, obs_dim, observe)

ENV_ID = "simple-oa"
GRID_BITS = 32


@dataclass(frozen=True)
class SimpleOaConfig:
    n_obstacles: int = 2
    x_scale: float = 1500.0
    y_scale: float = 1700.0
    y_max: float = 200.0
    gap: float = 50.0
    ttc0_low: float = 280.0
    ttc0_high: float = 320.0
    min_speed_x: float = 1.0
    kin: KinematicParams = field(default=None)

    def __post_init__(self):
        if self.n_obstacles != 2:
            raise ConfigurationError("Simple-OA has exactly two obstacles")
        if self.gap <= 0 or self.y_max <= 0 or not 0 < self.ttc0_low <= self.ttc0_high:
            raise ConfigurationError("invalid Simple-OA geometry")
        if self.kin is None:
            object.__setattr__(self, "kin", KinematicParams(x_scale=self.x_scale,
                                                            y_scale=self.y_scale))


class SimpleOA:
    """Gym-style environment; ``reset()`` -> obs, ``step(a)`` -> (obs, reward, done).

    Obstacle 0 is the upper post of the gate, obstacle 1 the lower one.
    """

    env_id = ENV_ID

    def __init__(self, config: SimpleOaConfig | None = None, mode: str = MDP,
                 rng: np.random.Generator | None = None):
        if mode not in MODES:
            raise ConfigurationError(f"unknown mode {mode!r}")
        self.config = config or SimpleOaConfig()
        self.mode = mode
        self.rng = rng if rng is not None else np.random.default_rng()
        self.obs_dim = obs_dim(self.config.n_obstacles, mode)
        self.agent: AgentState | None = None
        self.obstacles: Obstacles | None = None
        self.steps = 0
        self.done = True

    def reset(self) -> np.ndarray:
        cfg, kin, rng = self.config, self.config.kin, self.rng
        vx = rng.uniform(cfg.min_speed_x, kin.max_speed_x)
        ttc0 = rng.uniform(cfg.ttc0_low, cfg.ttc0_high)
        vy = _snap(rng.uniform(-kin.max_speed_y, kin.max_speed_y))
        # gate midpoint when the agent reaches it, moved back to t = 0
        mid = _snap(rng.uniform(-cfg.y_max, cfg.y_max) - vy * ttc0)
        half = cfg.gap / 2
        self.agent = AgentState(vx=vx)
        self.obstacles = Obstacles(x=[vx * ttc0, vx * ttc0], y=[mid + half, mid - half],
                                   vx=[0.0, 0.0], vy=[vy, vy])
        self.ttc0 = ttc0
        self.steps = 0
        self.done = False
        return self.observe()

    def observe(self) -> np.ndarray:
        return observe(self.agent, self.obstacles, self.config.kin, self.mode)

    def step(self, action: float):
        if self.done:
            raise ContractViolation("episode is over; call reset()")
        kin = self.config.kin
        agent = apply_action(self.agent, float(action), kin)
        self.agent, self.obstacles = integrate(agent, self.obstacles, kin)
        self.steps += 1
        reward = 0.0
        if self.agent.x > self.obstacles.x[0]:
            self.done = True
            upper, lower = self.obstacles.y
            reward = 100.0 if lower < self.agent.y < upper else -100.0
        return self.observe(), reward, self.done


def _snap(v: float) -> float:
    """Round to a 2**-32 m grid.

    With the gate midpoint and speed on this grid every post position stays
    exactly representable, so the gap is exactly ``gap`` for the whole episode.
    """
    return float(np.ldexp(np.round(np.ldexp(v, GRID_BITS)), -GRID_BITS))


def steps_to_finish(env: SimpleOA) -> int:
    """Steps left until the agent is past the gate."""
    gap_x = env.obstacles.x[0] - env.agent.x
    return int(np.floor(gap_x / (env.agent.vx * env.config.kin.dt))) + 1


def gate_oracle(env: SimpleOA) -> float:
    """Jerk command that steers toward the gate midpoint at the final step.

    Uses full state: predicts where the gate will be, solves for the constant
    acceleration that lands there, and moves the current acceleration toward it.
    """
    kin = env.config.kin
    n = max(1, steps_to_finish(env))
    horizon = n * kin.dt
    target = env.obstacles.y.mean() + env.obstacles.vy[0] * horizon
    err = target - env.agent.y - env.agent.vy * horizon
    accel = 2.0 * err / horizon ** 2
    return float(np.clip((accel - env.agent.ay) / kin.max_jerk, -1.0, 1.0))
