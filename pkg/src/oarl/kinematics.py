"""Point-mass kinematics shared by both obstacle-avoidance environments.

The agent moves longitudinally at a constant speed and controls its lateral
motion through a jerk command. Obstacles are stored column-wise (one array per
quantity, indexed by obstacle id) because the observation and reward code
works on all of them at once.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import ActionClippedWarning, ConfigurationError, UndefinedTTCError

MDP = "mdp"
RV = "rv"
MODES = (MDP, RV)

RIGHT, LEFT, NONE = 0, 1, 2


@dataclass(frozen=True)
class KinematicParams:
    max_jerk: float = 0.005      # m/s^2 change per step
    max_accel_y: float = 0.01    # m/s^2
    max_speed_x: float = 5.0     # m/s
    max_speed_y: float = 5.0     # m/s
    dt: float = 5.0              # s
    x_scale: float = 1500.0      # m
    y_scale: float = 1700.0      # m

    def __post_init__(self):
        vals = (self.max_jerk, self.max_accel_y, self.max_speed_x, self.max_speed_y,
                self.dt, self.x_scale, self.y_scale)
        if min(vals) <= 0:
            raise ConfigurationError("kinematic parameters must be positive")
        if self.max_jerk > self.max_accel_y:
            raise ConfigurationError("max_jerk may not exceed max_accel_y")


@dataclass
class AgentState:
    x: float = 0.0
    y: float = 0.0
    vx: float = 0.0
    vy: float = 0.0
    ay: float = 0.0


@dataclass
class Obstacles:
    """Struct-of-arrays for all obstacles; index == obstacle id."""

    x: np.ndarray
    y: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    rule: np.ndarray = field(default=None)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.vx = np.asarray(self.vx, dtype=np.float64)
        self.vy = np.asarray(self.vy, dtype=np.float64)
        if self.rule is None:
            self.rule = np.full(self.x.shape, NONE, dtype=np.int64)

    def __len__(self) -> int:
        return self.x.size

    def copy(self) -> "Obstacles":
        return Obstacles(self.x.copy(), self.y.copy(), self.vx.copy(), self.vy.copy(),
                         self.rule.copy())


def apply_action(agent: AgentState, action: float, p: KinematicParams) -> AgentState:
    """Map a jerk command in [-1, 1] to the next lateral acceleration."""
    if not -1.0 <= action <= 1.0:
        warnings.warn(f"action {action} outside [-1, 1], clipped", ActionClippedWarning)
        action = min(1.0, max(-1.0, action))
    ay = agent.ay + p.max_jerk * action
    ay = min(p.max_accel_y, max(-p.max_accel_y, ay))
    return replace(agent, ay=ay)


def integrate(agent: AgentState, obstacles: Obstacles, p: KinematicParams):
    """Advance agent and obstacles by one step of length ``dt``.

    Lateral speed takes an Euler step with the already updated acceleration;
    positions use the average of old and new speed.
    """
    vy = agent.vy + agent.ay * p.dt
    vy = min(p.max_speed_y, max(-p.max_speed_y, vy))
    # vx is constant, so the trapezoid reduces to vx * dt
    nxt = AgentState(
        x=agent.x + agent.vx * p.dt,
        y=agent.y + 0.5 * (agent.vy + vy) * p.dt,
        vx=agent.vx,
        vy=vy,
        ay=agent.ay,
    )
    obs = Obstacles(obstacles.x + obstacles.vx * p.dt, obstacles.y + obstacles.vy * p.dt,
                    obstacles.vx, obstacles.vy, obstacles.rule)
    return nxt, obs


def observe(agent: AgentState, obstacles: Obstacles, p: KinematicParams, mode: str) -> np.ndarray:
    """Normalized feature vector: agent block then one block per obstacle id.

    Per obstacle (MDP): relative vx, relative vy, relative x, relative y, each
    taken as agent minus obstacle. RV drops the two velocity entries.
    """
    head = [agent.ay / p.max_accel_y, agent.vy / p.max_speed_y]
    dx = (agent.x - obstacles.x) / p.x_scale
    dy = (agent.y - obstacles.y) / p.y_scale
    if mode == MDP:
        dvx = (agent.vx - obstacles.vx) / p.max_speed_x
        dvy = (agent.vy - obstacles.vy) / p.max_speed_y
        blocks = np.stack([dvx, dvy, dx, dy], axis=1)
    elif mode == RV:
        blocks = np.stack([dx, dy], axis=1)
    else:
        raise ConfigurationError(f"unknown observation mode {mode!r}")
    return np.concatenate([head, blocks.ravel()])


def obs_dim(n_obstacles: int, mode: str) -> int:
    return 2 + (4 if mode == MDP else 2) * n_obstacles


def rv_projection(n_obstacles: int) -> np.ndarray:
    """Indices of an MDP vector that make up the RV vector."""
    keep = [0, 1]
    for i in range(n_obstacles):
        keep += [2 + 4 * i + 2, 2 + 4 * i + 3]
    return np.array(keep)


def ttc(agent: AgentState, obstacle_x, obstacle_vx):
    """Longitudinal time-to-collision; negative once the obstacle is behind.

    Works on scalars or arrays of obstacles.
    """
    rel = agent.vx - np.asarray(obstacle_vx, dtype=np.float64)
    if np.any(rel == 0.0):
        raise UndefinedTTCError("agent and obstacle have equal longitudinal speed")
    out = (np.asarray(obstacle_x, dtype=np.float64) - agent.x) / rel
    return float(out) if out.ndim == 0 else out
