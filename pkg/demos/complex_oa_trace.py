"""
A Complex-OA episode
====================

Follows the reference path with a proportional jerk controller, dumps the
per-step trace to CSV and plots the agent against the obstacles.
"""

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from oarl.complex_oa import ComplexOA, ComplexOaConfig
from oarl.kinematics import RIGHT

env = ComplexOA(ComplexOaConfig(horizon=300), rng=np.random.default_rng(3), record_trace=True)
env.reset()


def follow_path(env, lookahead=10):
    # aim at the path a few steps ahead with a damped acceleration command
    kin = env.config.kin
    t = lookahead * kin.dt
    err = env.traj[env.steps + lookahead] - env.agent.y - env.agent.vy * t
    want = 2 * err / t ** 2
    return float(np.clip((want - env.agent.ay) / kin.max_jerk, -1, 1))


rewards, ys, path, obstacles = [], [], [], []
while not env.done:
    _, r, _ = env.step(follow_path(env))
    rewards.append(r)
    ys.append(env.agent.y)
    path.append(env.traj[env.steps])
    obstacles.append((env.obstacles.y.copy(), env.ttcs()))
env.write_trace("complex_oa_trace.csv")
print("mean reward", np.mean(rewards), "placements", len(env.replacements))

# an obstacle is drawn at the step where the agent passes it
steps = np.arange(1, len(ys) + 1)
fig, ax = plt.subplots(figsize=(9, 4))
ax.plot(steps, path, color="0.6", label="reference path")
ax.plot(steps, ys, label="agent")
for k, (oy, tt) in enumerate(obstacles):
    near = np.abs(tt) < env.config.kin.dt / 2
    for i in np.flatnonzero(near):
        ax.plot(k + 1, oy[i], "v" if env.obstacles.rule[i] == RIGHT else "^", color="C3")
ax.set_xlabel("step")
ax.set_ylabel("y [m]")
ax.legend()
fig.tight_layout()
fig.savefig("complex_oa_trace.png")
