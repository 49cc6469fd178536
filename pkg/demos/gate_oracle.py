"""
Steering through a moving gate
==============================

Plays Simple-OA with the analytic controller and with random jerk commands,
then plots one episode of each.
"""

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from oarl.simple_oa import SimpleOA, gate_oracle


def episode(env, policy):
    env.reset()
    xs, ys, gate = [env.agent.x], [env.agent.y], [env.obstacles.y.copy()]
    r = 0.0
    while not env.done:
        _, r, _ = env.step(policy(env))
        xs.append(env.agent.x)
        ys.append(env.agent.y)
        gate.append(env.obstacles.y.copy())
    return np.array(xs), np.array(ys), np.array(gate), r


rng = np.random.default_rng(0)
oracle = [episode(SimpleOA(rng=np.random.default_rng(s)), gate_oracle)[-1] for s in range(200)]
random = [episode(SimpleOA(rng=np.random.default_rng(s)), lambda e: rng.uniform(-1, 1))[-1]
          for s in range(200)]
print("oracle success rate", np.mean(np.array(oracle) > 0))
print("random success rate", np.mean(np.array(random) > 0))

fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
for ax, (name, policy) in zip(axes, [("oracle", gate_oracle),
                                     ("random", lambda e: rng.uniform(-1, 1))]):
    xs, ys, gate, r = episode(SimpleOA(rng=np.random.default_rng(7)), policy)
    ax.plot(xs, ys, label="agent")
    ax.plot(xs, gate[:, 0], "k--", lw=0.8, label="gate (lateral position over time)")
    ax.plot(xs, gate[:, 1], "k--", lw=0.8)
    ax.set_title(f"{name}: reward {r:+.0f}")
    ax.set_xlabel("agent x [m]")
axes[0].set_ylabel("y [m]")
axes[0].legend()
fig.tight_layout()
fig.savefig("gate_oracle.png")
