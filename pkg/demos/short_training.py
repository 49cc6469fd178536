"""
A short TD3 run on Simple-OA
============================

Trains two seeds with small networks for a few thousand steps, then writes
the aggregate CSV and the learning-curve SVG. Far too short to learn the
task; it shows the run-directory layout and the report step.
"""

from oarl import harness

config = harness.RunConfig(env="simple-oa", mode="mdp", agent="td3", steps=20_000,
                           seeds=(0, 1), out="runs/td3_mdp",
                           hyper={"hidden": [64, 64]})
manifest = harness.train(config)
print(manifest["seeds"])

results = harness.report(["runs/td3_mdp"], "runs/report", weight=0.9)
agg = results["td3_mdp"]
for step, mean, lo, hi in zip(agg["step"], agg["mean"], agg["lower"], agg["upper"]):
    print(f"{step:>6d}  {mean:7.1f}  [{lo:7.1f}, {hi:7.1f}]")
