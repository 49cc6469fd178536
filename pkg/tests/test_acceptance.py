"""Acceptance criteria 1 to 9, one test each.

Every test prints a single ``criterion N: PASS|FAIL ...`` line, and the lines
are repeated in the terminal summary. The scaled learning runs (7 and 8) are
cached under ``OARL_ACCEPTANCE_CACHE`` (default ``.acceptance_runs`` in the
repository root), keyed by a hash of the run configuration and the package
source, so they are only recomputed when either changes.
"""
import hashlib
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

import oarl
from conftest import ACCEPTANCE_LINES
from oarl import harness
from oarl.buffer import ReplayBuffer
from oarl.complex_oa import ComplexOA, ComplexOaConfig, ReferenceTrajectory
from oarl.kinematics import RIGHT, AgentState, Obstacles, integrate, ttc
from oarl.nn import DenseNet, LstmCell
from oarl.simple_oa import SimpleOA, gate_oracle

ROOT = Path(__file__).resolve().parents[1]
CACHE = Path(os.environ.get("OARL_ACCEPTANCE_CACHE", ROOT / ".acceptance_runs"))

# Desk-scale networks for the learning runs; all other settings are the defaults.
SCALED_HYPER = {"hidden": [64, 64], "mem_width": 32, "cfe_width": 32, "pi_hidden": [64]}
SCALED_STEPS = 500_000
SCALED_SEEDS = (0, 1, 2)


def verdict(n, ok, detail, started):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({time.time() - started:.0f} s) {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def numeric_grad(loss, params, eps=1e-6):
    g = np.zeros_like(params)
    for k in range(params.size):
        old = params[k]
        params[k] = old + eps
        up = loss()
        params[k] = old - eps
        down = loss()
        params[k] = old
        g[k] = (up - down) / (2 * eps)
    return g


def rel_err(a, b):
    return np.max(np.abs(a - b)) / max(1e-8, np.max(np.abs(a)) + np.max(np.abs(b)))


def test_criterion_1_gradients():
    started = time.time()
    rng = np.random.default_rng(100)
    acts = ["tanh", "relu", "linear"]
    worst = 0.0
    for _ in range(100):
        depth = rng.integers(1, 4)
        sizes = list(rng.integers(1, 9, size=depth + 1))
        net = DenseNet(sizes, [acts[i] for i in rng.integers(0, 3, size=depth)], rng)
        x = rng.normal(size=(3, sizes[0]))
        w = rng.normal(size=(3, sizes[-1]))
        y, cache = net.forward_cache(x)
        grad, _ = net.backward(cache, w)
        num = numeric_grad(lambda: float(np.sum(net(x) * w)), net.params)
        worst = max(worst, rel_err(grad, num))
    for _ in range(100):
        n, h, T = rng.integers(1, 9), rng.integers(1, 9), rng.integers(1, 5)
        cell = LstmCell(int(n), int(h), rng)
        x = rng.normal(size=(2, T, n))
        w = rng.normal(size=(2, h))
        _, cache = cell.forward_cache(x)
        grad, _ = cell.backward(cache, w)
        num = numeric_grad(lambda: float(np.sum(cell(x) * w)), cell.params)
        worst = max(worst, rel_err(grad, num))
    verdict(1, worst < 1e-4, f"worst relative error {worst:.2e} over 100 dense + 100 LSTM",
            started)


def test_criterion_2_simple_oa_invariants():
    started = time.time()
    env = SimpleOA(rng=np.random.default_rng(200))
    kin = env.config.kin
    act = np.random.default_rng(201)
    problems = []
    lengths = []
    for ep in range(10_000):
        env.reset()
        rewards = []
        done = False
        while not done:
            _, r, done = env.step(act.uniform(-1, 1))
            rewards.append(r)
            if env.obstacles.y[0] - env.obstacles.y[1] != 50.0:
                problems.append((ep, "gap", env.obstacles.y[0] - env.obstacles.y[1]))
            if abs(env.agent.ay) > kin.max_accel_y or abs(env.agent.vy) > kin.max_speed_y:
                problems.append((ep, "bounds"))
        if any(rewards[:-1]) or abs(rewards[-1]) != 100:
            problems.append((ep, "reward"))
        lengths.append(len(rewards))
    lo, hi = 280 // 5, -(-320 // 5) + 1
    bad_len = sum(not lo <= n <= hi for n in lengths)
    ok = not problems and bad_len == 0
    verdict(2, ok, f"{len(problems)} invariant breaks, lengths {min(lengths)}..{max(lengths)} "
                   f"(allowed {lo}..{hi}) over 10^4 episodes", started)


def crossing_error(agent, obs, rep, target, kin):
    """Forward-simulate one freshly placed obstacle to its crossing time."""
    agent = AgentState(x=agent.x, vx=agent.vx)
    for _ in range(rep.crossing_step - rep.step):
        agent, obs = integrate(agent, obs, kin)
    residual = (obs.x[0] - agent.x) / (agent.vx - obs.vx[0])
    return abs(obs.y[0] + obs.vy[0] * residual - target)


def test_criterion_3_complex_oa_invariants():
    started = time.time()
    cfg = ComplexOaConfig()
    assert cfg.horizon == 500
    env = ComplexOA(cfg, rng=np.random.default_rng(300))
    act = np.random.default_rng(301)
    worst_r = [0.0, -1.0]
    worst_ttc = worst_geo = 0.0
    n_rep = 0

    def check(reps):
        nonlocal worst_ttc, worst_geo, n_rep
        for rep in reps:
            i = rep.obstacle
            o = env.obstacles
            worst_ttc = max(worst_ttc, abs(ttc(env.agent, o.x[i], o.vx[i]) - rep.ttc))
            single = Obstacles([o.x[i]], [o.y[i]], [o.vx[i]], [o.vy[i]])
            side = rep.offset if o.rule[i] == RIGHT else -rep.offset
            target = env.traj[rep.crossing_step] + side
            worst_geo = max(worst_geo, crossing_error(env.agent, single, rep, target, cfg.kin))
            n_rep += 1

    for _ in range(1000):
        env.reset()
        check(env.replacements)
        done = False
        while not done:
            n = len(env.replacements)
            _, r, done = env.step(act.uniform(-1, 1))
            worst_r = [max(worst_r[0], r), min(worst_r[1], r)]
            check(env.replacements[n:])
    traj = ReferenceTrajectory(cfg.ar_phi, cfg.ar_var, cfg.smoothing,
                               np.random.default_rng(302), length=1_000_001)
    # the AR(1) state itself, before smoothing
    target = cfg.ar_var / (1 - cfg.ar_phi ** 2)
    var_err = abs(np.var(traj.ar[1:]) / target - 1)
    ok = (worst_r[0] <= 0 and worst_r[1] >= -1 and worst_ttc <= 1e-9 and worst_geo <= 1e-6
          and var_err <= 0.05)
    verdict(3, ok, f"rewards in [{worst_r[1]:.3f}, {worst_r[0]:.3f}], {n_rep} placements, "
                   f"TTC err {worst_ttc:.1e} s, crossing err {worst_geo:.1e} m, "
                   f"AR variance off by {100 * var_err:.1f}%", started)


def test_criterion_4_history_oracle():
    started = time.time()
    rng = np.random.default_rng(400)
    l, d = 2, 5
    buf = ReplayBuffer(4000, d, history_len=l)
    lengths = rng.integers(1, 120, size=100)
    log, where = [], []
    for ep, n in enumerate(lengths):
        frames = rng.normal(size=(n + 1, d))
        log.append(frames)
        for t in range(n):
            buf.add(frames[t], 0.0, 0.0, frames[t + 1], t == n - 1, ep, t)
            where.append((ep, t))
    assert buf.total > buf.capacity
    pos = buf.sample_positions(len(buf), rng)
    pos = np.concatenate([pos, rng.integers(0, len(buf), size=10_000 - pos.size)])
    hist = buf.history(pos)
    mismatches = step0 = evicted = 0
    oldest = buf.total - buf.capacity
    for p, h in zip(pos, hist):
        g = int(buf.index[p])
        ep, t = where[g]
        naive = np.zeros((l, d))
        for k in range(1, l + 1):
            if t - k >= 0 and g - k >= oldest:
                naive[l - k] = log[ep][t - k]
            elif t - k >= 0:
                evicted += 1
        step0 += t == 0
        mismatches += not np.array_equal(h, naive)
    episodes = len(set(buf.episode[pos].tolist()))
    ok = mismatches == 0 and episodes >= 50 and step0 > 0 and evicted > 0
    verdict(4, ok, f"{mismatches} mismatches over {pos.size} indices from {episodes} episodes "
                   f"({step0} at step 0, {evicted} evicted frames)", started)


def test_criterion_5_schedule():
    started = time.time()
    cfg = harness.RunConfig(steps=0, hyper={"hidden": [8, 8]})
    tr = harness.Trainer(cfg, 5)
    hp = tr.hp
    policy_calls = []
    original_act = tr.agent.act

    def spy(obs, history=None, explore=False, rng=None):
        policy_calls.append(tr.t)
        return original_act(obs, history, explore, rng)

    tr.agent.act = spy
    actor_fired, target_moved, noise_ok, update_calls = [], [], True, 0
    while tr.t < hp.start_steps + 200:
        before = tr.agent.actor_target.net.params.copy()
        info = tr.step()
        if info is None:
            continue
        update_calls += 1
        noise_ok &= bool(np.all(np.abs(info["target_noise"]) <= hp.noise_clip))
        actor_fired.append(info["actor_updated"])
        target_moved.append(not np.array_equal(before, tr.agent.actor_target.net.params))
    expected = [(k + 1) % hp.policy_delay == 0 for k in range(update_calls)]
    random_phase = policy_calls[0] - 1 if policy_calls else None
    ok = (actor_fired == expected and target_moved == expected and noise_ok
          and random_phase == hp.start_steps and hp.noise_clip == 0.5 and hp.policy_delay == 2)
    verdict(5, ok, f"random phase {random_phase} steps, {sum(actor_fired)}/{update_calls} "
                   f"delayed updates on schedule, noise within +-{hp.noise_clip}", started)


def test_criterion_6_determinism(tmp_path):
    started = time.time()
    paths = []
    for name in ("a", "b"):
        cfg = harness.RunConfig(steps=50_000, seeds=(6,), out=str(tmp_path / name),
                                hyper=dict(SCALED_HYPER), checkpoint=False)
        harness.train(cfg)
        paths.append(tmp_path / name / "eval_seed6.csv")
    a, b = (p.read_bytes() for p in paths)
    verdict(6, a == b and len(a.splitlines()) == 11,
            f"two 50k-step TD3 runs, eval CSVs identical: {a == b}", started)


def source_digest():
    h = hashlib.sha256()
    for f in sorted(Path(oarl.__file__).parent.glob("*.py")):
        h.update(f.read_bytes())
    return h.hexdigest()[:16]


def cached_run(env_mode, agent):
    """Train (or reuse) one scaled configuration over all seeds; return final scores."""
    cfg = harness.RunConfig(env="simple-oa", mode=env_mode, agent=agent, steps=SCALED_STEPS,
                            seeds=SCALED_SEEDS, hyper=dict(SCALED_HYPER), checkpoint=False)
    key = hashlib.sha256(json.dumps(cfg.to_dict(), sort_keys=True).encode()
                         + source_digest().encode()).hexdigest()[:12]
    out = CACHE / f"{agent}_{env_mode}_{key}"
    manifest = out / "manifest.json"
    done = manifest.exists() and all(
        s["status"] == "complete" for s in json.loads(manifest.read_text())["seeds"].values())
    if not done:
        cfg.out = str(out)
        harness.train(cfg)
    curves = harness.load_run(out)
    finals = [harness.smooth([r.mean for r in recs], 0.9)[-1] for recs in curves.values()]
    return float(np.mean(finals)), finals


def random_policy_baseline(episodes=1000):
    env = SimpleOA(rng=np.random.default_rng(700))
    rng = np.random.default_rng(701)
    return float(np.mean([harness.run_episode(env, lambda o, h: rng.uniform(-1, 1))
                          for _ in range(episodes)]))


@pytest.mark.slow
def test_criterion_7_scaled_learning():
    started = time.time()
    score, finals = cached_run("mdp", "td3")
    base = random_policy_baseline()
    ok = score >= 20 and base <= -40
    verdict(7, ok, f"TD3 Simple-OA/MDP final smoothed return {score:.1f} "
                   f"(seeds {', '.join(f'{f:.1f}' for f in finals)}), "
                   f"random baseline {base:.1f}", started)


@pytest.mark.slow
def test_criterion_8_pomdp_contrast():
    started = time.time()
    mdp, _ = cached_run("mdp", "td3")
    td3_rv, _ = cached_run("rv", "td3")
    lstm_rv, _ = cached_run("rv", "lstm-td3")
    ok = td3_rv <= mdp - 40 and lstm_rv >= td3_rv + 20
    verdict(8, ok, f"TD3 MDP {mdp:.1f}, TD3 RV {td3_rv:.1f}, LSTM-TD3 RV {lstm_rv:.1f}",
            started)


def test_criterion_9_oracle():
    started = time.time()
    env = SimpleOA(rng=np.random.default_rng(900))
    wins = 0
    for _ in range(1000):
        wins += harness.run_episode(env, lambda o, h: gate_oracle(env)) > 0
    verdict(9, wins >= 950, f"oracle success {wins / 10:.1f}% over 10^3 episodes", started)
