"""Experiment driver: seeded training loops, evaluation, checkpoints and reports.

A run directory holds, per seed, ``eval_seed<S>.csv`` (step, seed,
ep_return_1..ep_return_K, mean_return), ``diagnostics_seed<S>.jsonl`` and
``checkpoint_seed<S>.npz``, plus a ``manifest.json`` describing the run.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .agents import AGENTS, Hyperparams, Td3Agent
from .buffer import ReplayBuffer
from .complex_oa import ComplexOA, ComplexOaConfig
from .exceptions import ConfigurationError, TrainingError
from .kinematics import MODES
from .simple_oa import SimpleOA, SimpleOaConfig

log = logging.getLogger(__name__)

ENVS = {"simple-oa": (SimpleOA, SimpleOaConfig), "complex-oa": (ComplexOA, ComplexOaConfig)}
STREAMS = ("env", "agent_init", "explore", "replay", "eval")
CHECKPOINT_VERSION = 1
ENV_PREFIX = "OARL_"


class ReportError(RuntimeError):
    pass


def make_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent named generators derived from one master seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(c) for name, c in zip(STREAMS, children)}


# -- configuration -----------------------------------------------------------------------

@dataclass
class RunConfig:
    env: str = "simple-oa"
    mode: str = "mdp"
    agent: str = "td3"
    steps: int = 15_000_000
    eval_period: int = 5000
    eval_episodes: int = 10
    seeds: tuple = (0,)
    out: str = "runs"
    hyper: dict = field(default_factory=dict)
    env_overrides: dict = field(default_factory=dict)
    eval_fixed_episodes: bool = False
    checkpoint: bool = True
    workers: int = 1

    def __post_init__(self):
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.env not in ENVS:
            raise ConfigurationError(f"unknown environment {self.env!r}")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.agent not in AGENTS:
            raise ConfigurationError(f"unknown agent {self.agent!r}")
        if self.eval_period <= 0 or self.eval_episodes <= 0 or self.steps < 0:
            raise ConfigurationError("steps, eval_period and eval_episodes must be positive")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ConfigurationError("seeds must be non-empty and distinct")
        self.hyperparams()
        self.env_config()

    def hyperparams(self) -> Hyperparams:
        return Hyperparams.from_dict(dict(self.hyper))

    def env_config(self):
        cls = ENVS[self.env][1]
        names = {f.name for f in fields(cls)}
        unknown = set(self.env_overrides) - names
        if unknown:
            raise ConfigurationError(f"unknown {self.env} options: {sorted(unknown)}")
        return cls(**self.env_overrides)

    def make_env(self, rng: np.random.Generator):
        return ENVS[self.env][0](self.env_config(), self.mode, rng)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d


def _parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if "," in text:
        return [_parse_value(t) for t in text.split(",") if t.strip()]
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def apply_overrides(config: RunConfig, pairs: dict) -> RunConfig:
    """Route flat ``key=value`` settings to the run, hyperparameter or env layer.

    Keys prefixed ``env.`` go to the environment config; hyperparameter names
    go to the agent; everything else must be a run-config field.
    """
    run_names = {f.name for f in fields(RunConfig)} - {"hyper", "env_overrides"}
    hyper_names = {f.name for f in fields(Hyperparams)}
    top, hyper, env = {}, dict(config.hyper), dict(config.env_overrides)
    for key, value in pairs.items():
        key = key.strip().lower()
        value = _parse_value(value) if isinstance(value, str) else value
        if key.startswith("env."):
            env[key[4:]] = value
        elif key in hyper_names:
            hyper[key] = value
        elif key in run_names:
            if key == "seeds" and not isinstance(value, list):
                value = [value]
            top[key] = value
        else:
            raise ConfigurationError(f"unknown setting {key!r}")
    return replace(config, hyper=hyper, env_overrides=env, **top)


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    pairs = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def env_var_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for k, v in environ.items():
        if k.startswith(ENV_PREFIX):
            key = k[len(ENV_PREFIX):].lower()
            if key.startswith("env_"):
                key = "env." + key[4:]
            out[key] = v
    return out


# -- evaluation ----------------------------------------------------------------------

@dataclass
class EvalRecord:
    step: int
    seed: int
    returns: list
    timestamp: float = 0.0

    @property
    def mean(self) -> float:
        return float(np.mean(self.returns))


def run_episode(env, policy, history_len: int = 0) -> float:
    """Play one episode; ``policy(obs, history)`` returns an action."""
    obs = env.reset()
    hist = np.zeros((history_len, obs.size))
    total, done = 0.0, False
    while not done:
        a = policy(obs, hist)
        nxt, r, done = env.step(a)
        total += r
        if history_len:
            hist = np.concatenate([hist[1:], obs[None]])
        obs = nxt
    return total


def evaluate(agent, env, episodes: int) -> list[float]:
    """Undiscounted returns of ``episodes`` episodes with exploration off.

    The environment carries its own generator; the agent is only read.
    """
    l = agent.hp.history_len if agent.uses_history else 0
    return [run_episode(env, lambda o, h: agent.act(o, h), l) for _ in range(episodes)]


def _eval_env(config: RunConfig, root: int, k: int):
    return config.make_env(np.random.default_rng([root, 0 if config.eval_fixed_episodes else k]))


# -- training ------------------------------------------------------------------------

def seed_paths(out: Path, seed: int) -> dict[str, Path]:
    return {"csv": out / f"eval_seed{seed}.csv",
            "diag": out / f"diagnostics_seed{seed}.jsonl",
            "ckpt": out / f"checkpoint_seed{seed}.npz"}


def build_agent(config: RunConfig, obs_dim: int, rng: np.random.Generator) -> Td3Agent:
    return Td3Agent(obs_dim, config.hyperparams(), config.agent, rng)


class Trainer:
    """One seed of one configuration: environment, agent, buffer and streams."""

    def __init__(self, config: RunConfig, seed: int):
        self.config, self.seed = config, seed
        self.streams = make_streams(seed)
        self.env = config.make_env(self.streams["env"])
        self.hp = config.hyperparams()
        self.agent = build_agent(config, self.env.obs_dim, self.streams["agent_init"])
        l = self.hp.history_len if self.agent.uses_history else 0
        self.history_len = l
        self.buffer = ReplayBuffer(self.hp.buffer_size, self.env.obs_dim, l)
        self.eval_root = int(self.streams["eval"].integers(2 ** 63))
        self.t = 0
        self.n_evals = 0
        self.episode = 0
        self.ep_step = 0
        self.obs = self.env.reset()
        self.hist = np.zeros((l, self.env.obs_dim))
        self.recent = {"critic_loss": [], "actor_loss": [], "action": []}

    def step(self) -> dict | None:
        hp, agent = self.hp, self.agent
        self.t += 1
        a = agent.training_action(self.obs, self.hist, self.t, self.streams["explore"])
        nxt, r, done = self.env.step(a)
        self.buffer.add(self.obs, a, r, nxt, done, self.episode, self.ep_step)
        self.recent["action"].append(a)
        info = None
        if self.t > hp.update_after and len(self.buffer) >= hp.batch_size:
            info = agent.update(self.buffer, self.streams["replay"])
            self.recent["critic_loss"].append(info["critic1_loss"])
            if info["actor_updated"]:
                self.recent["actor_loss"].append(info["actor_loss"])
        if done:
            self.obs = self.env.reset()
            self.hist = np.zeros_like(self.hist)
            self.episode += 1
            self.ep_step = 0
        else:
            if self.history_len:
                self.hist = np.concatenate([self.hist[1:], self.obs[None]])
            self.obs = nxt
            self.ep_step += 1
        return info

    def evaluate(self) -> EvalRecord:
        self.n_evals += 1
        env = _eval_env(self.config, self.eval_root, self.n_evals)
        returns = evaluate(self.agent, env, self.config.eval_episodes)
        return EvalRecord(self.t, self.seed, returns, time.time())

    def diagnostics(self) -> dict:
        r = self.recent
        d = {"step": self.t, "seed": self.seed, "time": time.time(), "episodes": self.episode,
             "critic_loss": float(np.mean(r["critic_loss"])) if r["critic_loss"] else None,
             "actor_loss": float(np.mean(r["actor_loss"])) if r["actor_loss"] else None,
             "action_mean": float(np.mean(r["action"])) if r["action"] else None,
             "action_std": float(np.std(r["action"])) if r["action"] else None}
        self.recent = {k: [] for k in r}
        return d


def train_seed(config: RunConfig, seed: int) -> list[EvalRecord]:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = seed_paths(out, seed)
    tr = Trainer(config, seed)
    records = []
    k = config.eval_episodes
    with open(paths["csv"], "w", newline="") as fh, open(paths["diag"], "w") as diag:
        w = csv.writer(fh)
        w.writerow(eval_header(k))
        for _ in range(config.steps):
            tr.step()
            if tr.t % config.eval_period == 0:
                rec = tr.evaluate()
                records.append(rec)
                w.writerow(eval_row(rec))
                fh.flush()
                diag.write(json.dumps(tr.diagnostics() | {"mean_return": rec.mean}) + "\n")
                diag.flush()
                log.info("seed %d step %d mean return %.2f", seed, tr.t, rec.mean)
    if config.checkpoint:
        save_checkpoint(paths["ckpt"], tr)
    return records


def _train_one(args):
    config, seed = args
    try:
        records = train_seed(config, seed)
        return seed, {"status": "complete", "evals": len(records)}
    except (TrainingError, FloatingPointError) as err:
        log.error("seed %d failed: %s", seed, err)
        return seed, {"status": "failed", "error": str(err)}


def train(config: RunConfig) -> dict:
    """Train every seed; a failing seed is recorded and the others continue."""
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"config": config.to_dict(), "seeds": {}, "started": time.time()}
    jobs = [(config, s) for s in config.seeds]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(_train_one, jobs))
    else:
        results = [_train_one(j) for j in jobs]
    for seed, status in results:
        manifest["seeds"][str(seed)] = status
    manifest["finished"] = time.time()
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


# -- eval CSV ----------------------------------------------------------------------------

def eval_header(k: int) -> list[str]:
    return ["step", "seed"] + [f"ep_return_{i}" for i in range(1, k + 1)] + ["mean_return"]


def eval_row(rec: EvalRecord) -> list:
    return [rec.step, rec.seed] + [float(r) for r in rec.returns] + [rec.mean]


def write_eval_csv(path, records: list[EvalRecord]) -> None:
    k = len(records[0].returns) if records else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(eval_header(k))
        w.writerows(eval_row(r) for r in records)


def read_eval_csv(path) -> list[EvalRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[:2] != ["step", "seed"] or header[-1] != "mean_return":
        raise ReportError(f"{path}: not an eval CSV")
    return [EvalRecord(int(r[0]), int(r[1]), [float(x) for x in r[2:-1]]) for r in body]


# -- reporting -----------------------------------------------------------------------

def smooth(series, weight: float = 0.9) -> np.ndarray:
    """Exponential smoothing ``s_k = w s_{k-1} + (1 - w) x_k`` with ``s_0 = x_0``."""
    if not 0.0 <= weight < 1.0:
        raise ConfigurationError("smoothing weight must lie in [0, 1)")
    x = np.asarray(series, dtype=np.float64)
    out = np.empty_like(x)
    if x.size == 0:
        return out
    out[0] = x[0]
    for k in range(1, x.size):
        out[k] = weight * out[k - 1] + (1.0 - weight) * x[k]
    return out


def aggregate(curves: dict, weight: float = 0.0) -> dict:
    """Cross-seed mean and two-standard-deviation band of smoothed curves.

    ``curves`` maps a name to a list of EvalRecords; all must share one step grid.
    """
    if not curves:
        raise ReportError("no completed runs to report")
    grids = {name: [r.step for r in recs] for name, recs in curves.items()}
    ref_name, ref = next(iter(grids.items()))
    bad = [n for n, g in grids.items() if g != ref]
    if bad:
        raise ReportError(f"step grids differ from {ref_name}: {', '.join(bad)}")
    values = np.array([smooth([r.mean for r in recs], weight) for recs in curves.values()])
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    return {"step": np.array(ref), "mean": mean, "std": std,
            "lower": mean - 2 * std, "upper": mean + 2 * std, "n": len(curves)}


def load_run(run_dir) -> dict:
    run_dir = Path(run_dir)
    files = sorted(run_dir.glob("eval_seed*.csv"))
    if not files:
        raise ReportError(f"{run_dir}: no eval CSVs")
    return {f"{run_dir.name}/{f.stem}": read_eval_csv(f) for f in files}


def report(run_dirs, out, weight: float = 0.9) -> dict:
    """Write ``aggregate_<run>.csv`` per run directory and one SVG of all curves."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    fig, ax = plt.subplots(figsize=(7, 4))
    for run_dir in run_dirs:
        name = Path(run_dir).name
        agg = aggregate(load_run(run_dir), weight)
        results[name] = agg
        with open(out / f"aggregate_{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "mean", "std", "lower", "upper", "n_runs"])
            for i in range(agg["step"].size):
                w.writerow([int(agg["step"][i]), agg["mean"][i], agg["std"][i],
                            agg["lower"][i], agg["upper"][i], agg["n"]])
        line, = ax.plot(agg["step"], agg["mean"], label=name)
        ax.fill_between(agg["step"], agg["lower"], agg["upper"], alpha=0.2,
                        color=line.get_color())
    ax.set_xlabel("training step")
    ax.set_ylabel("evaluation return")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "learning_curves.svg")
    plt.close(fig)
    return results


# -- checkpoints -----------------------------------------------------------------------

def save_checkpoint(path, trainer: Trainer) -> None:
    meta = {"version": CHECKPOINT_VERSION, "config": trainer.config.to_dict(),
            "seed": trainer.seed, "step": trainer.t, "episode": trainer.episode,
            "obs_dim": trainer.env.obs_dim, "eval_root": trainer.eval_root,
            "n_evals": trainer.n_evals,
            "rng": {k: g.bit_generator.state for k, g in trainer.streams.items()}}
    arrays = {f"agent.{k}": v for k, v in trainer.agent.state_dict().items()}
    np.savez(path, meta=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path):
    """Return ``(config, agent, meta)`` from a checkpoint written by ``save_checkpoint``."""
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version", 0) > CHECKPOINT_VERSION:
            raise ConfigurationError(f"checkpoint version {meta['version']} is newer than "
                                     f"supported {CHECKPOINT_VERSION}")
        state = {k[len("agent."):]: data[k] for k in data.files if k.startswith("agent.")}
    cfg = dict(meta["config"])
    config = RunConfig(**cfg)
    agent = build_agent(config, meta["obs_dim"], np.random.default_rng(0))
    agent.load_state_dict(state)
    return config, agent, meta


def evaluate_checkpoint(path, episodes: int, seed: int | None = None) -> EvalRecord:
    config, agent, meta = load_checkpoint(path)
    root = meta["eval_root"] if seed is None else seed
    env = config.make_env(np.random.default_rng([root, 10 ** 6]))
    return EvalRecord(meta["step"], meta["seed"], evaluate(agent, env, episodes), time.time())
