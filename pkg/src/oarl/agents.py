"""TD3, frame-stacked TD3 and LSTM-TD3 on top of the numpy kernel.

All three share one update schedule (twin critics with a min-bootstrap,
smoothed target actions, delayed actor and target updates). They differ only
in how actor and critic read an observation together with its history of
the previous ``history_len`` observations.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .buffer import ReplayBuffer, stack_frames
from .exceptions import ConfigurationError
from .nn import Adam, DenseNet, LstmCell, check_finite, soft_update

AGENTS = ("td3", "td3-fs", "lstm-td3")


@dataclass
class Hyperparams:
    gamma: float = 0.99
    batch_size: int = 32
    buffer_size: int = 100_000
    actor_lr: float = 1e-4
    critic_lr: float = 1e-4
    tau: float = 0.001
    start_steps: int = 5000
    update_after: int = 5000
    expl_noise: float = 0.1
    target_noise: float = 0.2
    noise_clip: float = 0.5
    policy_delay: int = 2
    history_len: int = 2
    hidden: tuple = (400, 300)
    mem_width: int = 128
    cfe_width: int = 128
    pi_hidden: tuple = (128,)

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.pi_hidden = tuple(int(h) for h in self.pi_hidden)
        if not 0 <= self.tau <= 1 or self.policy_delay < 1 or self.batch_size < 1:
            raise ConfigurationError("invalid TD3 hyperparameters")

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown hyperparameters: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["pi_hidden"] = list(self.pi_hidden)
        return d


# -- function approximators ------------------------------------------------------------

def _mlp(in_dim: int, hidden, out_act: str, rng) -> DenseNet:
    sizes = [in_dim, *hidden, 1]
    return DenseNet(sizes, ["relu"] * len(hidden) + [out_act], rng)


class MlpActor:
    """Dense actor over the current observation, optionally stacked with its history."""

    def __init__(self, obs_dim: int, hidden, frames: int = 1, rng=None, _net=None):
        self.obs_dim, self.frames = obs_dim, frames
        self.net = _net or _mlp(obs_dim * frames, hidden, "tanh", rng)

    def _x(self, obs, hist):
        return stack_frames(obs, hist) if self.frames > 1 else obs

    @property
    def params(self):
        return [self.net.params]

    def forward(self, obs, hist=None):
        return self.net.forward(self._x(obs, hist))[:, 0]

    def forward_cache(self, obs, hist=None):
        y, cache = self.net.forward_cache(self._x(obs, hist))
        return y[:, 0], cache

    def backward(self, cache, da):
        grad, _ = self.net.backward(cache, da[:, None], need_dx=False)
        return [grad]

    def copy(self):
        return MlpActor(self.obs_dim, None, self.frames, _net=self.net.copy())


class MlpCritic:
    def __init__(self, obs_dim: int, hidden, frames: int = 1, rng=None, _net=None):
        self.obs_dim, self.frames = obs_dim, frames
        self.net = _net or _mlp(obs_dim * frames + 1, hidden, "linear", rng)

    def _x(self, obs, action, hist):
        x = stack_frames(obs, hist) if self.frames > 1 else obs
        return np.concatenate([x, action[:, None]], axis=1)

    @property
    def params(self):
        return [self.net.params]

    def forward(self, obs, action, hist=None):
        return self.net.forward(self._x(obs, action, hist))[:, 0]

    def forward_cache(self, obs, action, hist=None):
        y, cache = self.net.forward_cache(self._x(obs, action, hist))
        return y[:, 0], cache

    def backward(self, cache, dq, need_daction=False):
        grad, dx = self.net.backward(cache, dq[:, None], need_dx=need_daction)
        return [grad], (dx[:, -1] if need_daction else None)

    def copy(self):
        return MlpCritic(self.obs_dim, None, self.frames, _net=self.net.copy())


class _Recurrent:
    """Memory branch over the history, current-feature branch, integration head."""

    def __init__(self, mem: LstmCell, cfe: DenseNet, pi: DenseNet):
        self.mem, self.cfe, self.pi = mem, cfe, pi

    @property
    def params(self):
        return [self.mem.params, self.cfe.params, self.pi.params]

    @staticmethod
    def _seq(hist, batch, width):
        # zero-length histories fall back to the single zero dummy frame
        if hist is None or hist.shape[1] == 0:
            return np.zeros((batch, 1, width))
        return hist

    def _forward(self, current, hist):
        m = self.mem.forward(self._seq(hist, current.shape[0], self.mem.input_dim))
        f = self.cfe.forward(current)
        return self.pi.forward(np.concatenate([m, f], axis=1))[:, 0]

    def _forward_cache(self, current, hist):
        m, mc = self.mem.forward_cache(self._seq(hist, current.shape[0], self.mem.input_dim))
        f, fc = self.cfe.forward_cache(current)
        y, pc = self.pi.forward_cache(np.concatenate([m, f], axis=1))
        return y[:, 0], (mc, fc, pc)

    def _backward(self, cache, dy, need_dcurrent):
        mc, fc, pc = cache
        gpi, dz = self.pi.backward(pc, dy[:, None], need_dx=True)
        w = self.mem.hidden_dim
        gmem, _ = self.mem.backward(mc, dz[:, :w])
        gcfe, dcur = self.cfe.backward(fc, dz[:, w:], need_dx=need_dcurrent)
        return [gmem, gcfe, gpi], dcur


class RecurrentActor(_Recurrent):
    def __init__(self, obs_dim, mem_width=128, cfe_width=128, pi_hidden=(128,), rng=None,
                 _parts=None):
        if _parts is None:
            _parts = (LstmCell(obs_dim, mem_width, rng),
                      DenseNet([obs_dim, cfe_width], ["relu"], rng),
                      _mlp(mem_width + cfe_width, pi_hidden, "tanh", rng))
        super().__init__(*_parts)

    def forward(self, obs, hist=None):
        return self._forward(obs, hist)

    def forward_cache(self, obs, hist=None):
        return self._forward_cache(obs, hist)

    def backward(self, cache, da):
        grads, _ = self._backward(cache, da, need_dcurrent=False)
        return grads

    def copy(self):
        return RecurrentActor(None, _parts=(self.mem.copy(), self.cfe.copy(), self.pi.copy()))


class RecurrentCritic(_Recurrent):
    def __init__(self, obs_dim, mem_width=128, cfe_width=128, pi_hidden=(128,), rng=None,
                 _parts=None):
        if _parts is None:
            _parts = (LstmCell(obs_dim, mem_width, rng),
                      DenseNet([obs_dim + 1, cfe_width], ["relu"], rng),
                      _mlp(mem_width + cfe_width, pi_hidden, "linear", rng))
        super().__init__(*_parts)

    def forward(self, obs, action, hist=None):
        return self._forward(np.concatenate([obs, action[:, None]], axis=1), hist)

    def forward_cache(self, obs, action, hist=None):
        return self._forward_cache(np.concatenate([obs, action[:, None]], axis=1), hist)

    def backward(self, cache, dq, need_daction=False):
        grads, dcur = self._backward(cache, dq, need_dcurrent=need_daction)
        return grads, (dcur[:, -1] if need_daction else None)

    def copy(self):
        return RecurrentCritic(None, _parts=(self.mem.copy(), self.cfe.copy(), self.pi.copy()))


# -- agent ---------------------------------------------------------------------------------

class Td3Agent:
    """Twin-delayed actor-critic agent.

    ``kind`` selects the function approximators: ``"td3"`` (current observation
    only), ``"td3-fs"`` (current plus ``history_len`` previous observations,
    concatenated) or ``"lstm-td3"`` (history through an LSTM branch).
    """

    def __init__(self, obs_dim: int, hp: Hyperparams | None = None, kind: str = "td3",
                 rng: np.random.Generator | None = None):
        if kind not in AGENTS:
            raise ConfigurationError(f"unknown agent {kind!r}")
        self.hp = hp = hp or Hyperparams()
        self.kind = kind
        self.obs_dim = obs_dim
        rng = rng if rng is not None else np.random.default_rng()
        if kind == "lstm-td3":
            args = (obs_dim, hp.mem_width, hp.cfe_width, hp.pi_hidden)
            self.actor = RecurrentActor(*args, rng=rng)
            self.critics = [RecurrentCritic(*args, rng=rng) for _ in range(2)]
        else:
            frames = hp.history_len + 1 if kind == "td3-fs" else 1
            self.actor = MlpActor(obs_dim, hp.hidden, frames, rng)
            self.critics = [MlpCritic(obs_dim, hp.hidden, frames, rng) for _ in range(2)]
        self.actor_target = self.actor.copy()
        self.critic_targets = [c.copy() for c in self.critics]
        self.actor_opt = Adam(self.actor.params, lr=hp.actor_lr)
        self.critic_opts = [Adam(c.params, lr=hp.critic_lr) for c in self.critics]
        self.n_updates = 0
        self.n_actor_updates = 0

    @property
    def uses_history(self) -> bool:
        return self.kind != "td3"

    # -- acting ------------------------------------------------------------------------
    def _check_obs(self, obs):
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape[-1] != self.obs_dim:
            raise ConfigurationError(f"observation width {obs.shape[-1]} != {self.obs_dim}")
        return obs

    def act(self, obs, history=None, explore: bool = False,
            rng: np.random.Generator | None = None) -> float:
        obs = self._check_obs(obs)[None]
        hist = None
        if self.uses_history:
            if history is None:
                history = np.zeros((self.hp.history_len, self.obs_dim))
            hist = np.asarray(history, dtype=np.float64)[None]
        a = float(self.actor.forward(obs, hist)[0])
        if explore:
            a += rng.normal(0.0, self.hp.expl_noise)
        return min(1.0, max(-1.0, a))

    def training_action(self, obs, history, step: int, rng: np.random.Generator) -> float:
        """Uniform random for the first ``start_steps`` steps, then noisy policy."""
        if step <= self.hp.start_steps:
            return float(rng.uniform(-1.0, 1.0))
        return self.act(obs, history, explore=True, rng=rng)

    # -- learning ----------------------------------------------------------------------
    def target_noise(self, n: int, rng: np.random.Generator) -> np.ndarray:
        c = self.hp.noise_clip
        return np.clip(rng.normal(0.0, self.hp.target_noise, size=n), -c, c)

    def targets(self, batch, noise: np.ndarray) -> np.ndarray:
        hp = self.hp
        a2 = np.clip(self.actor_target.forward(batch.next_obs, batch.next_hist) + noise, -1, 1)
        q1 = self.critic_targets[0].forward(batch.next_obs, a2, batch.next_hist)
        q2 = self.critic_targets[1].forward(batch.next_obs, a2, batch.next_hist)
        return batch.reward + hp.gamma * (1.0 - batch.done) * np.minimum(q1, q2)

    def update(self, buffer: ReplayBuffer, rng: np.random.Generator) -> dict:
        hp = self.hp
        batch = buffer.sample(hp.batch_size, rng, with_history=self.uses_history)
        return self.update_on_batch(batch, rng)

    def update_on_batch(self, batch, rng: np.random.Generator) -> dict:
        hp = self.hp
        n = batch.obs.shape[0]
        noise = self.target_noise(n, rng)
        y = self.targets(batch, noise)
        info = {"target_noise": noise}
        for j, (critic, opt) in enumerate(zip(self.critics, self.critic_opts)):
            q, cache = critic.forward_cache(batch.obs, batch.action, batch.hist)
            diff = q - y
            loss = float(np.mean(diff * diff))
            check_finite(np.array(loss), what="critic loss")
            grads, _ = critic.backward(cache, 2.0 * diff / n)
            opt.step(critic.params, grads)
            info[f"critic{j + 1}_loss"] = loss
        self.n_updates += 1
        info["actor_updated"] = False
        if self.n_updates % hp.policy_delay == 0:
            a, acache = self.actor.forward_cache(batch.obs, batch.hist)
            q, ccache = self.critics[0].forward_cache(batch.obs, a, batch.hist)
            actor_loss = -float(np.mean(q))
            check_finite(np.array(actor_loss), what="actor loss")
            _, da = self.critics[0].backward(ccache, np.full(n, -1.0 / n), need_daction=True)
            self.actor_opt.step(self.actor.params, self.actor.backward(acache, da))
            soft_update(self.actor_target.params, self.actor.params, hp.tau)
            for tgt, src in zip(self.critic_targets, self.critics):
                soft_update(tgt.params, src.params, hp.tau)
            self.n_actor_updates += 1
            info["actor_updated"] = True
            info["actor_loss"] = actor_loss
        return info

    # -- persistence ---------------------------------------------------------------------
    def _nets(self):
        return {"actor": self.actor, "actor_target": self.actor_target,
                "critic1": self.critics[0], "critic2": self.critics[1],
                "critic1_target": self.critic_targets[0], "critic2_target": self.critic_targets[1]}

    def _opts(self):
        return {"actor_opt": self.actor_opt, "critic1_opt": self.critic_opts[0],
                "critic2_opt": self.critic_opts[1]}

    def state_dict(self) -> dict:
        out = {"n_updates": np.array(self.n_updates),
               "n_actor_updates": np.array(self.n_actor_updates)}
        for name, net in self._nets().items():
            for k, p in enumerate(net.params):
                out[f"{name}.{k}"] = p.copy()
        for name, opt in self._opts().items():
            st = opt.state()
            out[f"{name}.t"] = np.array(st["t"])
            for k, (m, v) in enumerate(zip(st["m"], st["v"])):
                out[f"{name}.m{k}"] = m
                out[f"{name}.v{k}"] = v
        return out

    def load_state_dict(self, state: dict) -> None:
        self.n_updates = int(state["n_updates"])
        self.n_actor_updates = int(state["n_actor_updates"])
        for name, net in self._nets().items():
            for k, p in enumerate(net.params):
                if p.shape != state[f"{name}.{k}"].shape:
                    raise ConfigurationError(f"checkpoint shape mismatch for {name}")
                p[...] = state[f"{name}.{k}"]
        for name, opt in self._opts().items():
            n = len(opt.m)
            opt.load_state({"t": state[f"{name}.t"],
                            "m": [state[f"{name}.m{k}"] for k in range(n)],
                            "v": [state[f"{name}.v{k}"] for k in range(n)]})
