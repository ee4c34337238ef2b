"""DDPG agent that assigns a stay priority to every access, and the online
loop that couples it with the bin cache.

Per access ``t``: build the state, act, place the block with that priority,
then once access ``t+1`` is seen, reward the transition with +1 if the
block of ``t+1`` was resident and -1 otherwise. Training fires for
``t mod 100`` in 95..99.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from . import nn
from .bincache import AccessOutcome, BinCache, CacheConfig
from .features import NUM_FEATURES, FeatureConfig, FeatureState
from .trace import AccessRecord

log = logging.getLogger(__name__)

GAMMAS = (0.925, 0.950, 0.970, 0.990)


@dataclass(frozen=True)
class AgentConfig:
    actor_lr: float = 0.02
    critic_lr: float = 0.005
    tau: float = 0.002
    batch_size: int = 64
    gamma: float = 0.95
    replay_capacity: int = 100_000
    ou_theta: float = 0.15
    ou_sigma: float = 0.2
    ou_sigma_final: float = 0.02
    ou_decay_steps: int = 200_000
    ou_mu: float = 0.0
    train_period: int = 100
    train_first: int = 95
    train_last: int = 99
    conv_filters: int = 4
    conv_width: int = 20
    fc1: int = 64
    fc2: int = 32
    leaky_alpha: float = 0.1
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    features: int = NUM_FEATURES
    history: int = 100

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 for batch statistics")
        if self.history < self.conv_width:
            raise ValueError("history must be at least the conv width")

    @property
    def flat_width(self) -> int:
        return self.conv_filters * self.features * (self.history - self.conv_width + 1)


def should_train(t: int, cfg: AgentConfig | None = None) -> bool:
    cfg = cfg or _DEFAULT
    return cfg.train_first <= t % cfg.train_period <= cfg.train_last


def reward_of(outcome: AccessOutcome | bool) -> float:
    hit = outcome if isinstance(outcome, bool) else outcome.hit
    return 1.0 if hit else -1.0


class Transition(NamedTuple):
    state: np.ndarray
    action: float
    reward: float
    next_state: np.ndarray


class ReplayBuffer:
    """Ring of transitions; storage grows on demand up to ``capacity``."""

    def __init__(self, capacity: int, state_shape: tuple[int, int], seed: int | np.random.Generator = 0):
        if capacity < 1:
            raise ValueError("replay capacity must be >= 1")
        self.capacity = capacity
        self.state_shape = tuple(state_shape)
        self.rng = np.random.default_rng(seed)
        self._alloc = 0
        self.states = np.zeros((0,) + self.state_shape)
        self.next_states = np.zeros((0,) + self.state_shape)
        self.actions = np.zeros(0)
        self.rewards = np.zeros(0)
        self.size = 0
        self._next = 0

    def __len__(self) -> int:
        return self.size

    def _grow(self) -> None:
        new = min(self.capacity, max(1024, 2 * self._alloc))
        pad = new - self._alloc
        self.states = np.concatenate((self.states, np.zeros((pad,) + self.state_shape)))
        self.next_states = np.concatenate((self.next_states, np.zeros((pad,) + self.state_shape)))
        self.actions = np.concatenate((self.actions, np.zeros(pad)))
        self.rewards = np.concatenate((self.rewards, np.zeros(pad)))
        self._alloc = new

    def store(self, tr: Transition) -> None:
        i = self._next
        if i >= self._alloc:
            self._grow()
        self.states[i] = tr.state
        self.actions[i] = tr.action
        self.rewards[i] = tr.reward
        self.next_states[i] = tr.next_state
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def ordered(self) -> list[Transition]:
        """Stored transitions oldest first."""
        start = self._next if self.size == self.capacity else 0
        idx = [(start + j) % self.capacity for j in range(self.size)]
        return [Transition(self.states[i].copy(), float(self.actions[i]),
                           float(self.rewards[i]), self.next_states[i].copy()) for i in idx]

    def sample(self, k: int):
        if self.size < k:
            raise ValueError(f"buffer holds {self.size} < {k} transitions")
        idx = self.rng.integers(0, self.size, size=k)
        return self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx]


class OUNoise:
    """Ornstein-Uhlenbeck process with a linearly decaying volatility."""

    def __init__(self, theta: float = 0.15, sigma: float = 0.2, mu: float = 0.0,
                 sigma_final: float | None = None, decay_steps: int = 0,
                 seed: int | np.random.Generator = 0):
        self.theta, self.sigma0, self.mu = theta, sigma, mu
        self.sigma_final = sigma if sigma_final is None else sigma_final
        self.decay_steps = decay_steps
        self.rng = np.random.default_rng(seed)
        self.x = mu
        self.steps = 0

    @property
    def sigma(self) -> float:
        if self.decay_steps <= 0 or self.steps >= self.decay_steps:
            return self.sigma_final if self.decay_steps > 0 else self.sigma0
        frac = self.steps / self.decay_steps
        return self.sigma0 + (self.sigma_final - self.sigma0) * frac

    def sample(self) -> float:
        sigma = self.sigma
        self.x += self.theta * (self.mu - self.x) + sigma * self.rng.standard_normal()
        self.steps += 1
        return self.x


def build_actor(cfg: AgentConfig, rng: np.random.Generator) -> nn.Sequential:
    # layers feeding batch norm carry no bias; the norm's shift replaces it
    return nn.Sequential([
        nn.Conv1xK(cfg.conv_filters, cfg.conv_width, rng, bias=False),
        nn.BatchNorm(cfg.conv_filters, cfg.bn_momentum, cfg.bn_eps),
        nn.Tanh(),
        nn.Flatten(),
        nn.Linear(cfg.flat_width, cfg.fc1, rng, bias=False),
        nn.BatchNorm(cfg.fc1, cfg.bn_momentum, cfg.bn_eps),
        nn.LeakyReLU(cfg.leaky_alpha),
        nn.Linear(cfg.fc1, cfg.fc2, rng, bias=False),
        nn.BatchNorm(cfg.fc2, cfg.bn_momentum, cfg.bn_eps),
        nn.LeakyReLU(cfg.leaky_alpha),
        nn.Linear(cfg.fc2, 1, rng),
        nn.Tanh(),
    ])


class Critic(nn.Layer):
    """Q(s, a): the action joins the activations after the first dense layer."""
    kind = "critic"

    def __init__(self, cfg: AgentConfig, rng: np.random.Generator):
        self.trunk = nn.Sequential([
            nn.Conv1xK(cfg.conv_filters, cfg.conv_width, rng, bias=False),
            nn.BatchNorm(cfg.conv_filters, cfg.bn_momentum, cfg.bn_eps),
            nn.Tanh(),
            nn.Flatten(),
            nn.Linear(cfg.flat_width, cfg.fc1, rng, bias=False),
            nn.BatchNorm(cfg.fc1, cfg.bn_momentum, cfg.bn_eps),
            nn.LeakyReLU(cfg.leaky_alpha),
        ])
        self.head = nn.Sequential([
            nn.Linear(cfg.fc1 + 1, cfg.fc2, rng, bias=False),
            nn.BatchNorm(cfg.fc2, cfg.bn_momentum, cfg.bn_eps),
            nn.LeakyReLU(cfg.leaky_alpha),
            nn.Linear(cfg.fc2, 1, rng),
        ])

    def params(self):
        return self.trunk.params() + self.head.params()

    def buffers(self):
        out = {f"trunk.{k}": v for k, v in self.trunk.buffers().items()}
        out.update({f"head.{k}": v for k, v in self.head.buffers().items()})
        return out

    def spec(self):
        return {"kind": self.kind, "trunk": self.trunk.spec(), "head": self.head.spec()}

    def forward(self, states, actions, train=False, update_stats=True):
        z = self.trunk.forward(states, train, update_stats)
        za = np.concatenate((z, np.asarray(actions, dtype=np.float64).reshape(-1, 1)), axis=1)
        return self.head.forward(za, train, update_stats)[:, 0]

    def backward(self, dq, through_trunk=True):
        """Backprop ``dL/dQ``; returns ``dL/da``. Skipping the trunk leaves
        its gradients untouched."""
        dza = self.head.backward(np.asarray(dq, dtype=np.float64).reshape(-1, 1))
        if through_trunk:
            self.trunk.backward(dza[:, :-1], need_input_grad=False)
        return dza[:, -1]

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()


class TrainReport(NamedTuple):
    critic_loss: float
    actor_objective: float
    action_mean: float


class DDPGAgent:
    def __init__(self, cfg: AgentConfig | None = None, seed: int = 0):
        self.cfg = cfg = cfg or AgentConfig()
        self.seed = seed
        init_ss, noise_ss, replay_ss = np.random.SeedSequence(seed).spawn(3)
        init_rng = np.random.default_rng(init_ss)
        self.actor = build_actor(cfg, init_rng)
        self.critic = Critic(cfg, init_rng)
        self.actor_target = build_actor(cfg, init_rng)
        self.critic_target = Critic(cfg, init_rng)
        nn.copy_into(self.actor_target, self.actor)
        nn.copy_into(self.critic_target, self.critic)
        self.actor_opt = nn.Adam(self.actor.params(), lr=cfg.actor_lr)
        self.critic_opt = nn.Adam(self.critic.params(), lr=cfg.critic_lr)
        self.noise = OUNoise(cfg.ou_theta, cfg.ou_sigma, cfg.ou_mu, cfg.ou_sigma_final,
                             cfg.ou_decay_steps, np.random.default_rng(noise_ss))
        self.replay = ReplayBuffer(cfg.replay_capacity, (cfg.features, cfg.history),
                                   np.random.default_rng(replay_ss))
        self.train_steps = 0
        self.skipped_steps = 0
        self.log_rows: list[tuple[int, float, float, int]] = []

    def act(self, state: np.ndarray, explore: bool = True) -> float:
        a = float(self.actor.forward(state[None], train=False)[0, 0])
        if explore:
            a = min(1.0, max(-1.0, a + self.noise.sample()))
        return a

    def store(self, state, action, reward, next_state) -> None:
        self.replay.store(Transition(state, float(action), float(reward), next_state))

    def td_targets(self, rewards: np.ndarray, next_states: np.ndarray) -> np.ndarray:
        """``r + gamma * Q'(s', mu'(s'))``; target nets use batch statistics
        without touching their running averages."""
        a2 = self.actor_target.forward(next_states, train=True, update_stats=False)[:, 0]
        q2 = self.critic_target.forward(next_states, a2, train=True, update_stats=False)
        return rewards + self.cfg.gamma * q2

    def train_step(self, t: int | None = None) -> TrainReport | None:
        cfg = self.cfg
        K = cfg.batch_size
        if len(self.replay) < K:
            self.skipped_steps += 1
            log.debug("train step skipped: %d transitions < batch %d", len(self.replay), K)
            return None
        s, a, r, s2 = self.replay.sample(K)
        y = self.td_targets(r, s2)

        self.critic.zero_grad()
        q = self.critic.forward(s, a, train=True)
        err = q - y
        loss = float(np.mean(err ** 2))
        if not np.isfinite(loss):
            raise nn.NonFiniteError("critic loss is not finite")
        self.critic.backward(2.0 * err / K)
        self.critic_opt.step()

        self.actor.zero_grad()
        mu = self.actor.forward(s, train=True)[:, 0]
        q_mu = self.critic.forward(s, mu, train=True, update_stats=False)
        dq_da = self.critic.backward(np.full(K, -1.0 / K), through_trunk=False)
        self.actor.backward(dq_da.reshape(-1, 1), need_input_grad=False)
        self.actor_opt.step()
        self.critic.zero_grad()

        nn.soft_update(self.actor_target, self.actor, cfg.tau)
        nn.soft_update(self.critic_target, self.critic, cfg.tau)
        self.train_steps += 1
        rep = TrainReport(loss, float(q_mu.mean()), float(mu.mean()))
        if t is not None:
            self.log_rows.append((t, rep.critic_loss, rep.action_mean, len(self.replay)))
        return rep

    def networks(self) -> dict[str, nn.Layer]:
        return {"actor": self.actor, "critic": self.critic,
                "actor_target": self.actor_target, "critic_target": self.critic_target}

    def save(self, path: str | Path) -> None:
        extra = {"config": asdict(self.cfg), "seed": self.seed,
                 "train_steps": self.train_steps, "skipped_steps": self.skipped_steps,
                 "noise": {"x": self.noise.x, "steps": self.noise.steps,
                           "rng": self.noise.rng.bit_generator.state},
                 "replay_rng": self.replay.rng.bit_generator.state}
        nn.save_checkpoint(path, self.networks(),
                           {"actor": self.actor_opt, "critic": self.critic_opt}, extra)

    def load(self, path: str | Path) -> None:
        extra = nn.load_checkpoint(path, self.networks(),
                                   {"actor": self.actor_opt, "critic": self.critic_opt})
        self.train_steps = extra["train_steps"]
        self.skipped_steps = extra["skipped_steps"]
        self.noise.x = extra["noise"]["x"]
        self.noise.steps = extra["noise"]["steps"]
        self.noise.rng.bit_generator.state = extra["noise"]["rng"]
        self.replay.rng.bit_generator.state = extra["replay_rng"]

    def write_train_log(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "critic_loss", "action_mean", "buffer_size"])
            w.writerows(self.log_rows)


_DEFAULT = AgentConfig()


@dataclass
class OnlineLoop:
    """Drives one agent over one trace through a bin cache.

    Use ``step`` per access and ``finish`` after the last one.
    """
    agent: DDPGAgent
    cache: BinCache
    features: FeatureState
    explore: bool = True
    learn: bool = True
    _pending: tuple[np.ndarray, float, int] | None = field(default=None, repr=False)

    def step(self, rec: AccessRecord) -> AccessOutcome:
        fs, cache = self.features, self.cache
        fs.observe(rec)
        s = fs.state()
        if self._pending is not None:
            s_prev, a_prev, t_prev = self._pending
            r = reward_of(cache.contains(rec.block_id))
            if self.learn:
                self.agent.store(s_prev, a_prev, r, s)
                if should_train(t_prev, self.agent.cfg):
                    self.agent.train_step(t_prev)
        a = self.agent.act(s, self.explore)
        fs.set_priority(a)
        outcome = cache.access(rec.block_id, a)
        fs.record_outcome(rec.block_id, outcome)
        self._pending = (s, a, rec.seq)
        return outcome

    def finish(self) -> None:
        """Train for the final access if its index falls in a train window;
        the last transition has no successor and is not stored."""
        if self._pending is not None and self.learn:
            t_last = self._pending[2]
            if should_train(t_last, self.agent.cfg):
                self.agent.train_step(t_last)
        self._pending = None


def run_episode(agent: DDPGAgent, cache: BinCache, features: FeatureState,
                trace: Iterable[AccessRecord], explore: bool = True) -> Iterator[AccessOutcome]:
    loop = OnlineLoop(agent, cache, features, explore)
    for rec in trace:
        yield loop.step(rec)
    loop.finish()


class PhoebePolicy:
    """The learned policy behind the uniform ``request`` interface."""
    name = "phoebe"

    def __init__(self, capacity: int, agent_cfg: AgentConfig | None = None, seed: int = 0,
                 num_bins: int = 10, feature_cfg: FeatureConfig | None = None,
                 explore: bool = True, agent: DDPGAgent | None = None):
        self.capacity = capacity
        self.agent = agent or DDPGAgent(agent_cfg, seed)
        self.cache = BinCache(CacheConfig(capacity, num_bins))
        fcfg = feature_cfg or FeatureConfig(history=self.agent.cfg.history)
        if fcfg.history != self.agent.cfg.history:
            raise ValueError(f"feature history {fcfg.history} != agent history {self.agent.cfg.history}")
        self.loop = OnlineLoop(self.agent, self.cache, FeatureState(fcfg), explore)
        self._t = 0

    def request(self, block_id: int) -> AccessOutcome:
        out = self.loop.step(AccessRecord(self._t, block_id))
        self._t += 1
        return out

    def finish(self) -> None:
        self.loop.finish()
