"""DQN rate controller and fixed-rate baselines, numpy only.

The value network is a small tanh MLP with a hand-written backward pass and
an in-repo Adam optimiser, so gradients can be checked against finite
differences directly.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .env import EnvState, RateControlEnv, RateLevel
from .seeding import rng_for

CHECKPOINT_MAGIC = b"LRQN"
CHECKPOINT_VERSION = 1


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass(frozen=True)
class AgentConfig:
    hidden_layers: tuple[int, ...] = (64, 64)
    learning_rate: float = 1e-3
    discount: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 5000
    replay_capacity: int = 50_000
    batch_size: int = 64
    target_sync_period: int = 500
    train_episodes: int = 400
    reward_scale: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.discount <= 1:
            raise ValueError("discount must be in (0, 1]")
        if not 0 <= self.epsilon_end <= self.epsilon_start <= 1:
            raise ValueError("need 0 <= epsilon_end <= epsilon_start <= 1")
        for name in ("epsilon_decay_steps", "replay_capacity", "batch_size",
                     "target_sync_period", "train_episodes"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if any(w <= 0 for w in self.hidden_layers):
            raise ValueError("hidden layer widths must be positive")
        if self.learning_rate < 0 or self.reward_scale <= 0:
            raise ValueError("learning_rate must be >= 0 and reward_scale > 0")

    def epsilon_at(self, step: int) -> float:
        frac = min(1.0, step / self.epsilon_decay_steps)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


# -- state features ---------------------------------------------------------

@dataclass(frozen=True)
class StateBounds:
    snr_min: float
    snr_max: float
    q_max: float
    num_actions: int

    @classmethod
    def for_env(cls, env: RateControlEnv) -> "StateBounds":
        snrs = env.profile.snrs
        return cls(float(snrs.min()), float(snrs.max()), float(env.config.q_max),
                   env.num_actions)

    @property
    def dim(self) -> int:
        return 3 + self.num_actions


def normalize_state(s: EnvState, bounds: StateBounds) -> np.ndarray:
    """Map a state onto [0, 1]^(3 + K): snr, elevation, queue, one-hot previous rate."""
    span = bounds.snr_max - bounds.snr_min
    snr = (s.snr - bounds.snr_min) / span if span > 0 else 0.5
    out = np.zeros(bounds.dim)
    out[0] = snr
    out[1] = s.elevation / 90.0
    out[2] = s.queue_len / bounds.q_max
    np.clip(out[:3], 0.0, 1.0, out=out[:3])
    out[3 + s.prev_rate] = 1.0
    return out


# -- network ----------------------------------------------------------------

class QNetwork:
    """Fully connected tanh network: input -> hidden... -> one Q-value per action."""

    def __init__(self, sizes, rng: np.random.Generator | None = None):
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2:
            raise ValueError("need at least input and output sizes")
        rng = rng or np.random.default_rng(0)
        self.weights, self.biases = [], []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def forward(self, x: np.ndarray, keep: bool = False):
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.tanh(h)
            acts.append(h)
        return (h, acts) if keep else h

    __call__ = forward

    def backward(self, acts, grad_out: np.ndarray) -> list[np.ndarray]:
        """Gradients of a loss w.r.t. params (same order as ``params``)."""
        grads = []
        g = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            grads.append(g.sum(axis=0))
            grads.append(acts[i].T @ g)
            if i > 0:
                g = (g @ self.weights[i].T) * (1.0 - acts[i] ** 2)
        grads.reverse()
        # reversed pairs come out as (W, b) per layer
        return grads

    def copy(self) -> "QNetwork":
        new = QNetwork.__new__(QNetwork)
        new.sizes = self.sizes
        new.weights = [w.copy() for w in self.weights]
        new.biases = [b.copy() for b in self.biases]
        return new

    def load_from(self, other: "QNetwork") -> None:
        for dst, src in zip(self.params, other.params):
            dst[...] = src

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params)

    def save(self, path: str | Path) -> None:
        """Write the little-endian checkpoint container.

        Layout: magic ``LRQN``, u32 version, u32 layer count, per layer u32
        (fan_in, fan_out), then per layer fan_in*fan_out row-major float64
        weights followed by fan_out float64 biases.
        """
        with open(path, "wb") as fh:
            fh.write(save_bytes(self))

    @classmethod
    def load(cls, path: str | Path) -> "QNetwork":
        return load_bytes(Path(path).read_bytes())


def save_bytes(net: QNetwork) -> bytes:
    parts = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(net.weights))]
    for w in net.weights:
        parts.append(struct.pack("<II", *w.shape))
    for w, b in zip(net.weights, net.biases):
        parts.append(w.astype("<f8").tobytes(order="C"))
        parts.append(b.astype("<f8").tobytes())
    return b"".join(parts)


def load_bytes(data: bytes) -> QNetwork:
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a QNetwork checkpoint (bad magic)")
    version, n = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 12
    shapes = []
    for _ in range(n):
        shapes.append(struct.unpack_from("<II", data, off))
        off += 8
    sizes = [shapes[0][0]] + [s[1] for s in shapes]
    net = QNetwork.__new__(QNetwork)
    net.sizes = tuple(sizes)
    net.weights, net.biases = [], []
    for fi, fo in shapes:
        w = np.frombuffer(data, dtype="<f8", count=fi * fo, offset=off).reshape(fi, fo)
        off += 8 * fi * fo
        b = np.frombuffer(data, dtype="<f8", count=fo, offset=off)
        off += 8 * fo
        net.weights.append(w.astype(np.float64))
        net.biases.append(b.astype(np.float64))
    if off != len(data):
        raise ValueError("trailing bytes in checkpoint")
    return net


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# -- replay -----------------------------------------------------------------

class ReplayBuffer:
    """Bounded FIFO of transitions stored in preallocated arrays."""

    def __init__(self, capacity: int, state_dim: int):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity, dtype=bool)
        self.pos = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def push(self, state, action, reward, next_state, done) -> None:
        i = self.pos
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.dones[i] = done
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def ordered(self) -> np.ndarray:
        """Storage indices from oldest to newest."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self.pos) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.integers(0, self.size, size=batch_size)
        return (self.states[idx], self.actions[idx], self.rewards[idx],
                self.next_states[idx], self.dones[idx])


# -- learning ---------------------------------------------------------------

def select_action(net: QNetwork, features: np.ndarray, epsilon: float,
                  rng: np.random.Generator) -> int:
    """Epsilon-greedy; greedy ties go to the lowest index."""
    k = net.sizes[-1]
    if rng.random() < epsilon:
        return int(rng.integers(k))
    return int(np.argmax(net(features)))


def td_loss_and_grads(net: QNetwork, target_net: QNetwork, batch, discount: float):
    states, actions, rewards, next_states, dones = batch
    q_next = target_net(next_states).max(axis=1)
    targets = rewards + discount * q_next * (~dones)
    q, acts = net.forward(states, keep=True)
    rows = np.arange(len(actions))
    err = q[rows, actions] - targets
    loss = float(np.mean(err ** 2))
    grad_q = np.zeros_like(q)
    grad_q[rows, actions] = 2.0 * err / len(actions)
    return loss, net.backward(acts, grad_q)


def td_update(net: QNetwork, target_net: QNetwork, batch, config: AgentConfig,
              optimizer: Adam) -> float:
    """One gradient step on the mean squared TD error; returns the pre-step loss."""
    loss, grads = td_loss_and_grads(net, target_net, batch, config.discount)
    if not np.isfinite(loss):
        raise NonFiniteLossError(f"TD loss became non-finite ({loss})")
    optimizer.step(grads)
    if not net.all_finite():
        raise NonFiniteLossError("network parameters became non-finite")
    return loss


@dataclass
class CurvePoint:
    episode: int
    ret: float
    qualified: int
    epsilon: float


@dataclass
class DQNAgent:
    config: AgentConfig
    state_dim: int
    num_actions: int
    online: QNetwork = field(init=False)
    target: QNetwork = field(init=False)

    def __post_init__(self) -> None:
        seed = self.config.seed
        sizes = (self.state_dim, *self.config.hidden_layers, self.num_actions)
        self.online = QNetwork(sizes, rng_for(seed, "init"))
        self.target = self.online.copy()
        self.optimizer = Adam(self.online.params, lr=self.config.learning_rate)
        self.replay = ReplayBuffer(self.config.replay_capacity, self.state_dim)
        self.explore_rng = rng_for(seed, "exploration")
        self.replay_rng = rng_for(seed, "replay")
        self.steps = 0
        self.losses: list[float] = []

    def act(self, features: np.ndarray) -> int:
        return select_action(self.online, features, self.config.epsilon_at(self.steps),
                             self.explore_rng)

    def observe(self, state, action, reward, next_state, done) -> None:
        cfg = self.config
        self.replay.push(state, action, reward * cfg.reward_scale, next_state, done)
        self.steps += 1
        if len(self.replay) >= cfg.batch_size:
            batch = self.replay.sample(cfg.batch_size, self.replay_rng)
            self.losses.append(td_update(self.online, self.target, batch, cfg, self.optimizer))
        if self.steps % cfg.target_sync_period == 0:
            self.target.load_from(self.online)


def train(env_factory: Callable[[], RateControlEnv], config: AgentConfig,
          bounds: StateBounds | None = None) -> tuple[QNetwork, list[CurvePoint]]:
    """Train a DQN over ``config.train_episodes`` full overpasses."""
    env = env_factory()
    bounds = bounds or StateBounds.for_env(env)
    agent = DQNAgent(config, bounds.dim, env.num_actions)
    curve = []
    for ep in range(config.train_episodes):
        state = env.reset()
        feats = normalize_state(state, bounds)
        total, qualified = 0.0, 0
        while not env.done:
            a = agent.act(feats)
            out = env.step(a)
            nxt = normalize_state(out.next_state, bounds)
            agent.observe(feats, a, out.reward, nxt, out.done)
            feats = nxt
            total += out.reward
            qualified += out.qualified
        curve.append(CurvePoint(ep, total, qualified, config.epsilon_at(agent.steps)))
    return agent.online, curve


# -- policies ---------------------------------------------------------------

BASELINES = {"min_rate": 32, "mid_rate": 96, "max_rate": 192}


def fixed_policy(level: RateLevel | int) -> Callable[[EnvState], int]:
    index = level.index if isinstance(level, RateLevel) else int(level)

    def policy(state: EnvState) -> int:
        return index

    policy.index = index
    return policy


def baseline_policy(name: str, levels) -> Callable[[EnvState], int]:
    want = BASELINES[name]
    for lv in levels:
        if lv.channel_count == want:
            return fixed_policy(lv)
    raise ValueError(f"baseline {name} needs C={want}, not in the action set")


class GreedyPolicy:
    def __init__(self, net: QNetwork, bounds: StateBounds):
        self.net = net
        self.bounds = bounds

    def __call__(self, state: EnvState) -> int:
        return int(np.argmax(self.net(normalize_state(state, self.bounds))))
