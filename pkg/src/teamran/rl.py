"""Deep Q-learning machinery shared by both xAPPs.

A small fully connected network with hand-written analytic gradients, a
bounded FIFO replay memory, epsilon-greedy selection and the one-step
semi-gradient TD update. The bootstrap target uses the same parameters as
the online value by default; an optional periodically-synced target
network is config-gated for stability experiments.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_VERSION = "qnet-1"


class TrainingDiverged(RuntimeError):
    """Raised when a training step produces a non-finite loss."""


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    discount: float = 0.2
    batch_size: int = 32
    epsilon_initial: float = 0.3
    epsilon_final: float = 0.01
    epsilon_decay_slots: int = 10000
    replay_capacity: int = 10000
    train_every: int = 1
    warmup: int = 500
    use_target_network: bool = False
    target_sync_every: int = 200
    optimizer: str = "sgd"  # "sgd" or "adam"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must be in [0, 1)")
        if not 0.0 <= self.epsilon_final <= self.epsilon_initial <= 1.0:
            raise ValueError("need 0 <= epsilon_final <= epsilon_initial <= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


class QNetwork:
    """Four-layer MLP (input, two ReLU hidden layers, linear output)."""

    def __init__(self, layer_sizes, rng: np.random.Generator):
        layer_sizes = [int(s) for s in layer_sizes]
        if len(layer_sizes) != 4:
            raise ValueError("layer_sizes must name 4 layers (in, h1, h2, out)")
        if min(layer_sizes) < 1:
            raise ValueError("all layer sizes must be >= 1")
        self.layer_sizes = layer_sizes
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            self.biases.append(np.zeros(fan_out))

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]

    def forward_batch(self, states: np.ndarray) -> np.ndarray:
        """Q-values for a batch of states, shape [batch, n_actions]."""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if states.shape[1] != self.input_size:
            raise ValueError(
                f"state dim {states.shape[1]} != input size {self.input_size}"
            )
        a = states
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            a = z if i == last else np.maximum(z, 0.0)
        return a

    def forward(self, state: np.ndarray) -> np.ndarray:
        """Q-values for a single state vector."""
        return self.forward_batch(np.asarray(state)[None, :])[0]

    def _forward_cached(self, states: np.ndarray):
        activations = [states]
        a = states
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            a = z if i == last else np.maximum(z, 0.0)
            activations.append(a)
        return activations

    def backprop(self, activations, d_out: np.ndarray):
        """Gradients w.r.t. all parameters given d(objective)/d(output)."""
        grads_w, grads_b = [], []
        delta = d_out
        for i in reversed(range(len(self.weights))):
            grads_w.append(delta.T @ activations[i])
            grads_b.append(delta.sum(axis=0))
            if i > 0:
                delta = (delta @ self.weights[i]) * (activations[i] > 0)
        return grads_w[::-1], grads_b[::-1]

    def copy(self) -> "QNetwork":
        clone = QNetwork.__new__(QNetwork)
        clone.layer_sizes = list(self.layer_sizes)
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def copy_from(self, other: "QNetwork") -> None:
        if other.layer_sizes != self.layer_sizes:
            raise ValueError("layer size mismatch")
        self.weights = [w.copy() for w in other.weights]
        self.biases = [b.copy() for b in other.biases]

    def save(self, path) -> None:
        """Write a versioned checkpoint (header with sizes, then arrays)."""
        arrays = {
            "version": np.array(CHECKPOINT_VERSION),
            "layer_sizes": np.array(self.layer_sizes, dtype=np.int64),
        }
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"w{i}"] = w
            arrays[f"b{i}"] = b
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path, expected_layer_sizes=None) -> "QNetwork":
        """Load a checkpoint; rejects version or layer-size mismatches."""
        with np.load(path, allow_pickle=False) as data:
            version = str(data["version"])
            if version != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {version!r}")
            sizes = [int(s) for s in data["layer_sizes"]]
            if expected_layer_sizes is not None and sizes != list(expected_layer_sizes):
                raise ValueError(
                    f"checkpoint layers {sizes} != expected {list(expected_layer_sizes)}"
                )
            net = cls.__new__(cls)
            net.layer_sizes = sizes
            net.weights, net.biases = [], []
            for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
                w, b = data[f"w{i}"], data[f"b{i}"]
                if w.shape != (fan_out, fan_in) or b.shape != (fan_out,):
                    raise ValueError(f"layer {i} arrays do not match the header")
                net.weights.append(w.astype(float))
                net.biases.append(b.astype(float))
        return net


@dataclass
class Experience:
    """One transition. next_mask restricts the bootstrap max, which lets a
    multi-head agent bootstrap within the head that produced the action."""

    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    next_mask: np.ndarray | None = None


class ReplayMemory:
    """Bounded FIFO of experiences with uniform sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.buffer: deque[Experience] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self.buffer)

    def push(self, e: Experience) -> None:
        self.buffer.append(e)

    def sample(self, rng: np.random.Generator, batch_size: int) -> list[Experience]:
        n = len(self.buffer)
        if n <= batch_size:
            return list(self.buffer)
        idx = rng.choice(n, size=batch_size, replace=False)
        return [self.buffer[i] for i in idx]


def push_and_sample(mem: ReplayMemory, e: Experience,
                    rng: np.random.Generator, batch_size: int) -> list[Experience]:
    mem.push(e)
    return mem.sample(rng, batch_size)


def td_target(reward: float, next_q: np.ndarray, discount: float,
              mask: np.ndarray | None = None) -> float:
    """One-step bootstrap target: reward + discount * max of next_q.

    The task is continuing, so there is no terminal branch. ``mask``
    restricts the max to valid actions.
    """
    next_q = np.asarray(next_q, dtype=float)
    if next_q.size == 0:
        raise ValueError("next_q must be nonempty")
    if mask is not None:
        next_q = next_q[np.asarray(mask, dtype=bool)]
        if next_q.size == 0:
            raise ValueError("mask leaves no valid action")
    return float(reward + discount * next_q.max())


def epsilon_at(slot: int, cfg: TrainConfig) -> float:
    """Linear exploration schedule, constant after the decay horizon."""
    if slot < 0:
        raise ValueError("slot must be >= 0")
    if cfg.epsilon_decay_slots <= 0 or slot >= cfg.epsilon_decay_slots:
        return cfg.epsilon_final
    frac = slot / cfg.epsilon_decay_slots
    return cfg.epsilon_initial + frac * (cfg.epsilon_final - cfg.epsilon_initial)


def select_action(net: QNetwork, state: np.ndarray, epsilon: float,
                  rng: np.random.Generator,
                  valid_mask: np.ndarray | None = None) -> int:
    """Epsilon-greedy action over the (optionally masked) action set.

    Exploitation is argmax with ties broken toward the lowest index.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    n_actions = net.output_size
    if valid_mask is None:
        valid = np.arange(n_actions)
    else:
        valid = np.flatnonzero(np.asarray(valid_mask, dtype=bool))
        if valid.size == 0:
            raise ValueError("valid_mask leaves no valid action")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.choice(valid))
    q = net.forward(state)
    return int(valid[np.argmax(q[valid])])


def _batch_arrays(batch: list[Experience]):
    states = np.stack([e.state for e in batch])
    actions = np.array([e.action for e in batch], dtype=np.int64)
    rewards = np.array([e.reward for e in batch], dtype=float)
    next_states = np.stack([e.next_state for e in batch])
    return states, actions, rewards, next_states


def _bootstrap_targets(batch, rewards, next_q, discount):
    targets = np.empty(len(batch))
    for i, e in enumerate(batch):
        row = next_q[i]
        if e.next_mask is not None:
            row = row[np.asarray(e.next_mask, dtype=bool)]
        targets[i] = rewards[i] + discount * row.max()
    return targets


def td_objective(net: QNetwork, batch: list[Experience], discount: float,
                 target_net: QNetwork | None = None) -> float:
    """Half mean squared TD error; the scalar whose gradient train_batch
    follows (the 1/2 makes the single-sample step match the plain
    delta * grad Q update)."""
    states, actions, rewards, next_states = _batch_arrays(batch)
    q = net.forward_batch(states)
    next_q = (target_net or net).forward_batch(next_states)
    targets = _bootstrap_targets(batch, rewards, next_q, discount)
    delta = q[np.arange(len(batch)), actions] - targets
    return float(0.5 * np.mean(delta ** 2))


def td_gradients(net: QNetwork, batch: list[Experience], discount: float,
                 target_net: QNetwork | None = None):
    """Analytic gradients of td_objective w.r.t. net parameters.

    Semi-gradient: the bootstrap target is treated as a constant, so no
    gradient flows through the next-state values.

    Returns (loss, grads_w, grads_b) where loss is the mean squared TD
    error (twice the objective).
    """
    states, actions, rewards, next_states = _batch_arrays(batch)
    activations = net._forward_cached(states)
    q = activations[-1]
    next_q = (target_net or net).forward_batch(next_states)
    targets = _bootstrap_targets(batch, rewards, next_q, discount)
    delta = q[np.arange(len(batch)), actions] - targets
    d_out = np.zeros_like(q)
    d_out[np.arange(len(batch)), actions] = delta / len(batch)
    grads_w, grads_b = net.backprop(activations, d_out)
    return float(np.mean(delta ** 2)), grads_w, grads_b


def train_batch(net: QNetwork, batch: list[Experience], cfg: TrainConfig,
                target_net: QNetwork | None = None) -> float:
    """One plain SGD semi-gradient step; returns the pre-step mean squared
    TD error. Raises TrainingDiverged on a non-finite loss."""
    if not batch:
        raise ValueError("batch must be nonempty")
    loss, grads_w, grads_b = td_gradients(net, batch, cfg.discount, target_net)
    if not np.isfinite(loss):
        raise TrainingDiverged(f"non-finite TD loss {loss}")
    for w, b, gw, gb in zip(net.weights, net.biases, grads_w, grads_b):
        w -= cfg.learning_rate * gw
        b -= cfg.learning_rate * gb
    return loss


class Trainer:
    """Owns the optimizer state (and optional target network) for one net."""

    def __init__(self, net: QNetwork, cfg: TrainConfig):
        self.net = net
        self.cfg = cfg
        self.steps = 0
        self.target = net.copy() if cfg.use_target_network else None
        if cfg.optimizer == "adam":
            self._m = [np.zeros_like(w) for w in net.weights] + \
                      [np.zeros_like(b) for b in net.biases]
            self._v = [np.zeros_like(p) for p in self._m]

    def train(self, batch: list[Experience]) -> float:
        cfg = self.cfg
        if cfg.optimizer == "sgd":
            loss = train_batch(self.net, batch, cfg, self.target)
        else:
            loss, grads_w, grads_b = td_gradients(self.net, batch,
                                                  cfg.discount, self.target)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite TD loss {loss}")
            self._adam_step(grads_w + grads_b)
        self.steps += 1
        if self.target is not None and self.steps % cfg.target_sync_every == 0:
            self.target.copy_from(self.net)
        return loss

    def _adam_step(self, grads, beta1=0.9, beta2=0.999, eps=1e-8):
        params = self.net.weights + self.net.biases
        t = self.steps + 1
        lr = self.cfg.learning_rate
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= beta1
            m += (1 - beta1) * g
            v *= beta2
            v += (1 - beta2) * g * g
            m_hat = m / (1 - beta1 ** t)
            v_hat = v / (1 - beta2 ** t)
            p -= lr * m_hat / (np.sqrt(v_hat) + eps)


class DqnAgent:
    """A Q-network plus its replay memory and trainer."""

    def __init__(self, layer_sizes, cfg: TrainConfig, rng: np.random.Generator):
        self.net = QNetwork(layer_sizes, rng)
        self.memory = ReplayMemory(cfg.replay_capacity)
        self.trainer = Trainer(self.net, cfg)
        self.cfg = cfg

    def select(self, state, epsilon, rng, valid_mask=None) -> int:
        return select_action(self.net, state, epsilon, rng, valid_mask)

    def remember(self, e: Experience) -> None:
        self.memory.push(e)

    def train_if_ready(self, rng: np.random.Generator) -> float | None:
        if len(self.memory) < self.cfg.warmup:
            return None
        batch = self.memory.sample(rng, self.cfg.batch_size)
        return self.trainer.train(batch)
