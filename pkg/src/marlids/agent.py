"""A single deep Q-learner, used for both first-level agents and the decider."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .nn import AdamConfig, DenseNetwork, _backprop, _forward_layers, adam_step, forward
from .replay import Experience, ReplayBuffer


@dataclass(frozen=True)
class EpsilonSchedule:
    initial: float = 1.0
    decay_per_episode: float = 0.01
    floor: float = 0.0

    def __post_init__(self):
        if not 0 <= self.floor <= self.initial <= 1:
            raise ValidationError("need 0 <= floor <= initial <= 1 for epsilon")
        if not self.decay_per_episode > 0:
            raise ValidationError(f"epsilon decay must be > 0, got {self.decay_per_episode}")

    def value(self, episodes: int) -> float:
        return max(self.floor, self.initial - episodes * self.decay_per_episode)


class DqnAgent:
    """Epsilon-greedy Q-learner over a dense network and a replay buffer.

    Targets come from the live network (no separate target network):
    ``reward + gamma * max_a Q(next_state, a)``.
    """

    def __init__(self, network: DenseNetwork, action_arity: int, *, gamma: float = 0.01,
                 epsilon: EpsilonSchedule = EpsilonSchedule(), buffer_capacity: int = 10_000_000,
                 batch_size: int = 1_000_000, adam: AdamConfig = AdamConfig(), seed=None,
                 name: str = ""):
        if network.output_dim != action_arity:
            raise ValidationError(
                f"network emits {network.output_dim} values but action arity is {action_arity}")
        if not 0 <= gamma <= 1:
            raise ValidationError(f"gamma must lie in [0, 1], got {gamma}")
        if int(batch_size) <= 0:
            raise ValidationError(f"batch_size must be positive, got {batch_size}")
        self.network = network
        self.action_arity = int(action_arity)
        self.gamma = float(gamma)
        self.schedule = epsilon
        self.episodes_done = 0
        self.batch_size = int(batch_size)
        self.adam = adam
        self.name = name
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        explore_seq, buffer_seq = ss.spawn(2)
        self.rng = np.random.default_rng(explore_seq)
        self.buffer = ReplayBuffer(buffer_capacity, network.input_dim, seed=buffer_seq,
                                   dtype=network.dtype)

    @property
    def epsilon(self) -> float:
        return self.schedule.value(self.episodes_done)

    @epsilon.setter
    def epsilon(self, value: float):
        if not 0 <= value <= 1:
            raise ValidationError(f"epsilon must lie in [0, 1], got {value}")
        self.schedule = EpsilonSchedule(value, self.schedule.decay_per_episode,
                                        min(self.schedule.floor, value))
        self.episodes_done = 0

    @property
    def epsilon_decay(self) -> float:
        return self.schedule.decay_per_episode

    def decay_epsilon(self) -> "DqnAgent":
        """Advance the schedule by one episode; epsilon never drops below its floor."""
        self.episodes_done += 1
        return self

    def q_values(self, state) -> np.ndarray:
        return forward(self.network, state)

    def select_action(self, state) -> int:
        q = self.q_values(state)
        if q.ndim != 1:
            raise ValidationError("select_action takes a single state vector")
        return self._choose(q)

    def _choose(self, q: np.ndarray) -> int:
        if self.rng.random() < self.epsilon:
            return int(self.rng.integers(self.action_arity))
        return int(np.argmax(q))

    def act(self, state: np.ndarray) -> int:
        """select_action without input validation; the state must be clean."""
        eps = self.epsilon
        if eps > 0 and self.rng.random() < eps:
            return int(self.rng.integers(self.action_arity))
        return int(np.argmax(_forward_layers(self.network, state)[-1]))

    def compute_target(self, reward: float, next_state) -> float:
        if self.gamma == 0:
            forward(self.network, next_state)  # still validates the shape
            return float(reward)
        return float(reward + self.gamma * np.max(forward(self.network, next_state)))

    def train_step(self, batch) -> float:
        """One Adam step on the weighted squared error of the taken actions.

        ``batch`` is a list of Experience or a ``(states, actions, rewards,
        next_states, weights)`` tuple of arrays.  Returns the loss measured
        before the update.
        """
        if isinstance(batch, (list, tuple)) and batch and isinstance(batch[0], Experience):
            states = np.stack([np.asarray(e.state) for e in batch])
            next_states = np.stack([np.asarray(e.next_state) for e in batch])
            actions = np.array([e.action for e in batch], dtype=np.int64)
            rewards = np.array([e.reward for e in batch], dtype=float)
            weights = np.array([e.sample_weight for e in batch], dtype=float)
        else:
            if len(batch) != 5:
                raise ValidationError("train_step needs a non-empty batch")
            states, actions, rewards, next_states, weights = batch
        n = len(actions)
        if n == 0:
            raise ValidationError("train_step needs a non-empty batch")
        dtype = self.network.dtype
        states = np.asarray(states, dtype=dtype)
        next_states = np.asarray(next_states, dtype=dtype)
        d = self.network.input_dim
        if states.shape != (n, d) or next_states.shape != (n, d):
            raise ValidationError(f"batch states must have shape ({n}, {d})")
        actions = np.asarray(actions, dtype=np.int64)
        if actions.min() < 0 or actions.max() >= self.action_arity:
            raise ValidationError("batch contains an out-of-range action")
        return self._train(states, actions, np.asarray(rewards, dtype=float), next_states,
                           np.asarray(weights, dtype=float))

    def _train(self, states, actions, rewards, next_states, weights) -> float:
        net = self.network
        n = len(actions)
        rows = np.arange(n)
        if self.gamma:
            # one pass over current and next states; targets use pre-update weights
            outs = _forward_layers(net, np.concatenate([states, next_states]))
            target = rewards + self.gamma * outs[-1][n:].max(axis=1)
            outs = [o[:n] for o in outs]
        else:
            outs = _forward_layers(net, states)
            target = rewards
        resid = outs[-1][rows, actions] - target
        loss = float(np.mean((resid * weights) ** 2))
        grad_out = np.zeros_like(outs[-1])
        grad_out[rows, actions] = 2.0 / n * weights * weights * resid
        adam_step(net, _backprop(net, outs, grad_out), self.adam)
        return loss

    def learn(self) -> float:
        """Sample a minibatch from the agent's own buffer and train on it."""
        return self._train(*self.buffer.sample_arrays(self.batch_size))

    def digest(self) -> str:
        return network_digest(self.network)


def network_digest(net: DenseNetwork) -> str:
    h = hashlib.sha256()
    h.update(repr(net.layer_dims).encode())
    h.update(str(net.step).encode())
    for a in net.arrays():
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def make_agent(layer_dims: Sequence[int], seed=None, **kwargs) -> DqnAgent:
    from .nn import init_network
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    init_seq, agent_seq = ss.spawn(2)
    net = init_network(layer_dims, init_seq, dtype=kwargs.pop("dtype", np.float32))
    return DqnAgent(net, layer_dims[-1], seed=agent_seq, **kwargs)
