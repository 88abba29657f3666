"""Bounded FIFO experience replay with per-transition loss weights."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyBufferError, ValidationError


@dataclass(frozen=True)
class Experience:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    sample_weight: float = 1.0


class ReplayBuffer:
    """Ring buffer of transitions stored column-wise in numpy arrays.

    Storage grows geometrically up to ``capacity`` so a nominal capacity of
    ten million does not allocate ten million rows up front.  Once full, each
    insert overwrites the oldest slot.
    """

    def __init__(self, capacity: int, state_dim: int, seed=None, dtype=np.float32):
        if int(capacity) <= 0:
            raise ValidationError(f"capacity must be positive, got {capacity}")
        if int(state_dim) <= 0:
            raise ValidationError(f"state_dim must be positive, got {state_dim}")
        self.capacity = int(capacity)
        self.state_dim = int(state_dim)
        self.dtype = np.dtype(dtype)
        self.rng = np.random.default_rng(seed)
        self._size = 0
        self._next = 0
        self._alloc(min(self.capacity, 1024))

    def _alloc(self, rows: int):
        old = getattr(self, "_states", None)
        states = np.empty((rows, self.state_dim), dtype=self.dtype)
        next_states = np.empty((rows, self.state_dim), dtype=self.dtype)
        actions = np.empty(rows, dtype=np.int64)
        rewards = np.empty(rows, dtype=np.float64)
        weights = np.empty(rows, dtype=np.float64)
        if old is not None:
            n = self._size
            states[:n] = self._states[:n]
            next_states[:n] = self._next_states[:n]
            actions[:n] = self._actions[:n]
            rewards[:n] = self._rewards[:n]
            weights[:n] = self._weights[:n]
        self._states, self._next_states = states, next_states
        self._actions, self._rewards, self._weights = actions, rewards, weights

    def __len__(self) -> int:
        return self._size

    def push(self, state, action: int, reward: float, next_state, sample_weight: float = 1.0):
        """Insert one transition from raw values (the training hot path)."""
        if self._size < self.capacity and self._size == len(self._states):
            self._alloc(min(self.capacity, 2 * len(self._states)))
        i = self._next
        self._states[i] = state
        self._next_states[i] = next_state
        self._actions[i] = action
        self._rewards[i] = reward
        self._weights[i] = sample_weight
        self._next = (i + 1) % self.capacity
        if self._size < self.capacity:
            self._size += 1

    def store(self, e: Experience) -> "ReplayBuffer":
        state = np.asarray(e.state)
        next_state = np.asarray(e.next_state)
        if state.shape != (self.state_dim,) or next_state.shape != (self.state_dim,):
            raise ValidationError(
                f"experience states must have shape ({self.state_dim},), "
                f"got {state.shape} and {next_state.shape}")
        if int(e.action) < 0:
            raise ValidationError(f"action must be non-negative, got {e.action}")
        if e.sample_weight < 0:
            raise ValidationError(f"sample_weight must be >= 0, got {e.sample_weight}")
        self.push(state, int(e.action), float(e.reward), next_state, float(e.sample_weight))
        return self

    def _ordered_slots(self) -> np.ndarray:
        if self._size < self.capacity:
            return np.arange(self._size)
        return (np.arange(self._size) + self._next) % self.capacity

    def entries(self) -> list[Experience]:
        """All stored transitions, oldest first."""
        return [self._experience(i) for i in self._ordered_slots()]

    def _experience(self, i) -> Experience:
        return Experience(self._states[i].copy(), int(self._actions[i]), float(self._rewards[i]),
                          self._next_states[i].copy(), float(self._weights[i]))

    def sample_slots(self, batch_size: int) -> np.ndarray:
        """Distinct buffer slots drawn uniformly; ``min(batch_size, len)`` of them."""
        if self._size == 0:
            raise EmptyBufferError("cannot sample from an empty replay buffer")
        if batch_size <= 0:
            raise ValidationError(f"batch_size must be positive, got {batch_size}")
        if batch_size >= self._size:
            return self.rng.permutation(self._size)
        return self.rng.choice(self._size, size=batch_size, replace=False)

    def sample_arrays(self, batch_size: int):
        """(states, actions, rewards, next_states, weights) for a random minibatch.

        Returned arrays are copies, so callers cannot mutate the buffer.
        """
        idx = self.sample_slots(batch_size)
        return (self._states[idx], self._actions[idx], self._rewards[idx],
                self._next_states[idx], self._weights[idx])

    def sample_minibatch(self, batch_size: int) -> list[Experience]:
        return [self._experience(i) for i in self.sample_slots(batch_size)]
