"""Shared numeric types: imagined trajectories, transitions and the replay buffer."""

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import EmptyBufferError, ExhaustedTrajectoryError, InvalidArgumentError


def euclidean_error(actual, predicted):
    """L2 distance between an observed state and a predicted one."""
    actual = np.asarray(actual, dtype=np.float64)
    predicted = np.asarray(predicted, dtype=np.float64)
    if actual.shape != predicted.shape:
        raise InvalidArgumentError(
            f"dimension mismatch: {actual.shape} vs {predicted.shape}"
        )
    if not (np.all(np.isfinite(actual)) and np.all(np.isfinite(predicted))):
        raise InvalidArgumentError("non-finite state entries")
    return float(np.linalg.norm(actual - predicted))


@dataclass
class ImaginedTrajectory:
    """Planner output consumed one step at a time.

    ``pred_states[i]`` is the state expected after executing ``actions[i]``;
    ``pred_sigmas[i]`` its per-dimension standard deviation.
    """

    origin_state: np.ndarray
    actions: np.ndarray
    pred_states: np.ndarray
    pred_sigmas: np.ndarray
    pred_rewards: np.ndarray
    cursor: int = 0

    def __post_init__(self):
        self.actions = np.atleast_2d(np.asarray(self.actions, dtype=np.float64))
        self.pred_states = np.atleast_2d(np.asarray(self.pred_states, dtype=np.float64))
        self.pred_sigmas = np.atleast_2d(np.asarray(self.pred_sigmas, dtype=np.float64))
        self.pred_rewards = np.asarray(self.pred_rewards, dtype=np.float64).reshape(-1)
        h = len(self.actions)
        if not (len(self.pred_states) == len(self.pred_sigmas) == len(self.pred_rewards) == h):
            raise InvalidArgumentError("trajectory sequences must share one length")
        if np.any(self.pred_sigmas < 0):
            raise InvalidArgumentError("negative predicted sigma")
        if not 0 <= self.cursor <= h:
            raise InvalidArgumentError(f"cursor {self.cursor} outside [0, {h}]")

    @property
    def horizon(self):
        return len(self.actions)

    @property
    def exhausted(self):
        return self.cursor >= self.horizon

    def advance(self):
        """Pop the next (action, predicted state, predicted sigma)."""
        if self.exhausted:
            raise ExhaustedTrajectoryError("trajectory has no unexecuted actions left")
        i = self.cursor
        self.cursor += 1
        return self.actions[i].copy(), self.pred_states[i].copy(), self.pred_sigmas[i].copy()


def trajectory_advance(traj):
    return traj.advance()


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    reward: float

    def __eq__(self, other):
        if not isinstance(other, Transition):
            return NotImplemented
        return (
            np.array_equal(self.s, other.s)
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.s_next, other.s_next)
            and np.float32(self.reward) == np.float32(other.reward)
        )


class ReplayBuffer:
    """Append-only transition store (float32 rows), optionally bounded.

    Each row is laid out as ``[s, a, s_next, reward]``; this is also the
    on-disk layout used by checkpoints.
    """

    def __init__(self, d_s=None, d_a=None, capacity=None):
        if capacity is not None and capacity < 1:
            raise InvalidArgumentError("capacity must be positive")
        self.d_s = d_s
        self.d_a = d_a
        self.capacity = capacity
        self._rows = deque(maxlen=capacity)
        self._cache = None

    @property
    def row_width(self):
        return 2 * self.d_s + self.d_a + 1

    def __len__(self):
        return len(self._rows)

    def push(self, tr):
        s = np.asarray(tr.s, dtype=np.float32).reshape(-1)
        a = np.asarray(tr.a, dtype=np.float32).reshape(-1)
        s_next = np.asarray(tr.s_next, dtype=np.float32).reshape(-1)
        if self.d_s is None:
            self.d_s, self.d_a = len(s), len(a)
        if len(s) != self.d_s or len(s_next) != self.d_s or len(a) != self.d_a:
            raise InvalidArgumentError("transition dimensions do not match the buffer")
        row = np.concatenate([s, a, s_next, np.array([tr.reward], dtype=np.float32)])
        self._rows.append(row)
        self._cache = None
        return self

    def push_row(self, row):
        row = np.asarray(row, dtype=np.float32)
        if len(row) != self.row_width:
            raise InvalidArgumentError("row width does not match the buffer")
        self._rows.append(row.copy())
        self._cache = None

    def __getitem__(self, i):
        return self._split(self._rows[i])

    def _split(self, row):
        d_s, d_a = self.d_s, self.d_a
        return Transition(
            row[:d_s].copy(),
            row[d_s:d_s + d_a].copy(),
            row[d_s + d_a:2 * d_s + d_a].copy(),
            float(row[-1]),
        )

    def rows(self):
        """All transitions as one ``(N, 2*d_s + d_a + 1)`` float32 array."""
        if self._cache is None:
            if not self._rows:
                width = self.row_width if self.d_s is not None else 0
                self._cache = np.zeros((0, width), dtype=np.float32)
            else:
                self._cache = np.stack(self._rows)
        return self._cache

    def arrays(self):
        rows = self.rows()
        d_s, d_a = self.d_s, self.d_a
        return (
            rows[:, :d_s],
            rows[:, d_s:d_s + d_a],
            rows[:, d_s + d_a:2 * d_s + d_a],
            rows[:, -1],
        )

    def bootstrap_indices(self, rng, count):
        if len(self) == 0:
            raise EmptyBufferError("cannot resample an empty buffer")
        return rng.integers(0, len(self), size=count)

    def bootstrap_sample(self, rng, count):
        return [self[int(i)] for i in self.bootstrap_indices(rng, count)]

    def copy(self):
        out = ReplayBuffer(self.d_s, self.d_a, self.capacity)
        out._rows.extend(r.copy() for r in self._rows)
        return out

    def __eq__(self, other):
        if not isinstance(other, ReplayBuffer):
            return NotImplemented
        return len(self) == len(other) and np.array_equal(self.rows(), other.rows())


def buffer_push(buf, tr):
    return buf.push(tr)


def buffer_bootstrap_sample(buf, rng, count):
    return buf.bootstrap_sample(rng, count)
