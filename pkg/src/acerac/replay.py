"""Ring replay storage serving uniformly sampled n-step windows.

Each record keeps the per-step conditional log-density of its action given
the preceding noise value.  A window's behavior density is the sum of its
steps' conditionals (chain rule of the noise process), so any of the
overlapping windows can be served with O(1) storage per step.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .policy import SequenceWindow

SNAPSHOT_MAGIC = b"ACRB\x01"


class BufferNotReady(RuntimeError):
    """Raised when no valid window exists yet; callers may retry later."""


@dataclass
class WindowBatch:
    """Column-stacked minibatch of windows; prev_* rows of episode-initial
    windows are zeroed and must be ignored via the initial mask."""

    states: np.ndarray        # (B, n, state_dim)
    actions: np.ndarray       # (B, n, action_dim)
    rewards: np.ndarray       # (B, n)
    behavior_log_density: np.ndarray  # (B,)
    next_states: np.ndarray   # (B, state_dim)
    initial: np.ndarray       # (B,) bool
    terminal: np.ndarray      # (B,) bool
    prev_states: np.ndarray   # (B, state_dim)
    prev_actions: np.ndarray  # (B, action_dim)

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @classmethod
    def from_windows(cls, windows) -> "WindowBatch":
        sdim = windows[0].states.shape[1]
        adim = windows[0].actions.shape[1]
        prev_s = np.zeros((len(windows), sdim))
        prev_a = np.zeros((len(windows), adim))
        for i, w in enumerate(windows):
            if not w.start_of_episode:
                prev_s[i] = w.prev_state
                prev_a[i] = w.prev_action
        return cls(
            states=np.stack([w.states for w in windows]),
            actions=np.stack([w.actions for w in windows]),
            rewards=np.stack([w.rewards for w in windows]),
            behavior_log_density=np.array(
                [w.behavior_log_density for w in windows]),
            next_states=np.stack([w.next_state for w in windows]),
            initial=np.array([w.start_of_episode for w in windows]),
            terminal=np.array([w.terminal for w in windows]),
            prev_states=prev_s,
            prev_actions=prev_a,
        )


@dataclass
class ReplayRecord:
    s: np.ndarray
    a_raw: np.ndarray           # unclipped action; a_raw - mean is the executed noise
    r: float
    mean: np.ndarray            # actor output at execution time
    log_cond_density: float     # ln p(a_t | xi_{t-1}, s_t) under the behavior policy
    next_s: np.ndarray
    episode_start: bool
    terminal: bool
    truncated: bool


class ReplayBuffer:
    def __init__(self, capacity: int, state_dim: int, action_dim: int, n: int):
        if capacity < 1 or n < 1:
            raise ValueError("capacity and n must be positive")
        self.capacity = capacity
        self.n = n
        self.state_dim = state_dim
        self.action_dim = action_dim
        self._s = np.zeros((capacity, state_dim))
        self._a = np.zeros((capacity, action_dim))
        self._mean = np.zeros((capacity, action_dim))
        self._next_s = np.zeros((capacity, state_dim))
        self._r = np.zeros(capacity)
        self._logp = np.zeros(capacity)
        self._ep_id = np.full(capacity, -1, dtype=np.int64)
        self._step_in_ep = np.zeros(capacity, dtype=np.int64)
        self._start = np.zeros(capacity, dtype=bool)
        self._terminal = np.zeros(capacity, dtype=bool)
        self._truncated = np.zeros(capacity, dtype=bool)
        self._count = 0          # records pushed ever; logical indices count up
        self._episodes = 0

    def __len__(self) -> int:
        return min(self._count, self.capacity)

    @property
    def oldest(self) -> int:
        return self._count - len(self)

    def push(self, rec: ReplayRecord) -> None:
        slot = self._count % self.capacity
        if rec.episode_start:
            self._episodes += 1
            self._step_in_ep[slot] = 0
        else:
            prev_slot = (self._count - 1) % self.capacity
            self._step_in_ep[slot] = self._step_in_ep[prev_slot] + 1
        self._s[slot] = rec.s
        self._a[slot] = rec.a_raw
        self._mean[slot] = rec.mean
        self._next_s[slot] = rec.next_s
        self._r[slot] = rec.r
        self._logp[slot] = rec.log_cond_density
        self._ep_id[slot] = self._episodes
        self._start[slot] = rec.episode_start
        self._terminal[slot] = rec.terminal
        self._truncated[slot] = rec.truncated
        self._count += 1

    # ------------------------------------------------------------- windows

    def _is_valid_start(self, j: int) -> bool:
        """j is a logical index; a window is j .. j+n-1 within one episode,
        with the preceding record available unless j starts the episode."""
        if j < self.oldest or j + self.n > self._count:
            return False
        slots = np.arange(j, j + self.n) % self.capacity
        ep = self._ep_id[slots[0]]
        if not np.all(self._ep_id[slots] == ep):
            return False
        if not self._start[slots[0]]:
            if j - 1 < self.oldest or self._ep_id[(j - 1) % self.capacity] != ep:
                return False
        return True

    def valid_starts(self) -> np.ndarray:
        """All currently valid logical window-start indices (vectorized scan)."""
        lo, hi = self.oldest, self._count - self.n + 1
        if hi <= lo:
            return np.zeros(0, dtype=np.int64)
        js = np.arange(lo, hi)
        slots = (js[:, None] + np.arange(self.n)[None, :]) % self.capacity
        ep = self._ep_id[slots]
        ok = np.all(ep == ep[:, :1], axis=1)
        starts = self._start[slots[:, 0]]
        prev_ok = np.zeros_like(ok)
        has_prev = js - 1 >= lo
        prev_ok[has_prev] = self._ep_id[(js[has_prev] - 1) % self.capacity] == ep[has_prev, 0]
        return js[ok & (starts | prev_ok)]

    def num_valid_windows(self) -> int:
        return int(self.valid_starts().size)

    def window_at(self, j: int) -> SequenceWindow:
        if not self._is_valid_start(j):
            raise ValueError(f"index {j} does not start a valid window")
        slots = np.arange(j, j + self.n) % self.capacity
        last = slots[-1]
        start = bool(self._start[slots[0]])
        prev_slot = None if start else (j - 1) % self.capacity
        return SequenceWindow(
            states=self._s[slots].copy(),
            actions=self._a[slots].copy(),
            rewards=self._r[slots].copy(),
            behavior_log_density=float(self._logp[slots].sum()),
            next_state=self._next_s[last].copy(),
            start_of_episode=start,
            terminal=bool(self._terminal[last]),
            truncated=bool(self._truncated[last]),
            prev_state=None if start else self._s[prev_slot].copy(),
            prev_action=None if start else self._a[prev_slot].copy(),
            j_offset=int(self._step_in_ep[slots[0]]),
        )

    def sample_window(self, rng) -> SequenceWindow:
        """Uniform draw over valid window starts.

        Rejection over the logical index range keeps this O(1) when most
        windows are valid (the common case); a full scan backs it up.
        """
        lo, hi = self.oldest, self._count - self.n + 1
        if hi <= lo:
            raise BufferNotReady("buffer holds fewer than n records")
        for _ in range(64):
            j = int(rng.integers(lo, hi))
            if self._is_valid_start(j):
                return self.window_at(j)
        starts = self.valid_starts()
        if starts.size == 0:
            raise BufferNotReady("no complete n-step episode segment stored yet")
        return self.window_at(int(starts[rng.integers(starts.size)]))

    def _valid_mask(self, js: np.ndarray) -> np.ndarray:
        lo = self.oldest
        slots = (js[:, None] + np.arange(self.n)[None, :]) % self.capacity
        ep = self._ep_id[slots]
        ok = np.all(ep == ep[:, :1], axis=1)
        starts = self._start[slots[:, 0]]
        has_prev = js - 1 >= lo
        prev_ok = has_prev.copy()
        prev_ok[has_prev] &= (self._ep_id[(js[has_prev] - 1) % self.capacity]
                              == ep[has_prev, 0])
        return ok & (starts | prev_ok)

    def sample_batch(self, rng, k: int) -> WindowBatch:
        """k windows drawn uniformly (with replacement) over valid starts,
        gathered into stacked arrays; vectorized rejection sampling with a
        full-scan fallback when valid windows are scarce."""
        lo, hi = self.oldest, self._count - self.n + 1
        if hi <= lo:
            raise BufferNotReady("buffer holds fewer than n records")
        js = np.empty(k, dtype=np.int64)
        got = 0
        for _ in range(8):
            cand = rng.integers(lo, hi, size=2 * k)
            good = cand[self._valid_mask(cand)]
            take = min(k - got, good.size)
            js[got:got + take] = good[:take]
            got += take
            if got == k:
                break
        if got < k:
            starts = self.valid_starts()
            if starts.size == 0:
                raise BufferNotReady("no complete n-step episode segment stored yet")
            js[got:] = starts[rng.integers(starts.size, size=k - got)]
        slots = (js[:, None] + np.arange(self.n)[None, :]) % self.capacity
        last = slots[:, -1]
        initial = self._start[slots[:, 0]]
        prev_slots = (js - 1) % self.capacity
        prev_states = self._s[prev_slots]
        prev_actions = self._a[prev_slots]
        prev_states[initial] = 0.0
        prev_actions[initial] = 0.0
        return WindowBatch(
            states=self._s[slots],
            actions=self._a[slots],
            rewards=self._r[slots],
            behavior_log_density=self._logp[slots].sum(axis=1),
            next_states=self._next_s[last],
            initial=initial,
            terminal=self._terminal[last],
            prev_states=prev_states,
            prev_actions=prev_actions,
        )

    # ------------------------------------------------------------ snapshot

    def save(self, path) -> None:
        """Binary snapshot of the held records (logical order) for resume."""
        size = len(self)
        order = np.arange(self.oldest, self._count) % self.capacity
        header = struct.pack(
            "<5sQQQQQQ", SNAPSHOT_MAGIC, self.capacity, size, self.n,
            self.state_dim, self.action_dim, self._episodes,
        )
        with open(path, "wb") as fh:
            fh.write(header)
            for arr in (self._s, self._a, self._mean, self._next_s):
                fh.write(np.ascontiguousarray(arr[order], dtype="<f8").tobytes())
            for arr in (self._r, self._logp):
                fh.write(np.ascontiguousarray(arr[order], dtype="<f8").tobytes())
            for arr in (self._ep_id, self._step_in_ep):
                fh.write(np.ascontiguousarray(arr[order], dtype="<i8").tobytes())
            flags = np.stack([self._start[order], self._terminal[order],
                              self._truncated[order]], axis=1)
            fh.write(np.packbits(flags.astype(np.uint8), axis=None).tobytes())

    @classmethod
    def load(cls, path) -> "ReplayBuffer":
        with open(path, "rb") as fh:
            header_fmt = "<5sQQQQQQ"
            blob = fh.read(struct.calcsize(header_fmt))
            if len(blob) < struct.calcsize(header_fmt) or \
                    not blob.startswith(SNAPSHOT_MAGIC):
                raise ValueError("not a replay snapshot file")
            magic, capacity, size, n, sdim, adim, episodes = struct.unpack(
                header_fmt, blob)
            buf = cls(int(capacity), int(sdim), int(adim), int(n))

            def read_f64(cols):
                nbytes = 8 * size * cols
                arr = np.frombuffer(fh.read(nbytes), dtype="<f8").astype(float)
                return arr.reshape(size, cols)

            s = read_f64(buf.state_dim)
            a = read_f64(buf.action_dim)
            mean = read_f64(buf.action_dim)
            next_s = read_f64(buf.state_dim)
            r = read_f64(1)[:, 0]
            logp = read_f64(1)[:, 0]
            ep_id = np.frombuffer(fh.read(8 * size), dtype="<i8").astype(np.int64)
            step_in_ep = np.frombuffer(fh.read(8 * size), dtype="<i8").astype(np.int64)
            nbits = 3 * size
            flags = np.unpackbits(
                np.frombuffer(fh.read((nbits + 7) // 8), dtype=np.uint8))[:nbits]
            flags = flags.reshape(size, 3).astype(bool)
        idx = np.arange(size)
        buf._s[idx] = s
        buf._a[idx] = a
        buf._mean[idx] = mean
        buf._next_s[idx] = next_s
        buf._r[idx] = r
        buf._logp[idx] = logp
        buf._ep_id[idx] = ep_id
        buf._step_in_ep[idx] = step_in_ep
        buf._start[idx], buf._terminal[idx], buf._truncated[idx] = flags.T
        buf._count = size
        buf._episodes = int(episodes)
        return buf
