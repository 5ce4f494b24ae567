"""Small feed-forward networks on flat parameter vectors.

Enough machinery for the actor and critic: batched forward evaluation,
vector-Jacobian products with respect to parameters and inputs, an ADAM
optimizer, and a binary checkpoint format.  Hidden layers use tanh, the
output layer is linear.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, replace

import numpy as np

log = logging.getLogger(__name__)

ACTIVATION_IDS = {"tanh": 0}


@dataclass
class Cache:
    """Forward intermediates consumed by the backward passes."""

    net: "Mlp"
    params: np.ndarray
    acts: list  # inputs to each layer: [x, h1, ..., h_{L-1}], shape (B, width)
    single: bool


class Mlp:
    """Fully-connected net. widths = [in, hidden..., out].

    Parameters live in one flat float64 vector laid out layer by layer,
    weight matrix (out, in) row-major then bias.
    """

    def __init__(self, widths, activation: str = "tanh"):
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ValueError(f"widths must be >= 2 positive entries, got {widths}")
        if activation not in ACTIVATION_IDS:
            raise ValueError(f"unsupported activation {activation!r}")
        self.widths = [int(w) for w in widths]
        self.activation = activation
        self._shapes = [
            (self.widths[i + 1], self.widths[i]) for i in range(len(self.widths) - 1)
        ]
        self._slices = []
        off = 0
        for out_w, in_w in self._shapes:
            w_sl = slice(off, off + out_w * in_w)
            off += out_w * in_w
            b_sl = slice(off, off + out_w)
            off += out_w
            self._slices.append((w_sl, b_sl))
        self.n_params = off

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def init_params(self, rng) -> np.ndarray:
        """Uniform +-1/sqrt(fan_in) per layer, biases included."""
        params = np.empty(self.n_params)
        for (w_sl, b_sl), (out_w, in_w) in zip(self._slices, self._shapes):
            bound = 1.0 / np.sqrt(in_w)
            params[w_sl] = rng.uniform(-bound, bound, out_w * in_w)
            params[b_sl] = rng.uniform(-bound, bound, out_w)
        return params

    def layers(self, params: np.ndarray):
        """Views (W, b) per layer into the flat vector; no copies."""
        if params.shape != (self.n_params,):
            raise ValueError(
                f"expected parameter vector of length {self.n_params}, got {params.shape}"
            )
        return [
            (params[w_sl].reshape(shape), params[b_sl])
            for (w_sl, b_sl), shape in zip(self._slices, self._shapes)
        ]

    def _promote(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.in_dim:
            raise ValueError(f"expected input width {self.in_dim}, got {x.shape[1]}")
        return x, single

    def forward(self, params: np.ndarray, x) -> np.ndarray:
        x, single = self._promote(x)
        h = x
        layer_list = self.layers(params)
        for W, b in layer_list[:-1]:
            h = np.tanh(h @ W.T + b)
        W, b = layer_list[-1]
        y = h @ W.T + b
        return y[0] if single else y

    def forward_cached(self, params: np.ndarray, x) -> tuple[np.ndarray, Cache]:
        """Forward pass recording the intermediates each backward pass needs."""
        x, single = self._promote(x)
        acts = [x]
        h = x
        layer_list = self.layers(params)
        for W, b in layer_list[:-1]:
            h = np.tanh(h @ W.T + b)
            acts.append(h)
        W, b = layer_list[-1]
        y = h @ W.T + b
        cache = Cache(net=self, params=params, acts=acts, single=single)
        return (y[0] if single else y), cache

    def _check_cache(self, cache: Cache, v) -> np.ndarray:
        if cache.net is not self or cache.params.shape != (self.n_params,):
            raise ValueError("cache does not belong to this network")
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        if v.shape != (cache.acts[0].shape[0], self.out_dim):
            raise ValueError(
                f"cotangent shape {v.shape} does not match cached batch "
                f"({cache.acts[0].shape[0]}, {self.out_dim})"
            )
        return v

    def vjp(self, cache: Cache, v) -> np.ndarray:
        """J^T v with J = d forward / d params, summed over batch rows."""
        v = self._check_cache(cache, v)
        layer_list = self.layers(cache.params)
        grad = np.zeros(self.n_params)
        delta = v
        for l in range(len(layer_list) - 1, -1, -1):
            W, _ = layer_list[l]
            w_sl, b_sl = self._slices[l]
            grad[w_sl] = (delta.T @ cache.acts[l]).reshape(-1)
            grad[b_sl] = delta.sum(axis=0)
            if l > 0:
                delta = (delta @ W) * (1.0 - cache.acts[l] ** 2)
        return grad

    def grad_wrt_input(self, cache: Cache, v) -> np.ndarray:
        """Per-row gradient of v . forward(x) with respect to x."""
        v = self._check_cache(cache, v)
        layer_list = self.layers(cache.params)
        delta = v
        for l in range(len(layer_list) - 1, 0, -1):
            W, _ = layer_list[l]
            delta = (delta @ W) * (1.0 - cache.acts[l] ** 2)
        gx = delta @ layer_list[0][0]
        return gx[0] if cache.single else gx


@dataclass(frozen=True)
class AdamState:
    """ADAM moments; updates are pure, a step returns a new state."""

    m: np.ndarray
    v: np.ndarray
    t: int
    step_size: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    skipped: int = 0

    @classmethod
    def init(cls, n_params: int, step_size: float, **kw) -> "AdamState":
        return cls(m=np.zeros(n_params), v=np.zeros(n_params), t=0,
                   step_size=step_size, **kw)


def adam_step(params: np.ndarray, direction: np.ndarray,
              state: AdamState) -> tuple[np.ndarray, AdamState]:
    """One ADAM ascent step along `direction` (callers pass improvement
    directions, so the update adds).

    Non-finite directions skip the update and count the event instead of
    corrupting the moments.
    """
    if params.shape != direction.shape:
        raise ValueError("params and direction shapes disagree")
    if not np.all(np.isfinite(direction)):
        log.warning("adam_step skipped: non-finite direction")
        return params, replace(state, skipped=state.skipped + 1)
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * direction
    v = state.beta2 * state.v + (1.0 - state.beta2) * direction * direction
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params + state.step_size * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, replace(state, m=m, v=v, t=t)


def save_params(path, net: Mlp, params: np.ndarray) -> None:
    """Checkpoint: little-endian header (u32 width count, u32 widths,
    u32 activation id) followed by the flat float64 parameter vector."""
    if params.shape != (net.n_params,):
        raise ValueError("parameter vector does not match the network")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(net.widths)))
        fh.write(struct.pack(f"<{len(net.widths)}I", *net.widths))
        fh.write(struct.pack("<I", ACTIVATION_IDS[net.activation]))
        fh.write(np.ascontiguousarray(params, dtype="<f8").tobytes())


def load_params(path) -> tuple[Mlp, np.ndarray]:
    with open(path, "rb") as fh:
        (k,) = struct.unpack("<I", fh.read(4))
        widths = struct.unpack(f"<{k}I", fh.read(4 * k))
        (act_id,) = struct.unpack("<I", fh.read(4))
        blob = fh.read()
    by_id = {v: k for k, v in ACTIVATION_IDS.items()}
    if act_id not in by_id:
        raise ValueError(f"unknown activation id {act_id}")
    net = Mlp(list(widths), activation=by_id[act_id])
    params = np.frombuffer(blob, dtype="<f8").astype(float)
    if params.shape != (net.n_params,):
        raise ValueError(
            f"checkpoint holds {params.shape[0]} parameters, "
            f"network needs {net.n_params}"
        )
    return net, params
