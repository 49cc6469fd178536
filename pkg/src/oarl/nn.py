"""Small numpy network kernel: dense nets, an LSTM cell, Adam and soft updates.

Every network keeps all of its trainable numbers in one flat float64 vector
(``net.params``); weights and biases are views into it. Gradients come back in
the same flat layout, so the optimizer and the target-tracking update each
touch one contiguous array per network.

Weights are stored as ``(fan_in, fan_out)`` and applied as ``x @ W + b``.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .exceptions import ConfigurationError, ContractViolation, TrainingError

ACTIVATIONS = ("relu", "tanh", "linear")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    out = np.tanh(0.5 * x)
    out *= 0.5
    out += 0.5
    return out


class DenseNet:
    """Fully connected network ``sizes[0] -> ... -> sizes[-1]``.

    ``activations`` has one tag per layer. Inputs may be a single vector or a
    batch of row vectors; outputs keep the same rank.
    """

    def __init__(
        self,
        sizes: Sequence[int],
        activations: Sequence[str],
        rng: np.random.Generator | None = None,
    ):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ConfigurationError(f"bad layer sizes {sizes}")
        if len(activations) != len(sizes) - 1:
            raise ConfigurationError("need exactly one activation per layer")
        for act in activations:
            if act not in ACTIVATIONS:
                raise ConfigurationError(f"unknown activation {act!r}")
        self.sizes = sizes
        self.activations = list(activations)
        n = sum(i * o + o for i, o in zip(sizes[:-1], sizes[1:]))
        self.params = np.zeros(n)
        self.weights, self.biases = self._views(self.params)
        if rng is not None:
            for w, b in zip(self.weights, self.biases):
                bound = 1.0 / np.sqrt(w.shape[0])
                w[...] = rng.uniform(-bound, bound, size=w.shape)
                b[...] = rng.uniform(-bound, bound, size=b.shape)

    def _views(self, flat: np.ndarray):
        weights, biases = [], []
        k = 0
        for i, o in zip(self.sizes[:-1], self.sizes[1:]):
            weights.append(flat[k:k + i * o].reshape(i, o))
            k += i * o
            biases.append(flat[k:k + o])
            k += o
        return weights, biases

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise ConfigurationError(
                f"input width {x.shape[-1]} != network input width {self.in_dim}")
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = self._check(x)
        for w, b, act in zip(self.weights, self.biases, self.activations):
            h = h @ w + b
            if act == "relu":
                np.maximum(h, 0.0, out=h)
            elif act == "tanh":
                np.tanh(h, out=h)
        return h

    __call__ = forward

    def forward_cache(self, x: np.ndarray):
        """Forward pass that also returns the layer outputs needed by ``backward``."""
        h = np.atleast_2d(self._check(x))
        outs = [h]
        for w, b, act in zip(self.weights, self.biases, self.activations):
            h = h @ w + b
            if act == "relu":
                np.maximum(h, 0.0, out=h)
            elif act == "tanh":
                np.tanh(h, out=h)
            outs.append(h)
        return h, outs

    def backward(self, cache, dout: np.ndarray, need_dx: bool = True):
        """Backpropagate ``dout`` (gradient of a scalar loss w.r.t. the output).

        Returns ``(grad, dx)`` where ``grad`` is flat like ``params`` and ``dx``
        is the gradient w.r.t. the input batch (``None`` if not requested).
        """
        outs = cache
        grad = np.empty_like(self.params)
        gw, gb = self._views(grad)
        delta = np.atleast_2d(np.asarray(dout, dtype=np.float64))
        dx = None
        for k in range(len(self.weights) - 1, -1, -1):
            act = self.activations[k]
            y = outs[k + 1]
            if act == "relu":
                delta = delta * (y > 0)
            elif act == "tanh":
                delta = delta * (1.0 - y * y)
            np.matmul(outs[k].T, delta, out=gw[k])
            np.sum(delta, axis=0, out=gb[k])
            if k > 0 or need_dx:
                delta = delta @ self.weights[k].T
        if need_dx:
            dx = delta
        return grad, dx

    def copy(self) -> "DenseNet":
        clone = DenseNet(self.sizes, self.activations)
        clone.params[...] = self.params
        return clone


class LstmCell:
    """Single LSTM layer run over a sequence; only the last hidden state is returned.

    Gate blocks in the fused weight matrices are ordered input, forget,
    candidate, output. State starts from zeros for every call.
    """

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator | None = None):
        if input_dim <= 0 or hidden_dim <= 0:
            raise ConfigurationError("LSTM widths must be positive")
        self.input_dim = int(input_dim)
        self.hidden_dim = int(hidden_dim)
        n, h = self.input_dim, self.hidden_dim
        self.params = np.zeros(n * 4 * h + h * 4 * h + 4 * h)
        self.wx, self.wh, self.b = self._views(self.params)
        if rng is not None:
            bound = 1.0 / np.sqrt(h)
            self.params[...] = rng.uniform(-bound, bound, size=self.params.shape)

    def _views(self, flat: np.ndarray):
        n, h = self.input_dim, self.hidden_dim
        wx = flat[:n * 4 * h].reshape(n, 4 * h)
        wh = flat[n * 4 * h:n * 4 * h + h * 4 * h].reshape(h, 4 * h)
        b = flat[n * 4 * h + h * 4 * h:]
        return wx, wh, b

    @property
    def out_dim(self) -> int:
        return self.hidden_dim

    def _check(self, seq) -> np.ndarray:
        x = np.asarray(seq, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim not in (2, 3) or x.shape[-2] == 0:
            raise ContractViolation("LSTM needs a non-empty sequence")
        if x.shape[-1] != self.input_dim:
            raise ConfigurationError(
                f"input width {x.shape[-1]} != LSTM input width {self.input_dim}")
        return x

    def forward(self, seq) -> np.ndarray:
        """``seq`` is ``(T, n)`` or ``(B, T, n)``; returns ``(h,)`` or ``(B, h)``."""
        x = self._check(seq)
        single = x.ndim == 2
        if single:
            x = x[None]
        h, _ = self._run(x, keep=False)
        return h[0] if single else h

    __call__ = forward

    def _run(self, x: np.ndarray, keep: bool):
        batch, steps, _ = x.shape
        hd = self.hidden_dim
        h = np.zeros((batch, hd))
        c = np.zeros((batch, hd))
        xw = x @ self.wx + self.b
        trace = []
        for t in range(steps):
            z = xw[:, t] + h @ self.wh
            s = _sigmoid(z)
            i, f, o = s[:, :hd], s[:, hd:2 * hd], s[:, 3 * hd:]
            g = np.tanh(z[:, 2 * hd:3 * hd])
            c_prev, h_prev = c, h
            c = f * c + i * g
            tc = np.tanh(c)
            h = o * tc
            if keep:
                trace.append((h_prev, c_prev, i, f, g, o, tc))
        return h, trace

    def forward_cache(self, seq):
        x = self._check(seq)
        if x.ndim == 2:
            x = x[None]
        h, trace = self._run(x, keep=True)
        return h, (x, trace)

    def backward(self, cache, dh: np.ndarray, need_dx: bool = False):
        """Gradient of a loss that depends on the final hidden state only."""
        x, trace = cache
        hd = self.hidden_dim
        grad = np.zeros_like(self.params)
        gwx, gwh, gb = self._views(grad)
        dh = np.atleast_2d(np.asarray(dh, dtype=np.float64))
        dc = np.zeros_like(dh)
        dx = np.zeros_like(x) if need_dx else None
        dz = np.empty((x.shape[0], 4 * hd))
        for t in range(len(trace) - 1, -1, -1):
            h_prev, c_prev, i, f, g, o, tc = trace[t]
            dc = dc + dh * o * (1.0 - tc * tc)
            dz[:, :hd] = dc * g * i * (1.0 - i)
            dz[:, hd:2 * hd] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * hd:3 * hd] = dc * i * (1.0 - g * g)
            dz[:, 3 * hd:] = dh * tc * o * (1.0 - o)
            gwx += x[:, t].T @ dz
            gwh += h_prev.T @ dz
            gb += dz.sum(axis=0)
            if need_dx:
                dx[:, t] = dz @ self.wx.T
            dh = dz @ self.wh.T
            dc = dc * f
        return grad, dx

    def copy(self) -> "LstmCell":
        clone = LstmCell(self.input_dim, self.hidden_dim)
        clone.params[...] = self.params
        return clone


def forward_dense(net: DenseNet, x) -> np.ndarray:
    return net.forward(x)


def forward_lstm(cell: LstmCell, sequence) -> np.ndarray:
    return cell.forward(sequence)


class Adam:
    """Bias-corrected Adam over a list of flat parameter arrays, updated in place."""

    def __init__(self, params: Sequence[np.ndarray], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self._scratch = [np.empty_like(p) for p in params]
        self.t = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ConfigurationError("parameter list does not match optimizer state")
        for p, g, m in zip(params, grads, self.m):
            if p.shape != m.shape or g.shape != m.shape:
                raise ConfigurationError(f"shape mismatch {p.shape} / {g.shape} / {m.shape}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        step = self.lr / (1.0 - b1 ** self.t)
        inv_c2 = 1.0 / (1.0 - b2 ** self.t)
        for p, g, m, v, s in zip(params, grads, self.m, self.v, self._scratch):
            m *= b1
            np.multiply(g, 1.0 - b1, out=s)
            m += s
            v *= b2
            np.multiply(g, g, out=s)
            s *= 1.0 - b2
            v += s
            np.multiply(v, inv_c2, out=s)
            np.sqrt(s, out=s)
            s += self.eps
            np.divide(m, s, out=s)
            s *= step
            p -= s

    def state(self) -> dict:
        return {"t": self.t, "m": [m.copy() for m in self.m], "v": [v.copy() for v in self.v]}

    def load_state(self, state: dict) -> None:
        self.t = int(state["t"])
        for dst, src in zip(self.m, state["m"]):
            dst[...] = src
        for dst, src in zip(self.v, state["v"]):
            dst[...] = src


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: Adam) -> None:
    state.step(params, grads)


def soft_update(target, online, tau: float):
    """``target <- tau * online + (1 - tau) * target`` element-wise, in place.

    Accepts single arrays or equal-length lists of arrays; returns ``target``.
    """
    if not 0.0 <= tau <= 1.0:
        raise ConfigurationError(f"tau must lie in [0, 1], got {tau}")
    pairs = zip(target, online) if isinstance(target, (list, tuple)) else [(target, online)]
    for t, o in pairs:
        if t.shape != o.shape:
            raise ConfigurationError("soft update needs identical shapes")
        t *= 1.0 - tau
        t += tau * o
    return target


def check_finite(*arrays: np.ndarray, what: str = "value") -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise TrainingError(f"non-finite {what}")
