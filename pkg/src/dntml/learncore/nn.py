"""Dense ReLU networks over flat parameter vectors, with hand-written backprop."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidParameterError


class MLP:
    """Fully connected net: ReLU on hidden layers, linear output.

    Parameters live in one flat vector laid out layer by layer as
    ``W (in x out)`` then ``b (out)``.  The object itself only stores the
    layout, so many parameter vectors can share one ``MLP``.
    """

    def __init__(self, sizes, dtype=np.float32):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise InvalidParameterError(f"bad layer sizes {sizes}")
        self.sizes = sizes
        self.dtype = np.dtype(dtype)
        self._slices = []
        off = 0
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            w = slice(off, off + fan_in * fan_out)
            off += fan_in * fan_out
            b = slice(off, off + fan_out)
            off += fan_out
            self._slices.append((w, b, fan_in, fan_out))
        self.n_params = off

    @property
    def manifest(self) -> dict:
        return {"kind": "mlp", "dims": list(self.sizes), "size": self.n_params}

    def unpack(self, flat):
        return [(flat[w].reshape(i, o), flat[b]) for w, b, i, o in self._slices]

    def init(self, rng: np.random.Generator, zero_last: bool = False) -> np.ndarray:
        flat = np.zeros(self.n_params, dtype=self.dtype)
        for k, (w, b, fan_in, fan_out) in enumerate(self._slices):
            if zero_last and k == len(self._slices) - 1:
                continue
            std = np.sqrt(2.0 / fan_in)
            flat[w] = rng.normal(0.0, std, fan_in * fan_out)
        return flat

    def _check(self, flat, x):
        if flat.shape != (self.n_params,):
            raise InvalidParameterError(
                f"expected {self.n_params} parameters, got shape {flat.shape}")
        if x.shape[-1] != self.sizes[0]:
            raise InvalidParameterError(
                f"input dim {x.shape[-1]} does not match network input {self.sizes[0]}")

    def forward(self, flat, x, keep=False):
        """Return outputs for a batch ``x`` (or a single vector).

        With ``keep=True`` also return the activations needed by ``backward``.
        """
        x = np.asarray(x, dtype=self.dtype)
        self._check(flat, x)
        single = x.ndim == 1
        h = x[None, :] if single else x
        acts = [h]
        layers = self.unpack(flat)
        for k, (W, b) in enumerate(layers):
            h = h @ W + b
            if k < len(layers) - 1:
                h = np.maximum(h, 0)
            acts.append(h)
        out = h[0] if single else h
        return (out, acts) if keep else out

    def backward(self, flat, acts, grad_out) -> np.ndarray:
        """Gradient of ``sum(grad_out * outputs)`` with respect to ``flat``."""
        grad = np.zeros_like(flat)
        layers = self.unpack(flat)
        g = np.asarray(grad_out, dtype=self.dtype)
        if g.ndim == 1:
            g = g[None, :]
        for k in range(len(layers) - 1, -1, -1):
            W, _ = layers[k]
            w_sl, b_sl, fan_in, fan_out = self._slices[k]
            h_in = acts[k]
            grad[w_sl] = (h_in.T @ g).ravel()
            grad[b_sl] = g.sum(axis=0)
            if k > 0:
                g = (g @ W.T) * (acts[k] > 0)
        return grad


def forward_mlp(net: MLP, flat, x):
    return net.forward(flat, x)


def mse_loss_grad(pred, target, mask=None):
    """Mean squared error over the batch and its gradient w.r.t. ``pred``.

    ``mask`` selects which output units carry a target (DQN uses a one-hot
    mask on the taken action); the mean is over batch rows.
    """
    diff = pred - target
    if mask is not None:
        diff = diff * mask
    n = pred.shape[0] if pred.ndim > 1 else 1
    loss = float(np.sum(diff.astype(np.float64) ** 2) / n)
    return loss, (2.0 / n) * diff


def backward(net: MLP, flat, x, target, mask=None):
    """Loss and gradient of masked mean-squared error for a batch."""
    out, acts = net.forward(flat, x, keep=True)
    loss, g = mse_loss_grad(out, np.asarray(target, dtype=net.dtype), mask)
    return loss, net.backward(flat, acts, g)


def greedy(q) -> np.ndarray | int:
    """Argmax over the last axis; ties go to the lowest index."""
    return np.argmax(q, axis=-1)
