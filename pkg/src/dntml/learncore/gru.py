"""Embedding -> single GRU layer -> softmax head, for next-item prediction.

Sequences are consumed many-to-one: only the hidden state after the last
position feeds the output head.  Backprop through time is written out by
hand; ``tests/test_learncore.py`` checks it against central differences.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidParameterError


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(logits, temperature: float = 1.0):
    z = logits / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class GRUNet:
    """Layout of a GRU sequence classifier over a flat parameter vector.

    Gate order inside the fused matrices is ``[update z, reset r, candidate n]``::

        z = sigmoid(x Wz + h Uz + bz)
        r = sigmoid(x Wr + h Ur + br)
        n = tanh(x Wn + (r * h) Un + bn)
        h' = (1 - z) * n + z * h
    """

    def __init__(self, vocab: int, embed: int = 16, hidden: int = 32, dtype=np.float32):
        if vocab < 1 or embed < 1 or hidden < 1:
            raise InvalidParameterError("GRUNet dimensions must be positive")
        self.vocab, self.embed, self.hidden = int(vocab), int(embed), int(hidden)
        self.dtype = np.dtype(dtype)
        V, D, H = self.vocab, self.embed, self.hidden
        shapes = [("E", (V, D)), ("Wx", (D, 3 * H)), ("Uzr", (H, 2 * H)),
                  ("Un", (H, H)), ("b", (3 * H,)), ("Wo", (H, V)), ("bo", (V,))]
        self._slices = {}
        off = 0
        for name, shape in shapes:
            n = int(np.prod(shape))
            self._slices[name] = (slice(off, off + n), shape)
            off += n
        self.n_params = off

    @property
    def manifest(self) -> dict:
        return {"kind": "gru", "dims": [self.vocab, self.embed, self.hidden], "size": self.n_params}

    def unpack(self, flat) -> dict:
        if flat.shape != (self.n_params,):
            raise InvalidParameterError(
                f"expected {self.n_params} parameters, got shape {flat.shape}")
        return {k: flat[s].reshape(shape) for k, (s, shape) in self._slices.items()}

    def init(self, rng: np.random.Generator) -> np.ndarray:
        """Random recurrent weights; output head zeroed so the prior is uniform."""
        flat = np.zeros(self.n_params, dtype=self.dtype)
        p = self.unpack(flat)
        p["E"][:] = rng.normal(0.0, 0.5, p["E"].shape)
        p["Wx"][:] = rng.normal(0.0, 1.0 / np.sqrt(self.embed), p["Wx"].shape)
        p["Uzr"][:] = rng.normal(0.0, 1.0 / np.sqrt(self.hidden), p["Uzr"].shape)
        p["Un"][:] = rng.normal(0.0, 1.0 / np.sqrt(self.hidden), p["Un"].shape)
        return flat

    def cell(self, p, h, x):
        """One GRU step; returns the new state and the gate values."""
        H = self.hidden
        a = x @ p["Wx"] + p["b"]
        zr = _sigmoid(a[:, :2 * H] + h @ p["Uzr"])
        z, r = zr[:, :H], zr[:, H:]
        rh = r * h
        n = np.tanh(a[:, 2 * H:] + rh @ p["Un"])
        return (1.0 - z) * n + z * h, (z, r, n, rh)

    def encode(self, flat, ids, keep=False):
        ids = np.atleast_2d(np.asarray(ids, dtype=np.int64))
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab):
            raise InvalidParameterError("content id outside vocabulary")
        p = self.unpack(flat)
        B, T = ids.shape
        h = np.zeros((B, self.hidden), dtype=self.dtype)
        trace = []
        for t in range(T):
            x = p["E"][ids[:, t]]
            h_new, gates = self.cell(p, h, x)
            if keep:
                trace.append((h, x, gates))
            h = h_new
        return (h, trace, p, ids) if keep else h

    def logits(self, flat, ids):
        p = self.unpack(flat)
        return self.encode(flat, ids) @ p["Wo"] + p["bo"]

    def predict(self, flat, ids, temperature: float = 1.0):
        return softmax(self.logits(flat, ids), temperature)

    def loss_and_grad(self, flat, ids, targets):
        """Mean cross-entropy of predicting ``targets`` from each sequence."""
        h, trace, p, ids = self.encode(flat, ids, keep=True)
        B = ids.shape[0]
        targets = np.asarray(targets, dtype=np.int64)
        logits = h @ p["Wo"] + p["bo"]
        probs = softmax(logits)
        picked = probs[np.arange(B), targets].astype(np.float64)
        loss = float(-np.mean(np.log(np.maximum(picked, 1e-30))))

        grad = np.zeros_like(flat)
        g = self.unpack(grad)
        dlogits = probs.copy()
        dlogits[np.arange(B), targets] -= 1.0
        dlogits /= B
        g["Wo"][:] = h.T @ dlogits
        g["bo"][:] = dlogits.sum(axis=0)
        dh = dlogits @ p["Wo"].T
        H = self.hidden
        for t in range(len(trace) - 1, -1, -1):
            h_prev, x, (z, r, n, rh) = trace[t]
            dn = dh * (1.0 - z)
            dz = dh * (h_prev - n)
            dh_prev = dh * z
            dan = dn * (1.0 - n * n)
            g["Un"] += rh.T @ dan
            drh = dan @ p["Un"].T
            dr = drh * h_prev
            dh_prev += drh * r
            dazr = np.concatenate([dz * z * (1.0 - z), dr * r * (1.0 - r)], axis=1)
            g["Uzr"] += h_prev.T @ dazr
            dh_prev += dazr @ p["Uzr"].T
            da = np.concatenate([dazr, dan], axis=1)
            g["Wx"] += x.T @ da
            g["b"] += da.sum(axis=0)
            np.add.at(g["E"], ids[:, t], da @ p["Wx"].T)
            dh = dh_prev
        return loss, grad
