"""Minimal numpy LSTM encoder with manual backprop.

Only the final hidden state is consumed downstream, so backward takes a
single gradient for h_T and walks the cached steps in reverse. Gate order
inside the stacked weight matrices is input, forget, output, candidate.
"""

from __future__ import annotations

import numpy as np


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


class LSTM:
    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator,
                 init_scale: float = 0.1):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.Wx = rng.normal(0.0, init_scale, size=(input_dim, 4 * hidden_dim))
        self.Wh = rng.normal(0.0, init_scale, size=(hidden_dim, 4 * hidden_dim))
        self.b = np.zeros(4 * hidden_dim)

    def param_dict(self) -> dict[str, np.ndarray]:
        return {"Wx": self.Wx, "Wh": self.Wh, "b": self.b}

    def forward(self, xs: list[np.ndarray]) -> tuple[np.ndarray, list]:
        """Run over a sequence of input vectors; returns (h_T, cache).

        An empty sequence yields the zero initial state.
        """
        H = self.hidden_dim
        h = np.zeros(H)
        c = np.zeros(H)
        cache = []
        for x in xs:
            z = x @ self.Wx + h @ self.Wh + self.b
            i = _sigmoid(z[:H])
            f = _sigmoid(z[H:2 * H])
            o = _sigmoid(z[2 * H:3 * H])
            g = np.tanh(z[3 * H:])
            c_next = f * c + i * g
            h_next = o * np.tanh(c_next)
            cache.append((x, h, c, i, f, o, g, c_next))
            h, c = h_next, c_next
        return h, cache

    def backward(self, dh_last: np.ndarray, cache: list,
                 ) -> tuple[dict[str, np.ndarray], list[np.ndarray]]:
        """Gradients w.r.t. parameters and every input vector."""
        H = self.hidden_dim
        dWx = np.zeros_like(self.Wx)
        dWh = np.zeros_like(self.Wh)
        db = np.zeros_like(self.b)
        dxs: list[np.ndarray] = [None] * len(cache)
        dh = dh_last.copy()
        dc = np.zeros(H)
        for t in range(len(cache) - 1, -1, -1):
            x, h_prev, c_prev, i, f, o, g, c_next = cache[t]
            tanh_c = np.tanh(c_next)
            do = dh * tanh_c
            dc = dc + dh * o * (1 - tanh_c ** 2)
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dz = np.concatenate([
                di * i * (1 - i),
                df * f * (1 - f),
                do * o * (1 - o),
                dg * (1 - g ** 2),
            ])
            dWx += np.outer(x, dz)
            dWh += np.outer(h_prev, dz)
            db += dz
            dxs[t] = dz @ self.Wx.T
            dh = dz @ self.Wh.T
            dc = dc * f
        return {"Wx": dWx, "Wh": dWh, "b": db}, dxs
