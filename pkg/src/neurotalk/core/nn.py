"""Layers and recurrent cells.

Two flavours of recurrence live here. ``gru_cell_forward`` /
``lstm_cell_forward`` are composed from tape primitives and are used for
single decoder steps. ``gru_sequence`` / ``lstm_sequence`` unroll a whole
sequence as one tape node with hand-written BPTT; they are the fast path for
encoders and are tested against the composed cells.
"""

from __future__ import annotations

import numpy as np

from . import tensor as nt
from .tensor import DimensionError, Tensor, make


def sigmoid_np(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def dense_forward(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = xW + b."""
    if x.shape[-1] != w.shape[0] or w.shape[1:] != b.shape:
        raise DimensionError(
            f"dense: x{x.shape} @ W{w.shape} + b{b.shape} has mismatched extents")
    return nt.add(nt.matmul(x, w), b)


def _check_recurrent(x: Tensor, w_x: Tensor, w_h: Tensor, b: Tensor, gates: int) -> int:
    hidden = w_h.shape[0]
    if (w_x.ndim != 2 or w_x.shape[1] != gates * hidden or w_h.shape != (hidden, gates * hidden)
            or b.shape != (gates * hidden,) or x.shape[-1] != w_x.shape[0]):
        raise DimensionError(
            f"recurrent params inconsistent: x{x.shape} W_x{w_x.shape} W_h{w_h.shape} b{b.shape}")
    return hidden


# -- composed cells ------------------------------------------------------------


def gru_cell_forward(x_t: Tensor, h_prev: Tensor, params: dict[str, Tensor]) -> Tensor:
    """One GRU step. ``params`` has ``W_x`` (d,3H), ``W_h`` (H,3H), ``b`` (3H).

    Gate layout is [update | reset | candidate]; h = z*h_prev + (1-z)*n.
    """
    w_x, w_h, b = params["W_x"], params["W_h"], params["b"]
    H = _check_recurrent(x_t, w_x, w_h, b, 3)
    xp = nt.add(nt.matmul(x_t, w_x), b)
    hp = nt.matmul(h_prev, w_h[:, : 2 * H])
    z = nt.sigmoid(xp[..., :H] + hp[..., :H])
    r = nt.sigmoid(xp[..., H: 2 * H] + hp[..., H:])
    n = nt.tanh(xp[..., 2 * H:] + nt.matmul(r * h_prev, w_h[:, 2 * H:]))
    return z * h_prev + (1.0 - z) * n


def lstm_cell_forward(x_t: Tensor, h_prev: Tensor, c_prev: Tensor,
                      params: dict[str, Tensor]) -> tuple[Tensor, Tensor]:
    """One LSTM step with gate layout [input | forget | cell | output]."""
    w_x, w_h, b = params["W_x"], params["W_h"], params["b"]
    H = _check_recurrent(x_t, w_x, w_h, b, 4)
    a = nt.add(nt.add(nt.matmul(x_t, w_x), nt.matmul(h_prev, w_h)), b)
    i = nt.sigmoid(a[..., :H])
    f = nt.sigmoid(a[..., H: 2 * H])
    g = nt.tanh(a[..., 2 * H: 3 * H])
    o = nt.sigmoid(a[..., 3 * H:])
    c = f * c_prev + i * g
    h = o * nt.tanh(c)
    return h, c


# -- numpy single steps (inference) --------------------------------------------


def gru_step_np(xp: np.ndarray, h: np.ndarray, w_h: np.ndarray) -> np.ndarray:
    """GRU step given the precomputed input projection ``x W_x + b``."""
    H = h.shape[-1]
    hp = h @ w_h[:, : 2 * H]
    z = sigmoid_np(xp[..., :H] + hp[..., :H])
    r = sigmoid_np(xp[..., H: 2 * H] + hp[..., H:])
    n = np.tanh(xp[..., 2 * H:] + (r * h) @ w_h[:, 2 * H:])
    return z * h + (1.0 - z) * n


def lstm_step_np(xp: np.ndarray, h: np.ndarray, c: np.ndarray,
                 w_h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    H = h.shape[-1]
    a = xp + h @ w_h
    i = sigmoid_np(a[..., :H])
    f = sigmoid_np(a[..., H: 2 * H])
    g = np.tanh(a[..., 2 * H: 3 * H])
    o = sigmoid_np(a[..., 3 * H:])
    c = f * c + i * g
    return o * np.tanh(c), c


# -- fused sequences -----------------------------------------------------------


def gru_sequence(x: Tensor, w_x: Tensor, w_h: Tensor, b: Tensor) -> Tensor:
    """Run a GRU over ``x`` (T, d) from a zero state; returns all states (T, H)."""
    H = _check_recurrent(x, w_x, w_h, b, 3)
    T = x.shape[0]
    X, Wx, Wh = x.data, w_x.data, w_h.data
    xp = X @ Wx + b.data
    hs = np.zeros((T + 1, H))
    zs = np.empty((T, H))
    rs = np.empty((T, H))
    ns = np.empty((T, H))
    Uzr, Un = Wh[:, : 2 * H], Wh[:, 2 * H:]
    for t in range(T):
        h = hs[t]
        hp = h @ Uzr
        z = sigmoid_np(xp[t, :H] + hp[:H])
        r = sigmoid_np(xp[t, H: 2 * H] + hp[H:])
        n = np.tanh(xp[t, 2 * H:] + (r * h) @ Un)
        hs[t + 1] = z * h + (1.0 - z) * n
        zs[t], rs[t], ns[t] = z, r, n

    def bw(g):
        dxp = np.empty((T, 3 * H))
        dWh = np.zeros_like(Wh)
        dh = np.zeros(H)
        for t in range(T - 1, -1, -1):
            dh = dh + g[t]
            h, z, r, n = hs[t], zs[t], rs[t], ns[t]
            dz = dh * (h - n)
            dn = dh * (1.0 - z)
            dh_prev = dh * z
            dan = dn * (1.0 - n * n)
            rh = r * h
            dWh[:, 2 * H:] += np.outer(rh, dan)
            drh = Un @ dan
            dr = drh * h
            dh_prev += drh * r
            daz = dz * z * (1.0 - z)
            dar = dr * r * (1.0 - r)
            dzr = np.concatenate([daz, dar])
            dWh[:, : 2 * H] += np.outer(h, dzr)
            dh_prev += Uzr @ dzr
            dxp[t, :H], dxp[t, H: 2 * H], dxp[t, 2 * H:] = daz, dar, dan
            dh = dh_prev
        return dxp @ Wx.T, X.T @ dxp, dWh, dxp.sum(axis=0)

    return make(hs[1:].copy(), (x, w_x, w_h, b), bw)


def lstm_sequence(x: Tensor, w_x: Tensor, w_h: Tensor, b: Tensor) -> Tensor:
    """Run an LSTM over ``x`` (T, d) from zero state; returns hidden states (T, H)."""
    H = _check_recurrent(x, w_x, w_h, b, 4)
    T = x.shape[0]
    X, Wx, Wh = x.data, w_x.data, w_h.data
    xp = X @ Wx + b.data
    hs = np.zeros((T + 1, H))
    cs = np.zeros((T + 1, H))
    gates = np.empty((T, 4 * H))
    for t in range(T):
        a = xp[t] + hs[t] @ Wh
        i = sigmoid_np(a[:H])
        f = sigmoid_np(a[H: 2 * H])
        gg = np.tanh(a[2 * H: 3 * H])
        o = sigmoid_np(a[3 * H:])
        cs[t + 1] = f * cs[t] + i * gg
        hs[t + 1] = o * np.tanh(cs[t + 1])
        gates[t] = np.concatenate([i, f, gg, o])

    def bw(g):
        da_all = np.empty((T, 4 * H))
        dh = np.zeros(H)
        dc = np.zeros(H)
        for t in range(T - 1, -1, -1):
            dh = dh + g[t]
            i, f, gg, o = (gates[t, k * H:(k + 1) * H] for k in range(4))
            tc = np.tanh(cs[t + 1])
            do = dh * tc
            dct = dc + dh * o * (1.0 - tc * tc)
            da = np.concatenate([
                dct * gg * i * (1.0 - i),
                dct * cs[t] * f * (1.0 - f),
                dct * i * (1.0 - gg * gg),
                do * o * (1.0 - o),
            ])
            da_all[t] = da
            dc = dct * f
            dh = Wh @ da
        dWh = hs[:-1].T @ da_all
        return da_all @ Wx.T, X.T @ da_all, dWh, da_all.sum(axis=0)

    return make(hs[1:].copy(), (x, w_x, w_h, b), bw)
