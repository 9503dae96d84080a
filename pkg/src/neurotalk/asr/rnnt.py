"""RNN transducer: joint network, lattice loss and time-synchronous beam search."""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from ..core import tensor as nt
from ..core.tensor import Tensor, _check_finite, log_softmax_np, make
from .ctc import Hypothesis


def rnnt_joint(enc: Tensor, pred: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    """Logits (T, U+1, V+1) = tanh(f W_f + g W_g + b) W_o + b_o."""
    fp = nt.matmul(enc, params["W_f"])  # (T, J)
    gp = nt.matmul(pred, params["W_g"])  # (U+1, J)
    T, J = fp.shape
    U1 = gp.shape[0]
    z = nt.tanh(nt.reshape(fp, (T, 1, J)) + nt.reshape(gp, (1, U1, J)) + params["b"])
    return nt.matmul(z, params["W_o"]) + params["b_o"]


def joint_np(f: np.ndarray, g: np.ndarray, params: Mapping[str, Tensor]) -> np.ndarray:
    """Log-probabilities over V+1 for one encoder frame and one predictor output."""
    z = np.tanh(f @ params["W_f"].data + g @ params["W_g"].data + params["b"].data)
    return log_softmax_np(z @ params["W_o"].data + params["b_o"].data)


def lattice_alpha(logp: np.ndarray, labels: Sequence[int], blank: int = 0) -> np.ndarray:
    T, U1, _ = logp.shape
    a = np.full((T, U1), -np.inf)
    a[0, 0] = 0.0
    for t in range(T):
        for u in range(U1):
            if t == 0 and u == 0:
                continue
            stay = a[t - 1, u] + logp[t - 1, u, blank] if t > 0 else -np.inf
            emit = a[t, u - 1] + logp[t, u - 1, labels[u - 1]] if u > 0 else -np.inf
            a[t, u] = np.logaddexp(stay, emit)
    return a


def lattice_beta(logp: np.ndarray, labels: Sequence[int], blank: int = 0) -> np.ndarray:
    T, U1, _ = logp.shape
    b = np.full((T, U1), -np.inf)
    b[T - 1, U1 - 1] = logp[T - 1, U1 - 1, blank]
    for t in range(T - 1, -1, -1):
        for u in range(U1 - 1, -1, -1):
            if t == T - 1 and u == U1 - 1:
                continue
            stay = b[t + 1, u] + logp[t, u, blank] if t < T - 1 else -np.inf
            emit = b[t, u + 1] + logp[t, u, labels[u]] if u < U1 - 1 else -np.inf
            b[t, u] = np.logaddexp(stay, emit)
    return b


def rnnt_lattice_loss(logits: Tensor, labels: Sequence[int], blank: int = 0) -> Tensor:
    """-log P(labels) from joint logits (T, U+1, V+1) via the (t, u) lattice."""
    labels = list(labels)
    T, U1, V1 = logits.shape
    if T < 1:
        raise ValueError("transducer needs at least one encoder frame")
    if U1 != len(labels) + 1:
        raise ValueError(f"joint has {U1} label positions for a label of length {len(labels)}")
    if blank in labels:
        raise ValueError("labels must not contain the blank id")
    _check_finite(logits.data, "rnnt_loss")
    logp = log_softmax_np(logits.data, axis=-1)
    a = lattice_alpha(logp, labels, blank)
    b = lattice_beta(logp, labels, blank)
    log_z = float(b[0, 0])

    def bw(g):
        grad_lp = np.zeros_like(logp)
        nxt = np.full((T, U1), -np.inf)
        nxt[:-1] = b[1:]
        nxt[T - 1, U1 - 1] = 0.0
        grad_lp[:, :, blank] = -np.exp(a + logp[:, :, blank] + nxt - log_z)
        if labels:
            lab = np.asarray(labels)
            occ = -np.exp(a[:, :-1] + logp[:, np.arange(U1 - 1), lab] + b[:, 1:] - log_z)
            grad_lp[:, np.arange(U1 - 1), lab] += occ
        # through log_softmax
        gl = grad_lp - np.exp(logp) * grad_lp.sum(axis=-1, keepdims=True)
        return (g * gl,)

    return make(np.array(-log_z), (logits,), bw)


def rnnt_loss(enc: Tensor, pred: Tensor, labels: Sequence[int],
              params: Mapping[str, Tensor], blank: int = 0) -> Tensor:
    return rnnt_lattice_loss(rnnt_joint(enc, pred, params), labels, blank)


# -- decoding ------------------------------------------------------------------

PredictFn = Callable[[tuple[int, ...]], np.ndarray]


def rnnt_beam_search(enc: np.ndarray, predict: PredictFn, joint: Callable, beam: int,
                     blank: int = 0, max_symbols_per_frame: int = 4,
                     max_len: int | None = None) -> Hypothesis:
    """Time-synchronous transducer beam search with exact prefix merging.

    ``predict(prefix)`` returns the prediction-network output for a label
    prefix; ``joint(f, g)`` returns log-probabilities over V+1. Within a frame
    hypotheses either emit a blank (and wait for the next frame) or a label
    (and stay). After each sub-step the waiting and the still-active
    hypotheses are pruned together to ``beam``, so beam=1 is greedy decoding.
    Probability mass reaching the same prefix is summed, so with an unbounded
    beam the final scores are exact label-sequence marginals.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    carried: dict[tuple[int, ...], float] = {(): 0.0}
    for t in range(enc.shape[0]):
        f = enc[t]
        active = dict(carried)
        waiting: dict[tuple[int, ...], float] = {}
        for step in range(max_symbols_per_frame + 1):
            grown: dict[tuple[int, ...], float] = {}
            for prefix, score in active.items():
                lp = joint(f, predict(prefix))
                waiting[prefix] = np.logaddexp(waiting.get(prefix, -np.inf), score + lp[blank])
                if step == max_symbols_per_frame or (max_len is not None and len(prefix) >= max_len):
                    continue
                for k in range(lp.size):
                    if k == blank:
                        continue
                    key = prefix + (k,)
                    grown[key] = np.logaddexp(grown.get(key, -np.inf), score + lp[k])
            pool = [(s, 0, p) for p, s in waiting.items()] + [(s, 1, p) for p, s in grown.items()]
            pool.sort(key=lambda e: (-e[0], e[1], e[2]))
            kept = pool[:beam]
            waiting = {p: s for s, kind, p in kept if kind == 0}
            active = {p: s for s, kind, p in kept if kind == 1}
            if not active:
                break
        carried = waiting
    prefix, score = min(carried.items(), key=lambda kv: (-kv[1], kv[0]))
    return Hypothesis(prefix, float(score))


def rnnt_greedy(enc: np.ndarray, predict: PredictFn, joint: Callable, blank: int = 0,
                max_symbols_per_frame: int = 4) -> Hypothesis:
    prefix: tuple[int, ...] = ()
    score = 0.0
    for t in range(enc.shape[0]):
        for step in range(max_symbols_per_frame + 1):
            lp = joint(enc[t], predict(prefix))
            k = blank if step == max_symbols_per_frame else int(np.argmax(lp))
            score += float(lp[k])
            if k == blank:
                break
            prefix = prefix + (k,)
    return Hypothesis(prefix, score)
