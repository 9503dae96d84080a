"""CTC loss (log-space forward-backward) and prefix beam search."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core.tensor import Tensor, _check_finite, log_softmax_np, make


class InfeasibleAlignmentError(ValueError):
    """The label cannot be aligned to the number of frames available."""


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[int, ...]
    log_score: float


def min_frames(labels: Sequence[int]) -> int:
    """Frames needed for ``labels``: one per label plus a blank between repeats."""
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def _extended(labels: Sequence[int], blank: int) -> np.ndarray:
    ext = np.full(2 * len(labels) + 1, blank, dtype=np.int64)
    ext[1::2] = labels
    return ext


def _skip_allowed(ext: np.ndarray, blank: int) -> np.ndarray:
    """s may be reached from s-2 when ext[s] is a label differing from ext[s-2]."""
    ok = np.zeros(ext.size, dtype=bool)
    ok[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])
    return ok


def ctc_forward_backward(logp: np.ndarray, labels: Sequence[int], blank: int = 0):
    """Return (log Z, log alpha, log beta) for per-frame log-probabilities (T, V+1).

    Both alpha and beta include the emission of frame t.
    """
    T = logp.shape[0]
    labels = list(labels)
    if blank in labels:
        raise ValueError("labels must not contain the blank id")
    if T < min_frames(labels):
        raise InfeasibleAlignmentError(
            f"{T} frames cannot align a label of length {len(labels)} "
            f"(needs {min_frames(labels)})")
    ext = _extended(labels, blank)
    S = ext.size
    skip = _skip_allowed(ext, blank)
    emit = logp[:, ext]  # (T, S)
    la = np.full((T, S), -np.inf)
    la[0, 0] = emit[0, 0]
    if S > 1:
        la[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = la[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        acc[skip] = np.logaddexp(acc[skip], prev[np.flatnonzero(skip) - 2])
        la[t] = acc + emit[t]
    lb = np.full((T, S), -np.inf)
    lb[T - 1, S - 1] = emit[T - 1, S - 1]
    if S > 1:
        lb[T - 1, S - 2] = emit[T - 1, S - 2]
    skip_from = np.zeros(S, dtype=bool)  # s can jump to s+2
    skip_from[:-2] = skip[2:]
    for t in range(T - 2, -1, -1):
        nxt = lb[t + 1]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        idx = np.flatnonzero(skip_from)
        acc[idx] = np.logaddexp(acc[idx], nxt[idx + 2])
        lb[t] = acc + emit[t]
    log_z = la[T - 1, S - 1] if S == 1 else np.logaddexp(la[T - 1, S - 1], la[T - 1, S - 2])
    return float(log_z), la, lb


def ctc_loss(logits: Tensor, labels: Sequence[int], blank: int = 0) -> Tensor:
    """-log P(labels | logits) summed over all CTC alignments; logits are (T, V+1)."""
    _check_finite(logits.data, "ctc_loss")
    logp = log_softmax_np(logits.data, axis=-1)
    log_z, la, lb = ctc_forward_backward(logp, labels, blank)
    ext = _extended(list(labels), blank)

    def bw(g):
        # occupancy of each extended state, folded onto the vocabulary
        occ = np.exp(la + lb - logp[:, ext] - log_z)
        post = np.zeros_like(logp)
        np.add.at(post, (slice(None), ext), occ)
        return (g * (np.exp(logp) - post),)

    return make(np.array(-log_z), (logits,), bw)


# -- decoding ------------------------------------------------------------------


def greedy_decode(logp: np.ndarray, blank: int = 0) -> Hypothesis:
    best = np.argmax(logp, axis=-1)
    out, prev = [], blank
    for k in best:
        if k != blank and k != prev:
            out.append(int(k))
        prev = k
    return Hypothesis(tuple(out), float(np.sum(np.max(logp, axis=-1))))


def ctc_beam_search(logits: np.ndarray, beam_width: int, blank: int = 0) -> Hypothesis:
    """Prefix beam search over collapsed label strings.

    Each prefix carries two log masses: paths ending in blank and paths ending
    in its last label. Paths that collapse to the same prefix are merged, so
    with an unbounded beam the result is the most probable collapsed string.
    """
    if beam_width < 1:
        raise ValueError("beam width must be >= 1")
    logits = np.asarray(getattr(logits, "data", logits), dtype=np.float64)
    logp = log_softmax_np(logits, axis=-1)
    V = logp.shape[1]
    beams: dict[tuple[int, ...], tuple[float, float]] = {(): (0.0, -np.inf)}
    for t in range(logp.shape[0]):
        lp = logp[t]
        nxt: dict[tuple[int, ...], list[float]] = {}

        def add(prefix, pb, pnb):
            cur = nxt.setdefault(prefix, [-np.inf, -np.inf])
            cur[0] = np.logaddexp(cur[0], pb)
            cur[1] = np.logaddexp(cur[1], pnb)

        for prefix, (pb, pnb) in beams.items():
            total = np.logaddexp(pb, pnb)
            add(prefix, total + lp[blank], -np.inf)
            last = prefix[-1] if prefix else None
            for k in range(V):
                if k == blank:
                    continue
                if k == last:
                    # repeat without a blank collapses; after a blank it extends
                    add(prefix, -np.inf, pnb + lp[k])
                    add(prefix + (k,), -np.inf, pb + lp[k])
                else:
                    add(prefix + (k,), -np.inf, total + lp[k])
        ranked = sorted(nxt.items(), key=lambda kv: (-np.logaddexp(*kv[1]), kv[0]))
        beams = {p: (v[0], v[1]) for p, v in ranked[:beam_width]}
    prefix, (pb, pnb) = min(beams.items(), key=lambda kv: (-np.logaddexp(*kv[1]), kv[0]))
    return Hypothesis(prefix, float(np.logaddexp(pb, pnb)))
