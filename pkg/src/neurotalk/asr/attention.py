"""Additive-attention GRU decoder: attention step, teacher forcing, beam search."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from ..core import tensor as nt
from ..core.nn import gru_cell_forward
from ..core.tensor import Tensor
from .ctc import Hypothesis

SCORING = ("additive", "dot")


def attention_step(enc: Tensor, dec_state: Tensor, params: Mapping[str, Tensor],
                   enc_proj: Tensor | None = None, scoring: str = "additive"):
    """Return (context, weights) for one decoder step.

    Additive scoring: e_t = v . tanh(W_e h_t + W_d d). ``enc_proj`` may carry a
    precomputed ``enc @ W_e`` so a decoder loop projects the encoder once.
    The dot variant scores e_t = h_t . d and needs equal encoder and decoder
    sizes.
    """
    if enc.shape[0] < 1:
        raise ValueError("attention over an empty encoder sequence")
    if scoring == "additive":
        if enc_proj is None:
            enc_proj = nt.matmul(enc, params["W_e"])
        e = nt.matmul(nt.tanh(enc_proj + nt.matmul(dec_state, params["W_d"])), params["v"])
    elif scoring == "dot":
        e = nt.matmul(enc, dec_state)
    else:
        raise ValueError(f"unknown attention scoring {scoring!r}")
    w = nt.softmax(e)
    return nt.matmul(w, enc), w


class AttentionDecoder:
    """Decoder state machine shared by training and inference.

    Parameters (under the scope given to the constructor):
    ``emb`` (W, E), ``gru/*`` taking [emb; context], ``W_e``, ``W_d``, ``v``,
    and ``out/W``, ``out/b`` mapping [state; context] to W logits.
    """

    def __init__(self, params: Mapping[str, Tensor], enc: Tensor, scoring: str = "additive"):
        self.p = params
        self.enc = enc
        self.scoring = scoring
        self.enc_proj = nt.matmul(enc, params["W_e"]) if scoring == "additive" else None
        self.hidden = params["gru/W_h"].shape[0]
        self.gru = {"W_x": params["gru/W_x"], "W_h": params["gru/W_h"], "b": params["gru/b"]}

    def initial_state(self) -> Tensor:
        return Tensor(np.zeros(self.hidden))

    def step(self, prev_token: int, state: Tensor):
        """Consume ``prev_token``; return (log-probs over W, new state, weights)."""
        if not 0 <= prev_token < self.p["emb"].shape[0]:
            raise ValueError(f"token id {prev_token} outside the vocabulary")
        ctx, w = attention_step(self.enc, state, self.p, self.enc_proj, self.scoring)
        x = nt.concat([self.p["emb"][prev_token], ctx])
        new = gru_cell_forward(x, state, self.gru)
        logits = nt.matmul(nt.concat([new, ctx]), self.p["out/W"]) + self.p["out/b"]
        return nt.log_softmax(logits), new, w


def attention_teacher_forced_loss(enc: Tensor, transcript: Sequence[int], params,
                                  start: int, end: int, scoring: str = "additive") -> Tensor:
    """Mean token cross-entropy with the gold previous token fed at each step."""
    dec = AttentionDecoder(params, enc, scoring)
    inputs = [start, *transcript]
    targets = [*transcript, end]
    state = dec.initial_state()
    total = None
    for prev, gold in zip(inputs, targets):
        if not 0 <= gold < params["emb"].shape[0]:
            raise ValueError(f"token id {gold} outside the vocabulary")
        logp, state, _ = dec.step(prev, state)
        term = -logp[gold]
        total = term if total is None else total + term
    return total / float(len(targets))


def attention_beam_decode(enc: Tensor, params, beam: int, max_len: int, start: int, end: int,
                          scoring: str = "additive") -> Hypothesis:
    """Length-normalised beam search.

    A hypothesis finishes when it emits the end token or reaches ``max_len``
    tokens (the end token counts). Candidates are pruned on cumulative
    log-probability; finished ones are ranked by log-probability per token.
    The start token is never emitted. The returned tokens exclude the end
    token; ``log_score`` is the normalised score.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    if beam < 1:
        raise ValueError("beam must be >= 1")
    dec = AttentionDecoder(params, enc, scoring)
    live = [((), 0.0, dec.initial_state(), start)]
    finished: list[tuple[float, tuple[int, ...]]] = []
    for length in range(1, max_len + 1):
        cands = []
        for tokens, score, state, prev in live:
            logp, new, _ = dec.step(prev, state)
            lp = logp.data
            for k in range(lp.size):
                if k != start:
                    cands.append((score + float(lp[k]), tokens + (k,), new))
        cands.sort(key=lambda c: (-c[0], c[1]))
        live = []
        for score, tokens, new in cands[:beam]:
            if tokens[-1] == end or length == max_len:
                finished.append((score / length, tokens))
            else:
                live.append((tokens, score, new, tokens[-1]))
        if not live:
            break
    norm, tokens = min(finished, key=lambda f: (-f[0], f[1]))
    if tokens and tokens[-1] == end:
        tokens = tokens[:-1]
    return Hypothesis(tokens, float(norm))


def attention_greedy(enc: Tensor, params, max_len: int, start: int, end: int,
                     scoring: str = "additive") -> Hypothesis:
    dec = AttentionDecoder(params, enc, scoring)
    state, prev, out, score = dec.initial_state(), start, [], 0.0
    for _ in range(max_len):
        logp, state, _ = dec.step(prev, state)
        lp = logp.data.copy()
        lp[start] = -np.inf
        k = int(np.argmax(lp))
        score += float(lp[k])
        out.append(k)
        if k == end:
            break
        prev = k
    n = len(out)
    if out[-1] == end:
        out = out[:-1]
    return Hypothesis(tuple(out), score / n)

