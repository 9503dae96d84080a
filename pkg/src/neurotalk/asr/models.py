"""Model definitions for the CTC, attention and transducer recognisers."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from ..core import tensor as nt
from ..core.nn import dense_forward, gru_sequence, lstm_sequence, lstm_step_np
from ..core.params import (ParameterStore, add_dense, add_gru, add_lstm, glorot,
                           load_checkpoint, make_rng, save_checkpoint)
from ..core.tensor import Tensor
from ..features import FeatureSequence
from . import attention, ctc, rnnt
from .ctc import Hypothesis
from .vocab import Vocabulary

KINDS = ("ctc", "attention", "rnnt")

_DEFAULTS = {
    "ctc": dict(hidden=128, dec_hidden=0, epochs=800, optimizer="adam", lr=1e-3),
    "attention": dict(hidden=512, dec_hidden=512, epochs=150, optimizer="adam", lr=1e-3),
    "rnnt": dict(hidden=128, dec_hidden=128, epochs=200, optimizer="sgd", lr=1e-2),
}


@dataclass
class AsrConfig:
    kind: str
    hidden: int
    dec_hidden: int
    epochs: int
    optimizer: str
    lr: float
    beam: int = 4
    emb_dim: int = 32
    att_dim: int = 64  # attention scoring size
    joint_dim: int = 64  # transducer joint size
    max_len: int = 20  # attention decoding limit in tokens
    scoring: str = "additive"
    clip_norm: float = 5.0
    checkpoint_every: int = 0  # epochs between checkpoints; 0 disables

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        sizes = [self.hidden, self.emb_dim, self.att_dim, self.joint_dim, self.max_len]
        if self.kind != "ctc":
            sizes.append(self.dec_hidden)
        if min(sizes) < 1:
            raise ValueError("layer sizes and max_len must be positive")
        if self.beam < 1:
            raise ValueError("beam must be >= 1")
        if self.epochs < 0 or self.lr <= 0:
            raise ValueError("epochs must be >= 0 and lr > 0")

    @classmethod
    def for_kind(cls, kind: str, **overrides) -> "AsrConfig":
        if kind not in _DEFAULTS:
            raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")
        return cls(kind=kind, **{**_DEFAULTS[kind], **overrides})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AsrConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown ASR config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Utterance:
    utt_id: str
    features: FeatureSequence
    transcript: tuple[int, ...]
    subject: int = 0
    condition: str = "spoken"
    text: str = ""

    def __post_init__(self):
        if len(self.features) < 1:
            raise ValueError(f"{self.utt_id}: no feature frames")
        if len(self.transcript) < 1:
            raise ValueError(f"{self.utt_id}: empty transcript")


@dataclass
class AsrModel:
    config: AsrConfig
    vocab: Vocabulary
    in_dim: int
    store: ParameterStore = field(default_factory=ParameterStore)

    # -- construction ------------------------------------------------------

    @classmethod
    def init(cls, config: AsrConfig, vocab: Vocabulary, in_dim: int, rng) -> "AsrModel":
        expect = "word" if config.kind == "attention" else "char"
        if vocab.mode != expect:
            raise ValueError(f"{config.kind} model needs a {expect} vocabulary, got {vocab.mode}")
        m = cls(config, vocab, in_dim)
        s, c, V = m.store, config, len(vocab)
        if c.kind == "ctc":
            add_gru(s, rng, "enc", in_dim, c.hidden)
            add_dense(s, rng, "out", c.hidden, V)
        elif c.kind == "attention":
            add_gru(s, rng, "enc", in_dim, c.hidden)
            s.add("dec/emb", rng.normal(0.0, 0.1, size=(V, c.emb_dim)))
            add_gru(s, rng, "dec/gru", c.emb_dim + c.hidden, c.dec_hidden)
            s.add("dec/W_e", glorot(rng, c.hidden, c.att_dim))
            s.add("dec/W_d", glorot(rng, c.dec_hidden, c.att_dim))
            s.add("dec/v", glorot(rng, c.att_dim, 1, shape=(c.att_dim,)))
            add_dense(s, rng, "dec/out", c.dec_hidden + c.hidden, V)
        else:
            add_lstm(s, rng, "enc", in_dim, c.hidden)
            s.add("pred/emb", rng.normal(0.0, 0.1, size=(V, c.emb_dim)))
            add_lstm(s, rng, "pred/lstm", c.emb_dim, c.dec_hidden)
            s.add("joint/W_f", glorot(rng, c.hidden, c.joint_dim))
            s.add("joint/W_g", glorot(rng, c.dec_hidden, c.joint_dim))
            s.add("joint/b", np.zeros(c.joint_dim))
            s.add("joint/W_o", glorot(rng, c.joint_dim, V))
            s.add("joint/b_o", np.zeros(V))
        return m

    # -- forward -----------------------------------------------------------

    def _check_input(self, x) -> Tensor:
        frames = np.asarray(getattr(x, "frames", x), dtype=np.float64)
        if frames.ndim != 2 or frames.shape[1] != self.in_dim or frames.shape[0] < 1:
            raise ValueError(f"expected features (T, {self.in_dim}), got {frames.shape}")
        return Tensor(frames)

    def encode(self, x) -> Tensor:
        """Encoder states, one per feature frame."""
        x = self._check_input(x)
        e = self.store.scope("enc")
        seq = gru_sequence if self.config.kind in ("ctc", "attention") else lstm_sequence
        return seq(x, e["W_x"], e["W_h"], e["b"])

    def ctc_logits(self, x) -> Tensor:
        out = self.store.scope("out")
        return dense_forward(self.encode(x), out["W"], out["b"])

    def predictor(self, labels: Sequence[int]) -> Tensor:
        """Prediction-network outputs (U+1, H) for the start state and each label."""
        p = self.store.scope("pred")
        emb = p["emb"]
        rows = [Tensor(np.zeros(emb.shape[1]))] + [emb[k] for k in labels]
        return lstm_sequence(nt.stack(rows), p["lstm/W_x"], p["lstm/W_h"], p["lstm/b"])

    def loss(self, utt_or_x, transcript: Sequence[int] | None = None) -> Tensor:
        if transcript is None:
            x, transcript = utt_or_x.features, utt_or_x.transcript
        else:
            x = utt_or_x
        kind = self.config.kind
        if kind == "ctc":
            return ctc.ctc_loss(self.ctc_logits(x), transcript, self.vocab.blank)
        if kind == "attention":
            return attention.attention_teacher_forced_loss(
                self.encode(x), transcript, self.store.scope("dec"), self.vocab.start,
                self.vocab.end, self.config.scoring)
        return rnnt.rnnt_loss(self.encode(x), self.predictor(transcript), transcript,
                              self.store.scope("joint"), self.vocab.blank)

    # -- decoding ----------------------------------------------------------

    def decode(self, x, beam: int | None = None) -> Hypothesis:
        beam = self.config.beam if beam is None else beam
        kind = self.config.kind
        if kind == "ctc":
            return ctc.ctc_beam_search(self.ctc_logits(x).data, beam, self.vocab.blank)
        if kind == "attention":
            return attention.attention_beam_decode(
                self.encode(x), self.store.scope("dec"), beam, self.config.max_len,
                self.vocab.start, self.vocab.end, self.config.scoring)
        enc = self.encode(x).data
        joint = self.store.scope("joint")
        return rnnt.rnnt_beam_search(enc, self.prefix_predictor(),
                                     lambda f, g: rnnt.joint_np(f, g, joint), beam,
                                     self.vocab.blank)

    def prefix_predictor(self):
        """Cached numpy prediction network: prefix -> output for that prefix."""
        p = self.store.scope("pred")
        emb, w_x, w_h, b = (p[k].data for k in ("emb", "lstm/W_x", "lstm/W_h", "lstm/b"))
        H = w_h.shape[0]
        cache: dict[tuple[int, ...], tuple[np.ndarray, np.ndarray]] = {}

        def state(prefix):
            if prefix not in cache:
                if prefix:
                    h, c = state(prefix[:-1])
                    xin = emb[prefix[-1]]
                else:
                    h, c = np.zeros(H), np.zeros(H)
                    xin = np.zeros(emb.shape[1])
                cache[prefix] = lstm_step_np(xin @ w_x + b, h, c, w_h)
            return cache[prefix]

        return lambda prefix: state(tuple(prefix))[0]

    def transcribe(self, x, beam: int | None = None) -> tuple[str, float]:
        hyp = self.decode(x, beam)
        return self.vocab.decode(hyp.tokens), hyp.log_score

    # -- persistence -------------------------------------------------------

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_checkpoint(d / "model.ntck", self.store)
        meta = {"config": self.config.to_dict(), "in_dim": self.in_dim,
                "vocab": self.vocab.to_lines()}
        (d / "model.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory) -> "AsrModel":
        d = Path(directory)
        meta = json.loads((d / "model.json").read_text())
        store, _ = load_checkpoint(d / "model.ntck")
        return cls(AsrConfig.from_dict(meta["config"]), Vocabulary.from_lines(meta["vocab"]),
                   int(meta["in_dim"]), store)


def new_model(config: AsrConfig, vocab: Vocabulary, in_dim: int, seed: int) -> AsrModel:
    return AsrModel.init(config, vocab, in_dim, make_rng(seed))
