"""EEG -> MFCC synthesis: LSTM regression, GAN and WGAN."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import tensor as nt
from .core.nn import dense_forward, lstm_sequence
from .core.params import (ParameterStore, adam_step, add_dense, add_lstm, clip_grad_norm,
                          load_checkpoint, make_rng, save_checkpoint)
from .core.tensor import Tape, Tensor
from .features import FeatureSequence
from .metrics import EvalReport, regression_report

MFCC_DIM = 13
LOG_CLAMP = 1e-12
MODES = ("regression", "gan", "wgan")


class UntrainedModelError(RuntimeError):
    pass


@dataclass
class SynthConfig:
    mode: str = "regression"
    hidden: int = 128
    layers: int = 2
    out_dim: int = MFCC_DIM
    epochs: int = 200
    lr: float = 1e-3
    clip_c: float = 0.01  # wgan critic clamp
    n_critic: int = 5  # critic updates per generator update (wgan)
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown synthesis mode {self.mode!r}; expected one of {MODES}")
        if self.out_dim != MFCC_DIM:
            raise ValueError(f"output dimension must be {MFCC_DIM}")
        if self.hidden < 1 or self.layers < 1 or self.epochs < 0 or self.lr <= 0:
            raise ValueError("hidden and layers must be >= 1, epochs >= 0, lr > 0")
        if self.mode == "wgan" and (self.clip_c <= 0 or self.n_critic < 1):
            raise ValueError("wgan needs clip_c > 0 and n_critic >= 1")

    @classmethod
    def for_mode(cls, mode: str, **overrides) -> "SynthConfig":
        epochs = 200 if mode == "regression" else 500
        return cls(**{"mode": mode, "epochs": epochs, **overrides})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown synthesis config keys: {sorted(unknown)}")
        return cls(**d)


def _frames(x) -> np.ndarray:
    return np.asarray(getattr(x, "frames", x), dtype=np.float64)


def _lstm(scope: dict, x: Tensor) -> Tensor:
    return lstm_sequence(x, scope["W_x"], scope["W_h"], scope["b"])


@dataclass
class SynthModel:
    config: SynthConfig
    in_dim: int
    gen: ParameterStore = field(default_factory=ParameterStore)
    disc: ParameterStore | None = None
    trained: bool = False

    @classmethod
    def init(cls, config: SynthConfig, in_dim: int, rng) -> "SynthModel":
        m = cls(config, in_dim)
        h = config.hidden
        for i in range(config.layers):
            add_lstm(m.gen, rng, f"gen/lstm{i}", in_dim if i == 0 else h, h)
        add_dense(m.gen, rng, "gen/out", h, config.out_dim)
        if config.mode != "regression":
            m.disc = ParameterStore()
            add_lstm(m.disc, rng, "disc/eeg", in_dim, h)
            add_lstm(m.disc, rng, "disc/mfcc", config.out_dim, h)
            add_lstm(m.disc, rng, "disc/joint", 2 * h, h)
            add_dense(m.disc, rng, "disc/out", h, 1)
        return m

    # -- forward -----------------------------------------------------------

    def _input(self, eeg) -> Tensor:
        x = _frames(eeg)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] != self.in_dim:
            raise ValueError(f"expected EEG features (T, {self.in_dim}), got {x.shape}")
        return Tensor(x)

    def generate(self, eeg, store: ParameterStore | None = None) -> Tensor:
        """Frame-synchronous MFCC prediction (T, 13)."""
        store = store or self.gen
        h = self._input(eeg) if not isinstance(eeg, Tensor) else eeg
        for i in range(self.config.layers):
            h = _lstm(store.scope(f"gen/lstm{i}"), h)
        out = store.scope("gen/out")
        return dense_forward(h, out["W"], out["b"])

    def discriminate(self, eeg, mfcc, store: ParameterStore | None = None) -> Tensor:
        """Probability (gan) or unbounded score (wgan) for an (EEG, MFCC) pair."""
        store = store or self.disc
        if store is None:
            raise ValueError("regression models have no discriminator")
        x = self._input(eeg) if not isinstance(eeg, Tensor) else eeg
        y = mfcc if isinstance(mfcc, Tensor) else Tensor(_frames(mfcc))
        if y.shape != (x.shape[0], self.config.out_dim):
            raise ValueError(f"frame mismatch: EEG {x.shape} vs MFCC {y.shape}")
        a = _lstm(store.scope("disc/eeg"), x)
        b = _lstm(store.scope("disc/mfcc"), y)
        j = _lstm(store.scope("disc/joint"), nt.concat([a, b], axis=1))
        out = store.scope("disc/out")
        score = dense_forward(j[-1], out["W"], out["b"])[0]
        return nt.sigmoid(score) if self.config.mode == "gan" else score

    # -- persistence -------------------------------------------------------

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_checkpoint(d / "generator.ntck", self.gen)
        if self.disc is not None:
            save_checkpoint(d / "discriminator.ntck", self.disc)
        meta = {"config": self.config.to_dict(), "in_dim": self.in_dim, "trained": self.trained}
        (d / "model.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory) -> "SynthModel":
        d = Path(directory)
        meta = json.loads((d / "model.json").read_text())
        config = SynthConfig.from_dict(meta["config"])
        gen, _ = load_checkpoint(d / "generator.ntck")
        disc = load_checkpoint(d / "discriminator.ntck")[0] if config.mode != "regression" else None
        return cls(config, int(meta["in_dim"]), gen, disc, bool(meta["trained"]))


# -- losses --------------------------------------------------------------------


def rmse_loss(pred: Tensor, target) -> Tensor:
    t = target if isinstance(target, Tensor) else Tensor(_frames(target))
    if pred.shape != t.shape:
        raise ValueError(f"prediction {pred.shape} and target {t.shape} are misaligned")
    return nt.sqrt(nt.mean(nt.square(pred - t)))


def _safe_log(p: Tensor) -> Tensor:
    return nt.log(nt.clip(p, LOG_CLAMP, None))


def gan_losses(p_real: Tensor, p_fake: Tensor) -> tuple[Tensor, Tensor]:
    """(generator loss -log P_f, discriminator loss -log P_s - log(1 - P_f))."""
    g = -_safe_log(p_fake)
    d = -_safe_log(p_real) - _safe_log(1.0 - p_fake)
    return g, d


def _update(store: ParameterStore, loss: Tensor, tape: Tape, config: SynthConfig) -> None:
    # the tape also reaches the other network's parameters; keep this store's only
    grads = tape.backward(loss, store)
    grads = {k: grads[k] for k in store.names()}
    grads, _ = clip_grad_norm(grads, config.clip_norm)
    adam_step(store, grads, config.lr)


def _check_pair(eeg, mfcc) -> None:
    if _frames(eeg).shape[0] != _frames(mfcc).shape[0]:
        raise ValueError(f"misaligned pair: {_frames(eeg).shape[0]} EEG frames vs "
                         f"{_frames(mfcc).shape[0]} MFCC frames")


def regression_step(model: SynthModel, eeg, mfcc) -> float:
    _check_pair(eeg, mfcc)
    with Tape() as tape:
        loss = rmse_loss(model.generate(eeg), mfcc)
    _update(model.gen, loss, tape, model.config)
    return loss.item()


def gan_train_step(model: SynthModel, eeg, mfcc) -> tuple[float, float]:
    """Discriminator update on (real, fake) pairs, then a generator update
    through the freshly updated, frozen discriminator."""
    if model.config.mode != "gan":
        raise ValueError("gan_train_step needs a model in gan mode")
    _check_pair(eeg, mfcc)
    fake = Tensor(model.generate(eeg).data)  # detached for the discriminator phase
    with Tape() as tape:
        _, d_loss = gan_losses(model.discriminate(eeg, mfcc), model.discriminate(eeg, fake))
    _update(model.disc, d_loss, tape, model.config)
    with Tape() as tape:
        p_fake = model.discriminate(eeg, model.generate(eeg))
        g_loss = -_safe_log(p_fake)
    _update(model.gen, g_loss, tape, model.config)
    return g_loss.item(), d_loss.item()


def clamp_store(store: ParameterStore, c: float) -> None:
    for name in store.names():
        store.set(name, np.clip(store[name].data, -c, c))


def wgan_train_step(model: SynthModel, eeg, mfcc) -> tuple[float, float]:
    """``n_critic`` clamped critic updates, then one generator update."""
    cfg = model.config
    if cfg.mode != "wgan":
        raise ValueError("wgan_train_step needs a model in wgan mode")
    if cfg.clip_c <= 0:
        raise ValueError("clip_c must be > 0")
    _check_pair(eeg, mfcc)
    fake = Tensor(model.generate(eeg).data)
    d_loss = None
    for _ in range(cfg.n_critic):
        with Tape() as tape:
            d_loss = model.discriminate(eeg, fake) - model.discriminate(eeg, mfcc)
        _update(model.disc, d_loss, tape, cfg)
        clamp_store(model.disc, cfg.clip_c)
    with Tape() as tape:
        g_loss = -model.discriminate(eeg, model.generate(eeg))
    _update(model.gen, g_loss, tape, cfg)
    return g_loss.item(), d_loss.item()


# -- training ------------------------------------------------------------------


@dataclass
class SynthTrainResult:
    model: SynthModel
    losses: list[float] = field(default_factory=list)  # regression RMSE or generator loss
    d_losses: list[float] = field(default_factory=list)


def train_synth(pairs: Sequence[tuple[object, object]], config: SynthConfig,
                seed: int = 0) -> SynthTrainResult:
    """Train on (eeg, mfcc) pairs; one update per utterance, seeded order."""
    if not pairs:
        raise ValueError("no training pairs")
    for eeg, mfcc in pairs:
        _check_pair(eeg, mfcc)
    rng = make_rng(seed)
    model = SynthModel.init(config, _frames(pairs[0][0]).shape[1], rng)
    res = SynthTrainResult(model)
    for _ in range(config.epochs):
        order = rng.permutation(len(pairs))
        g_tot = d_tot = 0.0
        for i in order:
            eeg, mfcc = pairs[i]
            if config.mode == "regression":
                g_tot += regression_step(model, eeg, mfcc)
            else:
                step = gan_train_step if config.mode == "gan" else wgan_train_step
                g, d = step(model, eeg, mfcc)
                g_tot, d_tot = g_tot + g, d_tot + d
            if not math.isfinite(g_tot + d_tot):
                raise FloatingPointError(f"non-finite {config.mode} loss (lr={config.lr})")
        res.losses.append(g_tot / len(pairs))
        if config.mode != "regression":
            res.d_losses.append(d_tot / len(pairs))
    model.trained = True
    return res


def predict_mfcc(model: SynthModel, eeg_test: Sequence, targets: Sequence | None = None,
                 ids: Sequence[str] | None = None, allow_untrained: bool = False):
    """Run the generator on held-out EEG; with targets also return an EvalReport."""
    if not model.trained and not allow_untrained:
        raise UntrainedModelError("model has not been trained")
    preds = [FeatureSequence(model.generate(x).data, getattr(x, "frame_rate_hz", 100.0), "mfcc")
             for x in eeg_test]
    if targets is None:
        return preds, None
    if len(targets) != len(preds):
        raise ValueError("number of targets differs from number of inputs")
    ids = list(ids) if ids is not None else [f"utt{i}" for i in range(len(preds))]
    report: EvalReport = regression_report(
        [(u, p.frames, _frames(t)) for u, p, t in zip(ids, preds, targets)])
    return preds, report
