"""Per-utterance training loop shared by the three recognisers."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..core.params import adam_step, clip_grad_norm, make_rng, save_checkpoint, sgd_step
from ..core.tensor import NumericError, Tape
from .models import AsrConfig, AsrModel, Utterance
from .vocab import Vocabulary

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """The loss became NaN or infinite."""


@dataclass
class TrainResult:
    model: AsrModel
    losses: list[float] = field(default_factory=list)  # mean loss per epoch


def optimizer_step(model, grads, config) -> None:
    if config.optimizer == "adam":
        adam_step(model.store, grads, config.lr)
    else:
        sgd_step(model.store, grads, config.lr)


def train_asr(utterances: Sequence[Utterance], config: AsrConfig, vocab: Vocabulary,
              seed: int = 0, checkpoint_dir=None, model: AsrModel | None = None) -> TrainResult:
    """Train with one update per utterance in a seeded shuffled order each epoch."""
    if not utterances:
        raise ValueError("training split is empty")
    rng = make_rng(seed)
    if model is None:
        model = AsrModel.init(config, vocab, utterances[0].features.dim, rng)
    result = TrainResult(model)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(utterances))
        total = 0.0
        for i in order:
            utt = utterances[i]
            try:
                with Tape() as tape:
                    loss = model.loss(utt)
                value = loss.item()
            except NumericError as e:
                raise TrainingDivergedError(
                    f"non-finite values at epoch {epoch} on {utt.utt_id} (lr={config.lr}): {e}"
                ) from None
            if not math.isfinite(value):
                raise TrainingDivergedError(
                    f"loss is {value} at epoch {epoch} on {utt.utt_id} (lr={config.lr})")
            grads = tape.backward(loss, model.store)
            grads, _ = clip_grad_norm(grads, config.clip_norm)
            optimizer_step(model, grads, config)
            total += value
        result.losses.append(total / len(utterances))
        log.info("epoch %d loss %.6f", epoch, result.losses[-1])
        if checkpoint_dir is not None and config.checkpoint_every and epoch % config.checkpoint_every == 0:
            d = Path(checkpoint_dir)
            d.mkdir(parents=True, exist_ok=True)
            save_checkpoint(d / f"epoch_{epoch:04d}.ntck", model.store,
                            {"train/loss": np.asarray(result.losses)})
    return result
