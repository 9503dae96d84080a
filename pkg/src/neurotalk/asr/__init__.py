"""End-to-end recognisers: CTC (characters), attention (words), RNN transducer (characters)."""

from .attention import attention_beam_decode, attention_step, attention_teacher_forced_loss
from .ctc import Hypothesis, InfeasibleAlignmentError, ctc_beam_search, ctc_loss
from .models import AsrConfig, AsrModel, Utterance, new_model
from .rnnt import rnnt_beam_search, rnnt_loss
from .train import TrainingDivergedError, TrainResult, train_asr
from .vocab import Vocabulary

__all__ = [
    "AsrConfig",
    "AsrModel",
    "Hypothesis",
    "InfeasibleAlignmentError",
    "TrainResult",
    "TrainingDivergedError",
    "Utterance",
    "Vocabulary",
    "attention_beam_decode",
    "attention_step",
    "attention_teacher_forced_loss",
    "ctc_beam_search",
    "ctc_loss",
    "new_model",
    "rnnt_beam_search",
    "rnnt_loss",
    "train_asr",
]
