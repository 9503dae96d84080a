"""Glue between corpus records and model-ready sequences.

raw EEG -> filters -> feature set -> (KPCA to the policy dimension) -> deltas.
The reducer is fitted on training utterances only and then applied to every
split.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import audio, corpus, dimred, eeg
from .asr.models import Utterance
from .asr.vocab import Vocabulary
from .features import FeatureSequence, append_deltas


def _map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def featurize(root, records: Sequence[corpus.ManifestRecord], set_id,
              channels: Sequence[str] | None = None, jobs: int = 1) -> dict[str, FeatureSequence]:
    """Per-utterance EEG features before reduction (dims 155/93/93 for 31 channels)."""
    def one(rec):
        x = eeg.preprocess(corpus.load_eeg(root, rec))
        if channels:
            x = eeg.select_channels(x, channels)
        return rec.utt_id, eeg.extract(x, set_id)

    return dict(_map(one, records, jobs))


def mfcc_features(root, records: Sequence[corpus.ManifestRecord],
                  jobs: int = 1) -> dict[str, FeatureSequence]:
    return dict(_map(lambda r: (r.utt_id, audio.mfcc13(corpus.load_audio(root, r))), records, jobs))


@dataclass
class Reducer:
    """KPCA projection to the policy dimension (or identity), then deltas."""

    set_id: str
    model: dimred.KpcaModel | None

    @classmethod
    def fit(cls, train: Sequence[FeatureSequence], set_id, override: int | None = None,
            seed: int = 0) -> "Reducer":
        target = dimred.dimension_policy(set_id, override)
        if target is None:
            return cls(str(set_id), None)
        x = np.concatenate([f.frames for f in train], axis=0)
        return cls(str(set_id), dimred.fit_kpca(x, target, standardize=True, seed=seed))

    @property
    def out_dim(self) -> int | None:
        return None if self.model is None else self.model.out_dim

    def reduce(self, f: FeatureSequence) -> FeatureSequence:
        if self.model is None:
            return f
        return f.with_frames(dimred.kpca_project(self.model, f.frames))

    def __call__(self, f: FeatureSequence, deltas: bool = True) -> FeatureSequence:
        r = self.reduce(f)
        return append_deltas(r) if deltas else r


def to_utterances(examples: Sequence[corpus.Example], vocab: Vocabulary) -> list[Utterance]:
    return [Utterance(e.key, e.features, tuple(vocab.encode(e.text)), e.subject_id, e.condition,
                      e.text) for e in examples]


def align_pairs(eeg_feats: Mapping[str, FeatureSequence], mfcc: Mapping[str, FeatureSequence],
                keys: Sequence[str]) -> list[tuple[np.ndarray, np.ndarray]]:
    """(EEG, MFCC) frame pairs truncated to the shorter of the two streams."""
    out = []
    for k in keys:
        a, b = eeg_feats[k].frames, mfcc[k].frames
        n = min(len(a), len(b))
        out.append((a[:n], b[:n]))
    return out
