"""Synthetic speech-EEG corpora, the JSON-lines manifest, splits and condition assembly."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import audio
from .asr.vocab import CHARSET
from .eeg import CHANNEL_NAMES, RawEeg
from .features import FeatureSequence
from .fileio import read_eeg, write_eeg

CONDITIONS = ("listen", "spoken")
MANIFEST_NAME = "manifest.jsonl"


class CorpusError(ValueError):
    pass


def default_sentences() -> list[str]:
    text = resources.files("neurotalk.data").joinpath("sentences.txt").read_text("utf-8")
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


def load_sentences(path=None) -> list[str]:
    if path is None:
        return default_sentences()
    lines = Path(path).read_text("utf-8").splitlines()
    return [ln.strip() for ln in lines if ln.strip() and not ln.startswith("#")]


def unique_counts(sentences: Sequence[str]) -> tuple[int, int]:
    """(unique characters, unique words) in a sentence list; spaces are not counted."""
    chars = {c for s in sentences for c in s.lower() if not c.isspace()}
    words = {w for s in sentences for w in s.lower().split()}
    return len(chars), len(words)


# -- manifest ------------------------------------------------------------------


@dataclass(frozen=True)
class ManifestRecord:
    utt_id: str
    subject_id: int
    repetition: int
    sentence_id: int
    condition: str
    noise_db: float
    eeg_path: str
    audio_path: str
    transcript: str

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise CorpusError(f"{self.utt_id}: condition {self.condition!r} not in {CONDITIONS}")
        if self.repetition < 1:
            raise CorpusError(f"{self.utt_id}: repetition must be >= 1")

    @property
    def pair_key(self) -> tuple[int, int, int]:
        return (self.subject_id, self.repetition, self.sentence_id)


def write_manifest(path, records: Iterable[ManifestRecord]) -> None:
    names = [f.name for f in fields(ManifestRecord)]
    lines = [json.dumps({k: getattr(r, k) for k in names}) for r in records]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path, check_files: bool = True) -> list[ManifestRecord]:
    path = Path(path)
    root = path.parent
    names = {f.name for f in fields(ManifestRecord)}
    out = []
    for n, line in enumerate(path.read_text("utf-8").splitlines(), 1):
        if not line.strip():
            continue
        d = json.loads(line)
        if set(d) != names:
            raise CorpusError(f"{path}:{n}: fields {sorted(d)} differ from the manifest schema")
        rec = ManifestRecord(**d)
        if check_files:
            for p in (rec.eeg_path, rec.audio_path):
                if not (root / p).exists():
                    raise CorpusError(f"{path}:{n}: missing file {p}")
        out.append(rec)
    return out


# -- synthetic generation ------------------------------------------------------


@dataclass
class SyntheticCorpusSpec:
    n_subjects: int = 5
    n_sentences: int = 3
    repetitions: int = 3
    conditions: tuple[str, ...] = ("spoken",)
    seed: int = 0
    noise_db: float = 65.0  # acoustic background level recorded in the manifest
    eeg_noise: float = 0.3  # pink-noise std relative to the signature std
    n_sources: int = 8  # latent per-character sources mixed into the 31 channels
    subject_variation: float = 0.3  # size of each subject's deviation from the shared mixing
    char_seconds: float = 0.1
    pad_seconds: float = 0.1  # quiet lead-in and tail
    eeg_rate_hz: float = 1000.0
    sentences: list[str] = field(default_factory=default_sentences)

    def __post_init__(self):
        self.conditions = tuple(self.conditions)
        if self.n_subjects < 1 or self.repetitions < 1 or self.n_sentences < 1:
            raise CorpusError("subjects, sentences and repetitions must be >= 1")
        if self.n_sentences > len(self.sentences):
            raise CorpusError(f"asked for {self.n_sentences} sentences, list has {len(self.sentences)}")
        bad = set(self.conditions) - set(CONDITIONS)
        if bad or not self.conditions:
            raise CorpusError(f"conditions must be a non-empty subset of {CONDITIONS}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conditions"] = list(self.conditions)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "SyntheticCorpusSpec":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise CorpusError(f"unknown corpus spec keys: {sorted(unknown)}")
        return cls(**d)


def _rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in keys]))


def plan_manifest(spec: SyntheticCorpusSpec) -> list[ManifestRecord]:
    """Records the generator would write, without touching the disk."""
    out = []
    for s in range(1, spec.n_subjects + 1):
        for r in range(1, spec.repetitions + 1):
            for k in range(1, spec.n_sentences + 1):
                for cond in CONDITIONS:
                    if cond not in spec.conditions:
                        continue
                    uid = f"s{s:02d}_r{r}_n{k:02d}_{cond}"
                    out.append(ManifestRecord(uid, s, r, k, cond, spec.noise_db,
                                              f"eeg/{uid}.nteg", f"audio/{uid}.wav",
                                              spec.sentences[k - 1].lower()))
    return out


def _pink_noise(rng, channels: int, n: int) -> np.ndarray:
    white = rng.standard_normal((channels, n))
    spec = np.fft.rfft(white, axis=-1)
    f = np.arange(spec.shape[-1], dtype=np.float64)
    f[0] = 1.0
    pink = np.fft.irfft(spec / np.sqrt(f), n=n, axis=-1)
    return pink / pink.std(axis=-1, keepdims=True)


def _char_table(spec: SyntheticCorpusSpec, condition: str) -> dict:
    """Per-character source waveforms, shared by all subjects of a corpus."""
    rng = _rng(spec.seed, 7919, CONDITIONS.index(condition))
    L = int(round(spec.char_seconds * spec.eeg_rate_hz))
    t = np.arange(L) / spec.eeg_rate_hz
    env = np.hanning(L + 2)[1:-1]
    table = {}
    for c in CHARSET:
        freqs = rng.uniform(4.0, 40.0, spec.n_sources)
        phases = rng.uniform(0, 2 * np.pi, spec.n_sources)
        amps = rng.uniform(0.5, 1.5, spec.n_sources)
        offsets = rng.normal(0.0, 0.5, spec.n_sources)
        waves = amps[:, None] * np.sin(2 * np.pi * freqs[:, None] * t + phases[:, None])
        table[c] = (waves + offsets[:, None]) * env
    return table


def _char_seconds(spec: SyntheticCorpusSpec, subject: int) -> float:
    """Per-character duration with a seeded per-subject speaking-rate factor."""
    return spec.char_seconds * (0.9 + 0.2 * _rng(spec.seed, 31, subject).random())


def _mixing(spec: SyntheticCorpusSpec, subject: int) -> np.ndarray:
    """Source-to-channel gains: a shared head model plus a seeded per-subject deviation."""
    shape = (len(CHANNEL_NAMES), spec.n_sources)
    shared = _rng(spec.seed, 100).normal(0.0, 1.0, shape)
    own = _rng(spec.seed, 101, subject).normal(0.0, 1.0, shape)
    return shared + spec.subject_variation * own


def synth_eeg(rec: ManifestRecord, spec: SyntheticCorpusSpec, table: dict) -> RawEeg:
    fs = spec.eeg_rate_hz
    per_char = _char_seconds(spec, rec.subject_id)
    L = int(round(per_char * fs))
    pad = int(round(spec.pad_seconds * fs))
    n = 2 * pad + L * len(rec.transcript)
    mix = _mixing(spec, rec.subject_id)
    sources = np.zeros((spec.n_sources, n))
    base_len = table[rec.transcript[0]].shape[1]
    grid = np.linspace(0, base_len - 1, L)
    for i, c in enumerate(rec.transcript):
        w = table[c]
        stretched = np.stack([np.interp(grid, np.arange(base_len), row) for row in w])
        sources[:, pad + i * L: pad + (i + 1) * L] = stretched
    signal = mix @ sources
    rng = _rng(spec.seed, 202, rec.subject_id, rec.repetition, rec.sentence_id,
               CONDITIONS.index(rec.condition))
    scale = float(signal.std()) or 1.0
    noise = spec.eeg_noise * scale * _pink_noise(rng, len(CHANNEL_NAMES), n)
    return RawEeg(10.0 * (signal + noise), fs)


def _formants(spec: SyntheticCorpusSpec) -> dict[str, tuple[float, float]]:
    rng = _rng(spec.seed, 4099)
    return {c: (float(rng.uniform(300, 900)), float(rng.uniform(900, 2500))) for c in CHARSET}


def synth_audio(rec: ManifestRecord, spec: SyntheticCorpusSpec, formants) -> audio.AudioClip:
    fs = audio.SAMPLE_RATE_HZ
    per_char = _char_seconds(spec, rec.subject_id)
    L = int(round(per_char * spec.eeg_rate_hz)) * fs // int(spec.eeg_rate_hz)
    pad = int(round(spec.pad_seconds * fs))
    n = 2 * pad + L * len(rec.transcript)
    pitch = 0.85 + 0.3 * _rng(spec.seed, 53, rec.subject_id).random()
    t = np.arange(L) / fs
    env = np.hanning(L + 2)[1:-1]
    x = np.zeros(n)
    for i, c in enumerate(rec.transcript):
        if c == " ":
            continue
        f1, f2 = formants[c]
        seg = 0.2 * np.sin(2 * np.pi * f1 * pitch * t) + 0.1 * np.sin(2 * np.pi * f2 * pitch * t)
        x[pad + i * L: pad + (i + 1) * L] = seg * env
    rng = _rng(spec.seed, 303, rec.subject_id, rec.repetition, rec.sentence_id,
               CONDITIONS.index(rec.condition))
    x += 10.0 ** ((rec.noise_db - 100.0) / 20.0) * rng.standard_normal(n)
    return audio.AudioClip(np.clip(x, -1.0, 1.0), fs)


def generate_synthetic_corpus(spec: SyntheticCorpusSpec, out_dir) -> list[ManifestRecord]:
    """Write EEG, audio and the manifest under ``out_dir``; same spec gives identical bytes."""
    root = Path(out_dir)
    (root / "eeg").mkdir(parents=True, exist_ok=True)
    (root / "audio").mkdir(parents=True, exist_ok=True)
    records = plan_manifest(spec)
    tables = {c: _char_table(spec, c) for c in spec.conditions}
    formants = _formants(spec)
    for rec in records:
        write_eeg(root / rec.eeg_path, synth_eeg(rec, spec, tables[rec.condition]))
        audio.write_wav(root / rec.audio_path, synth_audio(rec, spec, formants))
    write_manifest(root / MANIFEST_NAME, records)
    (root / "corpus_spec.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    return records


def load_eeg(root, rec: ManifestRecord) -> RawEeg:
    return read_eeg(Path(root) / rec.eeg_path)


def load_audio(root, rec: ManifestRecord) -> audio.AudioClip:
    return audio.read_wav(Path(root) / rec.audio_path)


# -- splits --------------------------------------------------------------------


@dataclass(frozen=True)
class SplitPlan:
    strategy: str = "random_80_10_10"  # or "subject_blocks"
    blocks: tuple[int, int, int] | None = None  # subjects in train / val / test

    def __post_init__(self):
        if self.strategy not in ("random_80_10_10", "subject_blocks"):
            raise CorpusError(f"unknown split strategy {self.strategy!r}")


def default_blocks(n_subjects: int) -> tuple[int, int, int]:
    """18/1/1 for 20 subjects, 12/2/1 for 15; otherwise all but two, then 1 and 1."""
    known = {20: (18, 1, 1), 15: (12, 2, 1)}
    return known.get(n_subjects, (n_subjects - 2, 1, 1))


def split(records: Sequence, plan: SplitPlan, seed: int = 0):
    """Return (train, val, test) lists that are disjoint and cover ``records``."""
    records = list(records)
    if plan.strategy == "random_80_10_10":
        order = np.random.default_rng(np.random.SeedSequence([seed, 80, 10])).permutation(len(records))
        n_train = int(round(0.8 * len(records)))
        n_val = int(round(0.1 * len(records)))
        parts = (order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:])
        out = tuple([records[i] for i in sorted(p)] for p in parts)
    else:
        subjects = sorted({r.subject_id for r in records})
        if len(subjects) < 3:
            raise CorpusError("subject_blocks split needs at least 3 subjects")
        blocks = plan.blocks or default_blocks(len(subjects))
        if sum(blocks) != len(subjects) or min(blocks) < 1:
            raise CorpusError(f"blocks {blocks} do not partition {len(subjects)} subjects")
        a, b = blocks[0], blocks[0] + blocks[1]
        groups = (set(subjects[:a]), set(subjects[a:b]), set(subjects[b:]))
        out = tuple([r for r in records if r.subject_id in g] for g in groups)
    for name, part in zip(("train", "val", "test"), out):
        if not part:
            raise CorpusError(f"{plan.strategy} split produced an empty {name} set "
                              f"from {len(records)} records")
    return out


# -- conditions ----------------------------------------------------------------


@dataclass
class Example:
    key: str
    features: FeatureSequence
    text: str
    subject_id: int
    condition: str


def build_condition_features(records: Sequence[ManifestRecord],
                             features: Mapping[str, FeatureSequence], mode: str,
                             axis: str = "time") -> list[Example]:
    """Assemble per-utterance examples for the spoken, listen or both condition.

    ``both`` joins the listen and spoken features of the same subject,
    repetition and sentence: along time as [listen; spoken] by default, or
    side by side per frame with ``axis="feature"`` (truncated to the shorter).
    """
    if mode in CONDITIONS:
        return [Example(r.utt_id, features[r.utt_id], r.transcript, r.subject_id, mode)
                for r in records if r.condition == mode]
    if mode != "both":
        raise CorpusError(f"unknown condition mode {mode!r}; expected spoken, listen or both")
    if axis not in ("time", "feature"):
        raise CorpusError(f"unknown concatenation axis {axis!r}")
    listen = {r.pair_key: r for r in records if r.condition == "listen"}
    spoken = {r.pair_key: r for r in records if r.condition == "spoken"}
    if set(listen) != set(spoken):
        missing = sorted(set(listen) ^ set(spoken))
        raise CorpusError(f"unpaired listen/spoken records for (subject, rep, sentence) {missing[:3]}")
    out = []
    for key in sorted(listen):
        lr, sr = listen[key], spoken[key]
        lf, sf = features[lr.utt_id], features[sr.utt_id]
        if axis == "time":
            frames = np.concatenate([lf.frames, sf.frames], axis=0)
        else:
            n = min(len(lf), len(sf))
            frames = np.concatenate([lf.frames[:n], sf.frames[:n]], axis=1)
        uid = f"s{key[0]:02d}_r{key[1]}_n{key[2]:02d}_both"
        out.append(Example(uid, lf.with_frames(frames), lr.transcript, key[0], "both"))
    return out


def limit_sentences(records: Sequence[ManifestRecord], n: int | None) -> list[ManifestRecord]:
    """Keep records of the first ``n`` sentences (all when ``n`` is None)."""
    if n is None:
        return list(records)
    if n < 1:
        raise CorpusError("sentence limit must be >= 1")
    return [r for r in records if r.sentence_id <= n]
