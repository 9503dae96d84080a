"""Experiment configuration, on-disk workspace layout and the pipeline stages.

Every stage reads the artifacts of the previous one from the workspace and
raises :class:`PrerequisiteError` naming the command to run when they are
missing. Outputs depend only on the configuration and seed.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import corpus, dimred, fileio, pipeline
from .asr import AsrConfig, AsrModel, Vocabulary, train_asr
from .asr.models import KINDS as ASR_MODELS
from .corpus import CorpusError, SplitPlan, SyntheticCorpusSpec
from .features import FeatureSequence
from .metrics import error_rate_report
from .synth import SynthConfig, SynthModel, predict_mfcc, train_synth

log = logging.getLogger(__name__)

SYNTH_MODELS = {"lstm-reg": "regression", "gan": "gan", "wgan": "wgan"}
MODELS = ASR_MODELS + tuple(SYNTH_MODELS)
SWEEP_SIZES = (3, 5, 7, 9)
DATA_DIR_ENV = "NEUROTALK_DATA_DIR"


class ConfigError(ValueError):
    """Invalid configuration or command-line input."""


class PrerequisiteError(RuntimeError):
    """A previous pipeline stage has not been run."""

    def __init__(self, what: str, command: str):
        super().__init__(f"{what} not found; run `neurotalk {command}` first")
        self.command = command


@dataclass
class ExperimentConfig:
    out: str = "neurotalk-run"
    corpus: dict = field(default_factory=dict)  # SyntheticCorpusSpec overrides
    corpus_dir: str | None = None
    feature_set: str = "1"
    condition: str = "spoken"
    concat_axis: str = "time"
    model: str = "ctc"
    split: str = "random_80_10_10"
    split_blocks: list[int] | None = None
    reduce_dim: int | None = None
    channels: list[str] | None = None
    sentences: int | None = None
    epochs: int | None = None
    hidden: int | None = None
    lr: float | None = None
    beam: int = 4
    seed: int = 0
    jobs: int = 1
    sweep_sizes: list[int] = field(default_factory=lambda: list(SWEEP_SIZES))

    def __post_init__(self):
        self.feature_set = str(self.feature_set)
        checks = [
            (self.feature_set in dimred.DIMENSION_POLICY, f"feature set must be 1, 2 or 3, got {self.feature_set}"),
            (self.condition in ("spoken", "listen", "both"), f"unknown condition {self.condition!r}"),
            (self.concat_axis in ("time", "feature"), f"unknown concat axis {self.concat_axis!r}"),
            (self.model in MODELS, f"unknown model {self.model!r}; expected one of {MODELS}"),
            (self.beam >= 1, "beam must be >= 1"),
            (self.jobs >= 1, "jobs must be >= 1"),
            (self.sentences is None or self.sentences >= 1, "sentences must be >= 1"),
            (self.epochs is None or self.epochs >= 0, "epochs must be >= 0"),
            (bool(self.sweep_sizes), "sweep_sizes must not be empty"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        try:
            SplitPlan(self.split, tuple(self.split_blocks) if self.split_blocks else None)
            self.corpus_spec()
        except (CorpusError, TypeError) as e:
            raise ConfigError(str(e)) from None

    # -- serialisation -------------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} does not exist") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from None
        if not isinstance(d, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
        return cls.from_dict(d)

    # -- derived settings ----------------------------------------------------

    def corpus_spec(self) -> SyntheticCorpusSpec:
        return SyntheticCorpusSpec.from_dict(self.corpus)

    def split_plan(self) -> SplitPlan:
        return SplitPlan(self.split, tuple(self.split_blocks) if self.split_blocks else None)

    def overrides(self) -> dict:
        return {k: v for k, v in (("epochs", self.epochs), ("hidden", self.hidden),
                                  ("lr", self.lr)) if v is not None}

    def asr_config(self) -> AsrConfig:
        extra = self.overrides()
        if "hidden" in extra and self.model != "ctc":
            extra["dec_hidden"] = extra["hidden"]
        return AsrConfig.for_kind(self.model, beam=self.beam, **extra)

    def synth_config(self) -> SynthConfig:
        return SynthConfig.for_mode(SYNTH_MODELS[self.model], **self.overrides())


# -- workspace -----------------------------------------------------------------


class Workspace:
    """Paths of every artifact, derived from the configuration."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)

    @property
    def corpus_root(self) -> Path:
        if self.cfg.corpus_dir:
            return Path(self.cfg.corpus_dir)
        env = os.environ.get(DATA_DIR_ENV)
        return Path(env) if env else self.out / "corpus"

    @property
    def manifest_path(self) -> Path:
        return self.corpus_root / corpus.MANIFEST_NAME

    @property
    def feature_tag(self) -> str:
        tag = f"set{self.cfg.feature_set}"
        if self.cfg.channels:
            tag += "_" + "-".join(self.cfg.channels)
        return tag

    @property
    def features_dir(self) -> Path:
        return self.out / "features" / self.feature_tag

    @property
    def mfcc_dir(self) -> Path:
        return self.out / "features" / "mfcc"

    @property
    def run_tag(self) -> str:
        tag = f"{self.feature_tag}_{self.cfg.condition}"
        if self.cfg.sentences:
            tag += f"_n{self.cfg.sentences}"
        return tag

    @property
    def reduced_dir(self) -> Path:
        return self.out / "reduced" / self.run_tag

    @property
    def model_dir(self) -> Path:
        return self.out / "models" / f"{self.cfg.model}_{self.run_tag}"

    @property
    def decode_path(self) -> Path:
        return self.out / "decode" / f"{self.cfg.model}_{self.run_tag}.tsv"

    @property
    def eval_path(self) -> Path:
        return self.out / "eval" / f"{self.cfg.model}_{self.run_tag}.csv"

    @property
    def sweep_path(self) -> Path:
        return self.out / "sweep" / f"{self.cfg.model}_{self.feature_tag}_{self.cfg.condition}.csv"

    @property
    def plots_dir(self) -> Path:
        return self.out / "plots"


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def _csv(rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([f"{v:.6f}" if isinstance(v, float) else v for v in r])
    return buf.getvalue()


# -- shared helpers ------------------------------------------------------------


def records(ws: Workspace) -> list[corpus.ManifestRecord]:
    if not ws.manifest_path.exists():
        raise PrerequisiteError(f"corpus manifest {ws.manifest_path}", "gen")
    recs = corpus.read_manifest(ws.manifest_path)
    recs = corpus.limit_sentences(recs, ws.cfg.sentences)
    wanted = ("listen", "spoken") if ws.cfg.condition == "both" else (ws.cfg.condition,)
    recs = [r for r in recs if r.condition in wanted]
    if not recs:
        raise ConfigError(f"corpus has no {ws.cfg.condition} records")
    return recs


def split_records(ws: Workspace, recs):
    """Split on (subject, repetition, sentence) so paired listen/spoken records stay together."""
    keys = sorted({r.pair_key for r in recs})
    reps = [_KeyRecord(k) for k in keys]
    parts = corpus.split(reps, ws.cfg.split_plan(), ws.cfg.seed)
    groups = [{p.pair_key for p in part} for part in parts]
    return tuple([r for r in recs if r.pair_key in g] for g in groups)


@dataclass(frozen=True)
class _KeyRecord:
    pair_key: tuple[int, int, int]

    @property
    def subject_id(self) -> int:
        return self.pair_key[0]


def _read_dir(d: Path, ids, what: str, command: str) -> dict[str, FeatureSequence]:
    out = {}
    for uid in ids:
        p = d / f"{uid}.ntfs"
        if not p.exists():
            raise PrerequisiteError(f"{what} for {uid} ({p})", command)
        out[uid] = fileio.read_features(p)
    return out


def vocabulary(cfg: ExperimentConfig, recs) -> Vocabulary:
    if cfg.model == "attention":
        return Vocabulary.words(sorted({r.transcript for r in recs}))
    return Vocabulary.chars()


def examples(ws: Workspace, recs, feats) -> list[corpus.Example]:
    return corpus.build_condition_features(recs, feats, ws.cfg.condition, ws.cfg.concat_axis)


# -- stages --------------------------------------------------------------------


def cmd_gen(cfg: ExperimentConfig) -> Path:
    ws = Workspace(cfg)
    spec = cfg.corpus_spec()
    recs = corpus.generate_synthetic_corpus(spec, ws.corpus_root)
    log.info("wrote %d utterances to %s", len(recs), ws.corpus_root)
    return ws.manifest_path


def cmd_featurize(cfg: ExperimentConfig) -> Path:
    ws = Workspace(cfg)
    recs = records(ws)
    try:
        eeg_feats = pipeline.featurize(ws.corpus_root, recs, cfg.feature_set, cfg.channels, cfg.jobs)
    except KeyError as e:
        raise ConfigError(f"unknown channel {e}") from None
    mfcc = pipeline.mfcc_features(ws.corpus_root, recs, cfg.jobs)
    for d, feats in ((ws.features_dir, eeg_feats), (ws.mfcc_dir, mfcc)):
        d.mkdir(parents=True, exist_ok=True)
        for uid, f in feats.items():
            fileio.write_features(d / f"{uid}.ntfs", f)
    log.info("featurized %d utterances into %s", len(recs), ws.features_dir)
    return ws.features_dir


def fit_reduction(cfg, recs, feats, train):
    reducer = pipeline.Reducer.fit([feats[r.utt_id] for r in train], cfg.feature_set,
                                   cfg.reduce_dim, cfg.seed)
    return reducer, {uid: reducer(f) for uid, f in feats.items()}


def cmd_reduce(cfg: ExperimentConfig) -> Path:
    ws = Workspace(cfg)
    recs = records(ws)
    feats = _read_dir(ws.features_dir, [r.utt_id for r in recs], "EEG features", "featurize")
    train, val, test = split_records(ws, recs)
    reducer, reduced = fit_reduction(cfg, recs, feats, train)
    d = ws.reduced_dir
    d.mkdir(parents=True, exist_ok=True)
    if reducer.model is not None:
        dimred.save_kpca(d / "kpca.ntck", reducer.model)
    for uid, f in reduced.items():
        fileio.write_features(d / f"{uid}.ntfs", f)
    split = {name: [r.utt_id for r in part] for name, part in
             (("train", train), ("val", val), ("test", test))}
    _write(d / "split.json", json.dumps(split, indent=2, sort_keys=True) + "\n")
    return d


def _load_split(ws: Workspace) -> dict[str, list[str]]:
    p = ws.reduced_dir / "split.json"
    if not p.exists():
        raise PrerequisiteError(f"reduced features ({p})", "reduce")
    return json.loads(p.read_text())


def _split_examples(ws: Workspace, part: str):
    recs = {r.utt_id: r for r in records(ws)}
    ids = _load_split(ws)[part]
    feats = _read_dir(ws.reduced_dir, ids, "reduced features", "reduce")
    return examples(ws, [recs[i] for i in ids], feats)


def _require_kind(cfg: ExperimentConfig, asr: bool) -> None:
    if asr and cfg.model not in ASR_MODELS:
        raise ConfigError(f"--model {cfg.model} is a synthesis model; use train-synth")
    if not asr and cfg.model not in SYNTH_MODELS:
        raise ConfigError(f"--model {cfg.model} is a recognition model; use train-asr")


def _loss_csv(losses, d_losses=()) -> str:
    rows = [["epoch", "loss"] + (["d_loss"] if d_losses else [])]
    for i, v in enumerate(losses):
        rows.append([i + 1, float(v)] + ([float(d_losses[i])] if d_losses else []))
    return _csv(rows)


def train_asr_on(cfg: ExperimentConfig, train_ex, vocab) -> tuple[AsrModel, list[float]]:
    utts = pipeline.to_utterances(train_ex, vocab)
    res = train_asr(utts, cfg.asr_config(), vocab, seed=cfg.seed)
    return res.model, res.losses


def cmd_train_asr(cfg: ExperimentConfig) -> Path:
    _require_kind(cfg, asr=True)
    ws = Workspace(cfg)
    train_ex = _split_examples(ws, "train")
    model, losses = train_asr_on(cfg, train_ex, vocabulary(cfg, records(ws)))
    model.save(ws.model_dir)
    _write(ws.model_dir / "losses.csv", _loss_csv(losses))
    return ws.model_dir


def _load_asr(ws: Workspace) -> AsrModel:
    if not (ws.model_dir / "model.json").exists():
        raise PrerequisiteError(f"trained model ({ws.model_dir})", "train-asr")
    return AsrModel.load(ws.model_dir)


def decode_lines(model: AsrModel, exs, beam: int) -> list[tuple[str, str, float]]:
    return [(e.key, *model.transcribe(e.features, beam)) for e in exs]


def format_decodes(rows) -> str:
    return "".join(f"{uid}\t{hyp}\t{score!r}\n" for uid, hyp, score in rows)


def cmd_decode(cfg: ExperimentConfig) -> Path:
    _require_kind(cfg, asr=True)
    ws = Workspace(cfg)
    model = _load_asr(ws)
    rows = decode_lines(model, _split_examples(ws, "test"), cfg.beam)
    return _write(ws.decode_path, format_decodes(rows))


def read_transcripts(path) -> dict[str, str]:
    """utt_id -> text from a TSV whose first two columns are id and text."""
    out = {}
    for n, line in enumerate(Path(path).read_text("utf-8").splitlines(), 1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) < 2:
            raise ConfigError(f"{path}:{n}: expected tab-separated utt_id and text")
        out[cols[0]] = cols[1]
    return out


def unit_for(model: str) -> str:
    return "word" if model == "attention" else "char"


def score_transcripts(refs: dict[str, str], hyps: dict[str, str], unit: str):
    missing = sorted(set(refs) - set(hyps))
    if missing:
        raise ConfigError(f"no hypothesis for {missing[:3]}")
    return error_rate_report([(k, refs[k], hyps[k]) for k in sorted(refs)], unit)


def cmd_eval(cfg: ExperimentConfig, ref_path=None, hyp_path=None) -> Path:
    ws = Workspace(cfg)
    if ref_path or hyp_path:
        if not (ref_path and hyp_path):
            raise ConfigError("--ref and --hyp must be given together")
        report = score_transcripts(read_transcripts(ref_path), read_transcripts(hyp_path),
                                   unit_for(cfg.model))
        return _write(ws.out / "eval" / "ref_vs_hyp.csv", report.to_csv())
    if cfg.model in SYNTH_MODELS:
        report = _synth_eval(ws)
    else:
        if not ws.decode_path.exists():
            raise PrerequisiteError(f"decoded hypotheses ({ws.decode_path})", "decode")
        refs = {e.key: e.text for e in _split_examples(ws, "test")}
        report = score_transcripts(refs, read_transcripts(ws.decode_path), unit_for(cfg.model))
    return _write(ws.eval_path, report.to_csv())


# -- synthesis -----------------------------------------------------------------


def _mfcc_id(e: corpus.Example) -> str:
    # the audio of a listen+spoken instance is the spoken recording
    return e.key[: -len("_both")] + "_spoken" if e.condition == "both" else e.key


def synth_pairs(ws: Workspace, exs):
    ids = [_mfcc_id(e) for e in exs]
    mfcc = _read_dir(ws.mfcc_dir, ids, "MFCC features", "featurize")
    keys = [e.key for e in exs]
    return keys, pipeline.align_pairs({e.key: e.features for e in exs},
                                      {e.key: mfcc[i] for e, i in zip(exs, ids)}, keys)


def cmd_train_synth(cfg: ExperimentConfig) -> Path:
    _require_kind(cfg, asr=False)
    ws = Workspace(cfg)
    _, pairs = synth_pairs(ws, _split_examples(ws, "train"))
    res = train_synth(pairs, cfg.synth_config(), cfg.seed)
    res.model.save(ws.model_dir)
    _write(ws.model_dir / "losses.csv", _loss_csv(res.losses, res.d_losses))
    return ws.model_dir


def _synth_eval(ws: Workspace):
    if not (ws.model_dir / "model.json").exists():
        raise PrerequisiteError(f"trained model ({ws.model_dir})", "train-synth")
    model = SynthModel.load(ws.model_dir)
    ids, pairs = synth_pairs(ws, _split_examples(ws, "test"))
    _, report = predict_mfcc(model, [e for e, _ in pairs], [m for _, m in pairs], ids)
    return report


# -- sweep and plot data -------------------------------------------------------


def cmd_sweep(cfg: ExperimentConfig) -> Path:
    """Train and score the model at each sentence-count limit; one table row each."""
    ws = Workspace(cfg)
    all_recs = records(ws)
    available = max(r.sentence_id for r in all_recs)
    sizes = [n for n in cfg.sweep_sizes if n <= available]
    if not sizes:
        raise ConfigError(f"corpus has {available} sentences; sweep sizes {cfg.sweep_sizes} "
                          "need more (raise corpus.n_sentences)")
    feats = _read_dir(ws.features_dir, [r.utt_id for r in all_recs], "EEG features", "featurize")
    metric = "nrmse" if cfg.model in SYNTH_MODELS else ("wer" if cfg.model == "attention" else "cer")
    rows = [["sentences", "unique_chars", "unique_words", metric]]
    for n in sizes:
        recs = corpus.limit_sentences(all_recs, n)
        chars, words = corpus.unique_counts(sorted({r.transcript for r in recs}))
        train, _, test = split_records(ws, recs)
        _, reduced = fit_reduction(cfg, recs, {r.utt_id: feats[r.utt_id] for r in recs}, train)
        train_ex, test_ex = examples(ws, train, reduced), examples(ws, test, reduced)
        if cfg.model in SYNTH_MODELS:
            value = _sweep_synth(ws, cfg, train_ex, test_ex)
        else:
            model, _ = train_asr_on(cfg, train_ex, vocabulary(cfg, recs))
            hyps = {uid: hyp for uid, hyp, _ in decode_lines(model, test_ex, cfg.beam)}
            refs = {e.key: e.text for e in test_ex}
            value = score_transcripts(refs, hyps, unit_for(cfg.model)).aggregate[metric]
        log.info("sweep n=%d %s=%.4f", n, metric, value)
        rows.append([n, chars, words, float(value)])
    return _write(ws.sweep_path, _csv(rows))


def _sweep_synth(ws, cfg, train_ex, test_ex) -> float:
    _, train = synth_pairs(ws, train_ex)
    res = train_synth(train, cfg.synth_config(), cfg.seed)
    _, test = synth_pairs(ws, test_ex)
    _, report = predict_mfcc(res.model, [e for e, _ in test], [m for _, m in test])
    return report.aggregate["nrmse"]


PLOTS = ("variance", "loss", "nrmse")


def cmd_plotdata(cfg: ExperimentConfig, what: str) -> Path:
    ws = Workspace(cfg)
    if what == "variance":
        recs = records(ws)
        feats = _read_dir(ws.features_dir, [r.utt_id for r in recs], "EEG features", "featurize")
        train, _, _ = split_records(ws, recs)
        x = np.concatenate([feats[r.utt_id].frames for r in train], axis=0)
        _, curve = dimred.fit_pca(x)
        rows = [["components", "cumulative_explained_variance"]]
        rows += [[i + 1, float(v)] for i, v in enumerate(curve)]
        return _write(ws.plots_dir / f"variance_{ws.feature_tag}.csv", _csv(rows))
    if what == "loss":
        src = ws.model_dir / "losses.csv"
        command = "train-synth" if cfg.model in SYNTH_MODELS else "train-asr"
        if not src.exists():
            raise PrerequisiteError(f"training losses ({src})", command)
        return _write(ws.plots_dir / f"loss_{cfg.model}_{ws.run_tag}.csv", src.read_text())
    if what == "nrmse":
        if cfg.model not in SYNTH_MODELS:
            raise ConfigError("nrmse plot data needs a synthesis model (lstm-reg, gan, wgan)")
        if not ws.eval_path.exists():
            raise PrerequisiteError(f"evaluation report ({ws.eval_path})", "eval")
        rows = [["sample", "utt_id", "nrmse"]]
        with ws.eval_path.open() as f:
            body = [r for r in csv.DictReader(f) if r["utt_id"] != "ALL"]
        rows += [[i + 1, r["utt_id"], r["nrmse"]] for i, r in enumerate(body)]
        return _write(ws.plots_dir / f"nrmse_{cfg.model}_{ws.run_tag}.csv", _csv(rows))
    raise ConfigError(f"unknown plot data {what!r}; expected one of {PLOTS}")
