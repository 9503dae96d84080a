"""Command-line driver: ``neurotalk <command> [flags]``.

Settings come from the built-in defaults, then ``--config FILE`` (JSON), then
individual flags. Exit status: 0 success, 2 configuration error, 3 missing
prerequisite stage, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import experiment as ex
from .asr.train import TrainingDivergedError
from .core.tensor import NumericError
from .corpus import CorpusError
from .eeg import ConfigError as DspConfigError
from .fileio import FormatError

EXIT_OK, EXIT_CONFIG, EXIT_PREREQ, EXIT_NUMERIC = 0, 2, 3, 4

COMMANDS = ("gen", "featurize", "reduce", "train-asr", "decode", "train-synth", "eval",
            "sweep", "plotdata")

# flag -> ExperimentConfig field
_FLAG_FIELDS = {
    "seed": "seed", "feature_set": "feature_set", "condition": "condition", "model": "model",
    "sentences": "sentences", "channels": "channels", "beam": "beam", "jobs": "jobs",
    "out": "out", "epochs": "epochs", "hidden": "hidden", "lr": "lr",
    "corpus_dir": "corpus_dir", "reduce_dim": "reduce_dim", "split": "split",
}


def _channels(text: str) -> list[str]:
    names = [c.strip() for c in text.split(",") if c.strip()]
    if not names:
        raise argparse.ArgumentTypeError("expected a comma-separated list of channel names")
    return names


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="JSON experiment configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--feature-set", choices=["1", "2", "3"])
    p.add_argument("--condition", choices=["spoken", "listen", "both"])
    p.add_argument("--model", choices=list(ex.MODELS))
    p.add_argument("--sentences", type=int, metavar="N", help="use only the first N sentences")
    p.add_argument("--channels", type=_channels, metavar="LIST", help="e.g. T7,T8")
    p.add_argument("--beam", type=int, metavar="N")
    p.add_argument("--jobs", type=int, metavar="N", help="utterance-level worker threads")
    p.add_argument("--out", metavar="DIR", help="workspace directory")
    p.add_argument("--corpus-dir", metavar="DIR",
                   help=f"corpus root (default ${ex.DATA_DIR_ENV} or OUT/corpus)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--reduce-dim", type=int, metavar="N", help="override the KPCA target size")
    p.add_argument("--split", choices=["random_80_10_10", "subject_blocks"])
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="neurotalk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "gen": "write a synthetic speech-EEG corpus",
        "featurize": "extract EEG feature-set and MFCC files",
        "reduce": "split, fit KPCA on training data and write reduced features",
        "train-asr": "train a ctc, attention or rnnt recogniser",
        "decode": "decode the test split to utt_id/hypothesis/score lines",
        "train-synth": "train an lstm-reg, gan or wgan EEG-to-MFCC model",
        "eval": "score decodes (WER/CER) or synthesis output (RMSE/NRMSE/MCD)",
        "sweep": "repeat training across sentence-count limits and write a table",
        "plotdata": "write CSV series for plotting",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        _common(p)
        if name == "eval":
            p.add_argument("--ref", metavar="TSV", help="reference transcripts (utt_id<TAB>text)")
            p.add_argument("--hyp", metavar="TSV", help="hypotheses (utt_id<TAB>text[<TAB>score])")
        if name == "plotdata":
            p.add_argument("what", choices=list(ex.PLOTS))
    return parser


def resolve_config(args: argparse.Namespace) -> ex.ExperimentConfig:
    base = ex.ExperimentConfig.load(args.config).to_dict() if args.config else {}
    for flag, name in _FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            base[name] = value
    return ex.ExperimentConfig.from_dict(base)


def run(args: argparse.Namespace) -> str:
    cfg = resolve_config(args)
    cmd = args.command
    if cmd == "eval":
        path = ex.cmd_eval(cfg, args.ref, args.hyp)
    elif cmd == "plotdata":
        path = ex.cmd_plotdata(cfg, args.what)
    else:
        path = getattr(ex, "cmd_" + cmd.replace("-", "_"))(cfg)
    return str(path)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        print(run(args))
    except ex.PrerequisiteError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PREREQ
    except (TrainingDivergedError, NumericError, FloatingPointError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ex.ConfigError, CorpusError, DspConfigError, FormatError, ValueError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
