"""Recognition and regression metrics: WER/CER, RMSE, normalized RMSE, MCD."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MCD_SCALE = 10.0 / math.log(10.0)


@dataclass
class EditCounts:
    distance: int
    substitutions: int
    insertions: int
    deletions: int


def edit_distance(ref: Sequence, hyp: Sequence) -> EditCounts:
    """Levenshtein distance with an S/I/D breakdown of one optimal alignment."""
    n, m = len(ref), len(hyp)
    d = np.zeros((n + 1, m + 1), dtype=np.int64)
    d[:, 0] = np.arange(n + 1)
    d[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = d[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1])
            d[i, j] = min(sub, d[i - 1, j] + 1, d[i, j - 1] + 1)
    # backtrace prefers substitution/match, then deletion, then insertion
    s = ins = dels = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            s += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and d[i, j] == d[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditCounts(int(d[n, m]), int(s), ins, dels)


def _rate(ref: Sequence, hyp: Sequence) -> float:
    if len(ref) == 0:
        raise ValueError("empty reference")
    return edit_distance(ref, hyp).distance / len(ref)


def wer(ref_words: Sequence[str] | str, hyp_words: Sequence[str] | str) -> float:
    if isinstance(ref_words, str):
        ref_words = ref_words.split()
    if isinstance(hyp_words, str):
        hyp_words = hyp_words.split()
    return _rate(list(ref_words), list(hyp_words))


def cer(ref_chars: Sequence[str] | str, hyp_chars: Sequence[str] | str) -> float:
    return _rate(list(ref_chars), list(hyp_chars))


# -- regression metrics --------------------------------------------------------


def _frames(x) -> np.ndarray:
    return np.asarray(getattr(x, "frames", x), dtype=np.float64)


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def rmse(a, b) -> float:
    a, b = _frames(a), _frames(b)
    _same_shape(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def normalized_rmse(pred, ref) -> float:
    """RMSE divided by the range of the reference (observation) values."""
    pred, ref = _frames(pred), _frames(ref)
    _same_shape(pred, ref)
    spread = float(ref.max() - ref.min())
    if spread == 0.0:
        raise ValueError("reference is constant; normalized RMSE is undefined")
    return rmse(pred, ref) / spread


def mcd(a, b) -> float:
    """Mean per-frame mel cepstral distortion over coefficients 1..12 (c0 excluded)."""
    a, b = _frames(a), _frames(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ValueError(f"frame mismatch: {a.shape} vs {b.shape}")
    _same_shape(a, b)
    diff = a[:, 1:13] - b[:, 1:13]
    return float(np.mean(MCD_SCALE * np.sqrt(2.0 * np.sum(diff * diff, axis=1))))


# -- reports -------------------------------------------------------------------


@dataclass
class EvalReport:
    """Per-utterance rows plus an aggregate row.

    For WER/CER the aggregate is pooled edit counts over pooled reference
    length. For regression metrics it is the mean of the per-utterance values.
    """

    kind: str  # "wer", "cer" or "regression"
    rows: list[dict] = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        if not self.rows:
            return ""
        cols = list(self.rows[0])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows + [self.aggregate]:
            w.writerow([_fmt(r.get(c, "")) for c in cols])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def error_rate_report(pairs: Sequence[tuple[str, str, str]], unit: str = "word") -> EvalReport:
    """Build a WER (unit="word") or CER (unit="char") report from (utt_id, ref, hyp)."""
    split = (lambda s: s.split()) if unit == "word" else list
    kind = "wer" if unit == "word" else "cer"
    rows = []
    tot = {"ref_len": 0, "distance": 0, "S": 0, "I": 0, "D": 0}
    for utt_id, ref, hyp in pairs:
        r, h = split(ref), split(hyp)
        e = edit_distance(r, h)
        rows.append({"utt_id": utt_id, kind: e.distance / max(len(r), 1), "ref_len": len(r),
                     "distance": e.distance, "S": e.substitutions, "I": e.insertions, "D": e.deletions})
        tot["ref_len"] += len(r)
        tot["distance"] += e.distance
        tot["S"] += e.substitutions
        tot["I"] += e.insertions
        tot["D"] += e.deletions
    if tot["ref_len"] == 0:
        raise ValueError("empty reference set")
    agg = {"utt_id": "ALL", kind: tot["distance"] / tot["ref_len"], **tot}
    return EvalReport(kind, rows, agg)


def regression_report(items: Sequence[tuple[str, np.ndarray, np.ndarray]]) -> EvalReport:
    """(utt_id, predicted, reference) -> RMSE / NRMSE / MCD per sample and averaged."""
    rows = []
    for utt_id, pred, ref in items:
        rows.append({"utt_id": utt_id, "rmse": rmse(pred, ref),
                     "nrmse": normalized_rmse(pred, ref), "mcd": mcd(pred, ref)})
    if not rows:
        raise ValueError("no samples")
    agg = {"utt_id": "ALL"}
    for k in ("rmse", "nrmse", "mcd"):
        agg[k] = float(np.mean([r[k] for r in rows]))
    return EvalReport("regression", rows, agg)
