"""EEG preprocessing and the three per-channel feature sets.

All extractors work on a (channels, frames, window) view of the signal and
emit channel-major feature vectors: [ch0 f0..fk, ch1 f0..fk, ...].
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy import signal
from scipy.special import gammaln

from .features import FRAME_RATE_HZ, FeatureSequence

N_CHANNELS = 31
SAMPLE_RATE_HZ = 1000.0
EEG_BANDS_HZ = (0.5, 4.0, 7.0, 12.0, 30.0)


class ConfigError(ValueError):
    """Invalid filter, window or channel configuration."""


def _load_montage() -> dict[str, int]:
    text = resources.files("neurotalk.data").joinpath("montage_10_20.txt").read_text()
    out = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            name, idx = line.split("=")
            out[name.strip()] = int(idx)
    return out


MONTAGE = _load_montage()
CHANNEL_NAMES = tuple(sorted(MONTAGE, key=MONTAGE.get))


@dataclass
class RawEeg:
    samples: np.ndarray  # (channels, n_samples)
    sample_rate_hz: float = SAMPLE_RATE_HZ
    channel_names: tuple[str, ...] = CHANNEL_NAMES

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if len(self.channel_names) != self.samples.shape[0]:
            self.channel_names = tuple(f"ch{i}" for i in range(self.samples.shape[0]))
        if self.sample_rate_hz < 140.0:
            raise ConfigError(f"sample rate {self.sample_rate_hz} Hz below 140 Hz analysis minimum")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    def __len__(self) -> int:
        return self.samples.shape[1]


@dataclass
class FilterSpec:
    kind: str = "bandpass"  # bandpass | notch
    order: int = 4
    cutoff_low_hz: float = 0.1
    cutoff_high_hz: float = 70.0
    notch_hz: float = 60.0
    quality: float = 30.0


@dataclass
class WindowSpec:
    window_len_samples: int = 100
    hop_samples: int = 10

    @classmethod
    def for_rate(cls, sample_rate_hz: float, window_len_samples: int = 100,
                 frame_rate_hz: float = FRAME_RATE_HZ) -> "WindowSpec":
        hop = sample_rate_hz / frame_rate_hz
        if hop != int(hop):
            raise ConfigError(f"hop {hop} is not an integer sample count")
        return cls(window_len_samples, int(hop))

    def __post_init__(self):
        if self.hop_samples < 1 or self.hop_samples > self.window_len_samples:
            raise ConfigError(f"need 1 <= hop <= window, got hop={self.hop_samples} "
                              f"window={self.window_len_samples}")


@dataclass
class ExtractOptions:
    entropy_log: str = "e"  # "e" or "2"
    set3_min_nfft: int = 2048
    hurst_lengths: tuple[int, ...] = field(default=(10, 20, 50))
    hurst_correction: str = "anis-lloyd"  # or "none" for plain R/S


# -- filters -------------------------------------------------------------------


def _stable(sos: np.ndarray) -> bool:
    return all(np.all(np.abs(np.roots(s[3:])) < 1.0) for s in sos)


def bandpass_iir(x: RawEeg, spec: FilterSpec | None = None) -> RawEeg:
    """Causal Butterworth bandpass (bilinear design, second-order sections).

    Filter state starts at the step-response steady state of the first
    sample, so a constant offset does not ring at the start.
    """
    spec = spec or FilterSpec()
    nyq = x.sample_rate_hz / 2.0
    if not (0.0 < spec.cutoff_low_hz < spec.cutoff_high_hz < nyq):
        raise ConfigError(f"bandpass needs 0 < {spec.cutoff_low_hz} < {spec.cutoff_high_hz} < {nyq}")
    sos = signal.butter(spec.order, [spec.cutoff_low_hz, spec.cutoff_high_hz], btype="bandpass",
                        fs=x.sample_rate_hz, output="sos")
    if not _stable(sos):
        raise ConfigError("bandpass coefficients are unstable; move cutoffs away from Nyquist")
    zi = signal.sosfilt_zi(sos)[:, None, :] * x.samples[:, 0][None, :, None]
    out, _ = signal.sosfilt(sos, x.samples, axis=1, zi=zi)
    return RawEeg(out, x.sample_rate_hz, x.channel_names)


def notch_60(x: RawEeg, notch_hz: float = 60.0, quality: float = 30.0) -> RawEeg:
    """Second-order IIR notch (power-line removal), steady-state initialised."""
    if x.sample_rate_hz <= 2 * notch_hz:
        raise ConfigError(f"sample rate {x.sample_rate_hz} Hz too low for a {notch_hz} Hz notch")
    b, a = signal.iirnotch(notch_hz, quality, fs=x.sample_rate_hz)
    zi = signal.lfilter_zi(b, a)[None, :] * x.samples[:, :1]
    out, _ = signal.lfilter(b, a, x.samples, axis=1, zi=zi)
    return RawEeg(out, x.sample_rate_hz, x.channel_names)


def preprocess(x: RawEeg) -> RawEeg:
    return notch_60(bandpass_iir(x))


# -- windowing -----------------------------------------------------------------


def n_frames(n_samples: int, w: WindowSpec) -> int:
    if n_samples < w.window_len_samples:
        raise ValueError(f"signal of {n_samples} samples is shorter than one "
                         f"{w.window_len_samples}-sample window")
    return (n_samples - w.window_len_samples) // w.hop_samples + 1


def window_frames(x: RawEeg | np.ndarray, w: WindowSpec) -> np.ndarray:
    """(channels, frames, window_len) read-only view of the samples."""
    data = x.samples if isinstance(x, RawEeg) else np.atleast_2d(x)
    n = n_frames(data.shape[-1], w)
    view = np.lib.stride_tricks.sliding_window_view(data, w.window_len_samples, axis=-1)
    return view[:, : (n - 1) * w.hop_samples + 1: w.hop_samples]


# -- per-window descriptors (operate on the last axis) ---------------------------


def _log(p: np.ndarray, base: str) -> np.ndarray:
    return np.log2(p) if base == "2" else np.log(p)


def normalized_entropy(power: np.ndarray, base: str = "e", rel_floor: float = 0.0) -> np.ndarray:
    """Shannon entropy of ``power`` normalized to sum 1 along the last axis.

    Rows whose total is zero (or at most ``rel_floor``) get entropy 0.
    """
    total = power.sum(axis=-1, keepdims=True)
    ok = total > rel_floor
    p = np.divide(power, total, out=np.zeros_like(power), where=ok & (power > 0))
    terms = np.zeros_like(p)
    nz = p > 0
    terms[nz] = p[nz] * _log(p[nz], base)
    h = -terms.sum(axis=-1)
    return np.where(ok[..., 0], np.maximum(h, 0.0), 0.0)


def rms(w: np.ndarray) -> np.ndarray:
    return np.sqrt(np.mean(w * w, axis=-1))


def zero_crossing_rate(w: np.ndarray) -> np.ndarray:
    crossings = (w[..., 1:] * w[..., :-1] < 0).sum(axis=-1)
    return crossings / (w.shape[-1] - 1)


def kurtosis(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pearson kurtosis m4/m2^2 (3 for Gaussian). Returns (value, degenerate mask)."""
    c = w - w.mean(axis=-1, keepdims=True)
    m2 = np.mean(c * c, axis=-1)
    m4 = np.mean(c ** 4, axis=-1)
    scale = np.mean(w * w, axis=-1)
    bad = m2 <= 1e-24 * np.maximum(scale, 1e-300)
    k = np.divide(m4, m2 * m2, out=np.zeros_like(m2), where=~bad)
    return k, bad


def power_spectral_entropy(w: np.ndarray, base: str = "e") -> np.ndarray:
    """Entropy of the periodogram with one bin per FFT frequency."""
    psd = np.abs(np.fft.rfft(w, axis=-1)) ** 2
    return normalized_entropy(psd, base)


def stft_mean_magnitude(w: np.ndarray) -> np.ndarray:
    win = signal.get_window("hann", w.shape[-1])
    return np.abs(np.fft.rfft(w * win, axis=-1)).mean(axis=-1)


# Daubechies-4 (8 tap) scaling filter
DB4_REC_LO = np.array([
    0.23037781330885523, 0.7148465705525415, 0.6308807679295904, -0.02798376941698385,
    -0.18703481171888114, 0.030841381835986965, 0.032883011666982945, -0.010597401784997278,
])
DB4_DEC_LO = DB4_REC_LO[::-1].copy()
DB4_DEC_HI = np.array([(-1) ** (k + 1) * DB4_DEC_LO[len(DB4_DEC_LO) - 1 - k]
                       for k in range(len(DB4_DEC_LO))])


def dwt_level1(w: np.ndarray, dec_lo: np.ndarray = DB4_DEC_LO,
               dec_hi: np.ndarray = DB4_DEC_HI) -> tuple[np.ndarray, np.ndarray]:
    """Single-level DWT with half-sample symmetric extension.

    coeff[i] = sum_k filt[k] * ext[2i + 1 - k], i < floor((N + L - 1) / 2).
    """
    N = w.shape[-1]
    L = len(dec_lo)
    if N < L:
        raise ConfigError(f"window of {N} samples shorter than the {L}-tap wavelet")
    ext = np.concatenate([w[..., : L - 1][..., ::-1], w, w[..., -(L - 1):][..., ::-1]], axis=-1)
    n_out = (N + L - 1) // 2
    # ext index of x~[j] is j + L - 1
    idx = (2 * np.arange(n_out)[:, None] + 1 - np.arange(L)[None, :]) + (L - 1)
    gathered = ext[..., idx]  # (..., n_out, L)
    return gathered @ dec_lo, gathered @ dec_hi


def wavelet_entropies(w: np.ndarray, base: str = "e") -> tuple[np.ndarray, np.ndarray]:
    """Entropy of squared level-1 db4 approximation and detail coefficients."""
    approx, detail = dwt_level1(w)
    floor = 1e-20 * np.maximum(np.sum(w * w, axis=-1, keepdims=True), 1e-300)
    ea = normalized_entropy(approx * approx, base, rel_floor=0.0)
    ed = normalized_entropy(detail * detail, base, rel_floor=0.0)
    ea = np.where((approx * approx).sum(-1) > floor[..., 0], ea, 0.0)
    ed = np.where((detail * detail).sum(-1) > floor[..., 0], ed, 0.0)
    return ea, ed


def band_entropy(w: np.ndarray, sample_rate_hz: float, bands=EEG_BANDS_HZ,
                 min_nfft: int = 2048, base: str = "e") -> np.ndarray:
    """Entropy of the normalized power in [b0,b1), [b1,b2), ... , [b_{n-1}, b_n]."""
    nfft = max(min_nfft, 1 << int(np.ceil(np.log2(w.shape[-1]))))
    psd = np.abs(np.fft.rfft(w, n=nfft, axis=-1)) ** 2
    freqs = np.fft.rfftfreq(nfft, 1.0 / sample_rate_hz)
    powers = []
    for i, (lo, hi) in enumerate(zip(bands[:-1], bands[1:])):
        last = i == len(bands) - 2
        sel = (freqs >= lo) & ((freqs <= hi) if last else (freqs < hi))
        if not sel.any():
            raise ConfigError(f"band [{lo}, {hi}) Hz holds no PSD bin at nfft={nfft}")
        powers.append(psd[..., sel].sum(axis=-1))
    return normalized_entropy(np.stack(powers, axis=-1), base)


def expected_rs(n: int) -> float:
    """Anis-Lloyd expected R/S of an i.i.d. Gaussian series of length n."""
    i = np.arange(1, n)
    ratio = np.exp(gammaln((n - 1) / 2.0) - gammaln(n / 2.0)) / np.sqrt(np.pi)
    return float(ratio * np.sum(np.sqrt((n - i) / i)))


def hurst_rs(w: np.ndarray, lengths=(10, 20, 50), correction: str = "anis-lloyd"):
    """Rescaled-range Hurst exponent over subseries ``lengths`` plus the full N.

    Slope of log(mean R/S) against log(n). With ``correction="anis-lloyd"``
    each point is shifted by log(sqrt(n) / E[R/S]_n), which removes the
    small-n upward bias so white noise sits at 0.5. Returns (value,
    degenerate mask); degenerate windows (e.g. constant) are reported as 0.5.
    """
    if correction not in ("anis-lloyd", "none"):
        raise ConfigError(f"unknown Hurst correction {correction!r}")
    N = w.shape[-1]
    sizes = sorted({n for n in lengths if 2 <= n <= N} | {N})
    flat = w.reshape(-1, N)
    log_rs = np.full((flat.shape[0], len(sizes)), np.nan)
    for j, n in enumerate(sizes):
        k = N // n
        chunks = flat[:, : k * n].reshape(flat.shape[0], k, n)
        dev = np.cumsum(chunks - chunks.mean(axis=-1, keepdims=True), axis=-1)
        r = dev.max(axis=-1) - dev.min(axis=-1)
        s = chunks.std(axis=-1)
        scale = np.sqrt(np.mean(chunks * chunks, axis=-1))
        valid = s > 1e-12 * np.maximum(scale, 1e-300)
        rs = np.where(valid, r / np.where(valid, s, 1.0), np.nan)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN rows
            mean_rs = np.nanmean(rs, axis=-1)
        ok = np.isfinite(mean_rs) & (mean_rs > 0)
        shift = 0.5 * np.log(n) - np.log(expected_rs(n)) if correction == "anis-lloyd" else 0.0
        log_rs[ok, j] = np.log(mean_rs[ok]) + shift
    x = np.log(np.asarray(sizes, dtype=np.float64))
    out = np.full(flat.shape[0], 0.5)
    bad = np.ones(flat.shape[0], dtype=bool)
    for i in range(flat.shape[0]):
        m = np.isfinite(log_rs[i])
        if m.sum() >= 2:
            xs, ys = x[m], log_rs[i, m]
            xc = xs - xs.mean()
            out[i] = float(xc @ (ys - ys.mean()) / (xc @ xc))
            bad[i] = False
    return out.reshape(w.shape[:-1]), bad.reshape(w.shape[:-1])


def petrosian_fd(w: np.ndarray) -> np.ndarray:
    """log10(N) / (log10(N) + log10(N / (N + 0.4 * n_delta)))."""
    N = w.shape[-1]
    d = np.diff(w, axis=-1)
    n_delta = (d[..., 1:] * d[..., :-1] < 0).sum(axis=-1)
    ln = np.log10(N)
    return ln / (ln + np.log10(N / (N + 0.4 * n_delta)))


# -- feature sets --------------------------------------------------------------


def _channel_major(feats: list[np.ndarray]) -> np.ndarray:
    """list of (C, F) arrays -> (F, C * len(feats)), channel-major."""
    return np.stack(feats, axis=-1).transpose(1, 0, 2).reshape(feats[0].shape[1], -1)


def extract_set1(x: RawEeg, w: WindowSpec | None = None,
                 opts: ExtractOptions | None = None) -> FeatureSequence:
    """RMS, zero-crossing rate, moving-window average, kurtosis, PSD entropy."""
    w = w or WindowSpec.for_rate(x.sample_rate_hz)
    opts = opts or ExtractOptions()
    fr = window_frames(x, w)
    k, bad = kurtosis(fr)
    feats = [rms(fr), zero_crossing_rate(fr), fr.mean(axis=-1), k,
             power_spectral_entropy(fr, opts.entropy_log)]
    return FeatureSequence(_channel_major(feats), x.sample_rate_hz / w.hop_samples, "1", int(bad.sum()))


def extract_set2(x: RawEeg, w: WindowSpec | None = None,
                 opts: ExtractOptions | None = None) -> FeatureSequence:
    """Mean STFT magnitude and db4 level-1 approximation/detail entropies."""
    w = w or WindowSpec.for_rate(x.sample_rate_hz)
    opts = opts or ExtractOptions()
    fr = window_frames(x, w)
    ea, ed = wavelet_entropies(fr, opts.entropy_log)
    zero = ~np.any(fr != 0, axis=-1)
    return FeatureSequence(_channel_major([stft_mean_magnitude(fr), ea, ed]),
                           x.sample_rate_hz / w.hop_samples, "2", int(zero.sum()))


def extract_set3(x: RawEeg, w: WindowSpec | None = None,
                 opts: ExtractOptions | None = None) -> FeatureSequence:
    """Delta/theta/alpha/beta band entropy, Hurst exponent, Petrosian FD."""
    w = w or WindowSpec.for_rate(x.sample_rate_hz)
    opts = opts or ExtractOptions()
    fr = window_frames(x, w)
    be = band_entropy(fr, x.sample_rate_hz, min_nfft=opts.set3_min_nfft, base=opts.entropy_log)
    h, bad = hurst_rs(fr, opts.hurst_lengths, opts.hurst_correction)
    return FeatureSequence(_channel_major([be, h, petrosian_fd(fr)]),
                           x.sample_rate_hz / w.hop_samples, "3", int(bad.sum()))


EXTRACTORS = {"1": extract_set1, "2": extract_set2, "3": extract_set3}


def extract(x: RawEeg, set_id, w: WindowSpec | None = None,
            opts: ExtractOptions | None = None) -> FeatureSequence:
    try:
        fn = EXTRACTORS[str(set_id)]
    except KeyError:
        raise ConfigError(f"unknown feature set {set_id!r}") from None
    return fn(x, w, opts)


def select_channels(x: RawEeg, names) -> RawEeg:
    """Subset channels by 10-20 name, in the requested order."""
    names = list(names)
    if not names:
        raise ConfigError("empty channel selection")
    lookup = {n: i for i, n in enumerate(x.channel_names)}
    missing = [n for n in names if n not in lookup]
    if missing:
        raise ConfigError(f"unknown channel(s) {missing}; known: {', '.join(x.channel_names)}")
    idx = [lookup[n] for n in names]
    return RawEeg(x.samples[idx], x.sample_rate_hz, tuple(names))
