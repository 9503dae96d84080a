"""MFCC analysis and Griffin-Lim resynthesis from 13 MFCCs."""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import fft as sfft
from scipy import signal

from .features import FeatureSequence, append_deltas

SAMPLE_RATE_HZ = 16000
FRAME_LEN = 400  # 25 ms
HOP = 160  # 10 ms
NFFT = 512
N_MELS = 26
N_MFCC = 13
PRE_EMPHASIS = 0.97
LOG_FLOOR = 1e-10


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE_HZ

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.samples.size == 0:
            raise ValueError("empty audio clip")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("audio contains non-finite samples")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int = N_MELS, nfft: int = NFFT, sample_rate_hz: int = SAMPLE_RATE_HZ,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular filters (n_mels, nfft//2 + 1), unit peak, evaluated at bin centres."""
    fmax = sample_rate_hz / 2 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(nfft // 2 + 1) * sample_rate_hz / nfft
    lo, c, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs[None] - lo) / (c - lo)
    down = (hi - freqs[None]) / (hi - c)
    return np.maximum(0.0, np.minimum(up, down))


MEL_FB = mel_filterbank()
WINDOW = signal.get_window("hann", FRAME_LEN)


def pre_emphasis(x: np.ndarray, coef: float = PRE_EMPHASIS) -> np.ndarray:
    return np.concatenate([x[:1], x[1:] - coef * x[:-1]])


def frame_count(n_samples: int) -> int:
    if n_samples < FRAME_LEN:
        raise ValueError(f"clip of {n_samples} samples is shorter than one 25 ms frame")
    return (n_samples - FRAME_LEN) // HOP + 1


def stft(x: np.ndarray) -> np.ndarray:
    """Hann-windowed STFT (frames, NFFT//2 + 1); frames are zero-padded to NFFT."""
    n = frame_count(x.size)
    fr = np.lib.stride_tricks.sliding_window_view(x, FRAME_LEN)[:: HOP][:n]
    return np.fft.rfft(fr * WINDOW, n=NFFT, axis=-1)


def istft(spec: np.ndarray, min_coverage: float = 0.1) -> np.ndarray:
    """Least-squares inverse of :func:`stft` (weighted overlap-add).

    Samples whose summed squared window weight is below ``min_coverage`` of
    the peak are pinned to zero; the solution is still an exact least-squares
    projection, onto signals that vanish there.
    """
    n = spec.shape[0]
    frames = np.fft.irfft(spec, n=NFFT, axis=-1)[:, :FRAME_LEN] * WINDOW
    length = (n - 1) * HOP + FRAME_LEN
    out = np.zeros(length)
    norm = np.zeros(length)
    for m in range(n):
        out[m * HOP: m * HOP + FRAME_LEN] += frames[m]
        norm[m * HOP: m * HOP + FRAME_LEN] += WINDOW ** 2
    free = norm >= min_coverage * norm.max()
    np.divide(out, norm, out=out, where=free)
    out[~free] = 0.0
    return out


def power_spectrum(clip: AudioClip) -> np.ndarray:
    x = pre_emphasis(clip.samples)
    return np.abs(stft(x)) ** 2 / NFFT


def log_mel(clip: AudioClip) -> np.ndarray:
    return np.log(np.maximum(power_spectrum(clip) @ MEL_FB.T, LOG_FLOOR))


def mfcc13(clip: AudioClip) -> FeatureSequence:
    """13 cepstral coefficients at 100 frames/s (orthonormal DCT-II of log-mel)."""
    if clip.sample_rate_hz != SAMPLE_RATE_HZ:
        raise ValueError(f"expected {SAMPLE_RATE_HZ} Hz audio, got {clip.sample_rate_hz}")
    c = sfft.dct(log_mel(clip), type=2, norm="ortho", axis=-1)[:, :N_MFCC]
    return FeatureSequence(c, SAMPLE_RATE_HZ / HOP, "mfcc")


def mfcc39(clip: AudioClip) -> FeatureSequence:
    return append_deltas(mfcc13(clip))


# -- inversion -----------------------------------------------------------------


@dataclass
class GriffinLimResult:
    clip: AudioClip
    residuals: list[float]  # per iteration, relative magnitude mismatch


def mfcc_to_magnitude(mfcc: np.ndarray) -> np.ndarray:
    """13 MFCC -> linear STFT magnitude via inverse DCT and clamped mel pseudo-inverse."""
    c = np.zeros((mfcc.shape[0], N_MELS))
    c[:, : mfcc.shape[1]] = mfcc
    mel_energy = np.exp(sfft.idct(c, type=2, norm="ortho", axis=-1))
    power = np.maximum(mel_energy @ np.linalg.pinv(MEL_FB).T, 0.0)
    return np.sqrt(power * NFFT)


def _bin_weights() -> np.ndarray:
    w = np.full(NFFT // 2 + 1, 2.0)
    w[0] = w[-1] = 1.0
    return w


def _residual(spec: np.ndarray, target: np.ndarray, weights: np.ndarray) -> float:
    diff = np.abs(spec) - target
    den = float(np.sum(weights * target * target))
    return float(np.sqrt(np.sum(weights * diff * diff) / max(den, 1e-300)))


def griffin_lim_reconstruct(m: FeatureSequence | np.ndarray, iters: int = 60, seed: int = 0,
                            de_emphasis: bool = True) -> GriffinLimResult:
    """Rebuild audio from MFCC frames with Griffin-Lim phase iterations.

    The residual is the full-spectrum distance between the re-analysed STFT
    magnitude and the target magnitude; with the least-squares ``istft`` it
    cannot increase from one iteration to the next.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    frames = np.asarray(getattr(m, "frames", m), dtype=np.float64)
    if not np.all(np.isfinite(frames)):
        raise ValueError("MFCC input contains non-finite values")
    target = mfcc_to_magnitude(frames)
    weights = _bin_weights()
    rng = np.random.default_rng(seed)
    spec = target * np.exp(2j * np.pi * rng.random(target.shape))
    residuals = []
    for _ in range(iters):
        x = istft(spec)
        analysed = stft(x)
        residuals.append(_residual(analysed, target, weights))
        spec = target * np.exp(1j * np.angle(analysed))
    if de_emphasis:
        x = signal.lfilter([1.0], [1.0, -PRE_EMPHASIS], x)
    return GriffinLimResult(AudioClip(x, SAMPLE_RATE_HZ), residuals)


# -- WAV I/O -----------------------------------------------------------------------


def write_wav(path, clip: AudioClip) -> None:
    pcm = np.clip(np.round(clip.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(clip.sample_rate_hz))
        w.writeframes(pcm.tobytes())


def read_wav(path) -> AudioClip:
    with wave.open(str(Path(path)), "rb") as w:
        if w.getnchannels() != 1 or w.getsampwidth() != 2:
            raise ValueError(f"{path}: expected mono 16-bit PCM")
        rate = w.getframerate()
        raw = w.readframes(w.getnframes())
    return AudioClip(np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0, rate)
