"""Binary containers for raw EEG ("NTEG") and feature sequences ("NTFS").

NTEG: magic, u32 version, u16 channels, f64 sample rate, u64 length, then the
channel-major f64 payload. NTFS: magic, f64 frame rate, u32 dim, u64 frames,
then the time-major f64 payload. All fields little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .eeg import RawEeg
from .features import FeatureSequence

EEG_MAGIC = b"NTEG"
EEG_VERSION = 1
FEAT_MAGIC = b"NTFS"

_EEG_HEADER = struct.Struct("<4sIHdQ")
_FEAT_HEADER = struct.Struct("<4sdIQ")


class FormatError(ValueError):
    pass


def write_eeg(path, x: RawEeg) -> None:
    samples = np.ascontiguousarray(x.samples, dtype="<f8")
    header = _EEG_HEADER.pack(EEG_MAGIC, EEG_VERSION, samples.shape[0],
                              float(x.sample_rate_hz), samples.shape[1])
    Path(path).write_bytes(header + samples.tobytes())


def read_eeg(path) -> RawEeg:
    buf = Path(path).read_bytes()
    if len(buf) < _EEG_HEADER.size:
        raise FormatError(f"{path}: truncated EEG header")
    magic, version, channels, rate, length = _EEG_HEADER.unpack_from(buf)
    if magic != EEG_MAGIC:
        raise FormatError(f"{path}: not an NTEG file")
    if version != EEG_VERSION:
        raise FormatError(f"{path}: unsupported NTEG version {version}")
    expected = _EEG_HEADER.size + 8 * channels * length
    if len(buf) != expected:
        raise FormatError(f"{path}: payload has {len(buf)} bytes, expected {expected}")
    data = np.frombuffer(buf, dtype="<f8", offset=_EEG_HEADER.size).reshape(channels, length)
    return RawEeg(data.astype(np.float64), rate)


def write_features(path, f: FeatureSequence) -> None:
    frames = np.ascontiguousarray(f.frames, dtype="<f8")
    header = _FEAT_HEADER.pack(FEAT_MAGIC, float(f.frame_rate_hz), frames.shape[1], frames.shape[0])
    Path(path).write_bytes(header + frames.tobytes())


def read_features(path, set_id: str = "") -> FeatureSequence:
    buf = Path(path).read_bytes()
    if len(buf) < _FEAT_HEADER.size:
        raise FormatError(f"{path}: truncated feature header")
    magic, rate, dim, frames = _FEAT_HEADER.unpack_from(buf)
    if magic != FEAT_MAGIC:
        raise FormatError(f"{path}: not an NTFS file")
    expected = _FEAT_HEADER.size + 8 * dim * frames
    if len(buf) != expected:
        raise FormatError(f"{path}: payload has {len(buf)} bytes, expected {expected}")
    data = np.frombuffer(buf, dtype="<f8", offset=_FEAT_HEADER.size).reshape(frames, dim)
    return FeatureSequence(data.astype(np.float64), rate, set_id)
