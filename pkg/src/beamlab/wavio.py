"""RIFF WAV read/write for multichannel tracks.

Channel order for array recordings is front-left, rear-left, front-right,
rear-right.
"""
from __future__ import annotations

from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .stft import TimeTrackSet

CHANNEL_ORDER = ("front-left", "rear-left", "front-right", "rear-right")


class WavFormatError(ValueError):
    pass


def read_wav(path, expected_rate: int = 24000, resample: bool = False) -> TimeTrackSet:
    rate, data = wavfile.read(str(path))
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float64)
    else:
        raise WavFormatError(f"{path}: unsupported sample format {data.dtype}")
    if rate != expected_rate:
        if not resample:
            raise WavFormatError(
                f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz (pass resample=True to convert)"
            )
        ratio = Fraction(expected_rate, rate).limit_denominator(1000)
        x = resample_poly(x, ratio.numerator, ratio.denominator, axis=0)
    return TimeTrackSet(x, expected_rate)


def write_wav(path, track: TimeTrackSet, fmt: str = "float32") -> Path:
    path = Path(path)
    x = track.samples
    if fmt == "float32":
        data = x.astype(np.float32)
    elif fmt == "int16":
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    else:
        raise WavFormatError(f"unknown WAV format {fmt!r}")
    if data.shape[1] == 1:
        data = data[:, 0]
    wavfile.write(str(path), track.sample_rate, data)
    return path
