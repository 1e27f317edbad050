"""Short-time Fourier analysis and weighted overlap-add synthesis.

Spectra are stored as ``(frame, bin, channel)`` arrays. Analysis frames are
raw windowed spectra; all window normalisation happens at synthesis.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window


class StftError(ValueError):
    pass


@dataclass(frozen=True)
class StftParams:
    sample_rate: int = 24000
    fft_size: int = 256
    hop: int = 128
    window: str = "hann"

    def __post_init__(self):
        if self.fft_size % 2:
            raise StftError(f"fft_size must be even, got {self.fft_size}")
        if self.hop * 2 != self.fft_size:
            raise StftError("hop must be fft_size/2 (50% overlap)")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def freqs(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.sample_rate / self.fft_size

    @property
    def win(self) -> np.ndarray:
        # periodic window: COLA at 50% hop
        return get_window(self.window, self.fft_size, fftbins=True)

    def n_frames(self, n_samples: int) -> int:
        return (n_samples - self.fft_size) // self.hop + 1

    def frames_for_seconds(self, seconds: float) -> int:
        return int(np.ceil(seconds * self.sample_rate / self.hop))


@dataclass
class TimeTrackSet:
    """Equal-length real signals, shape ``(n_samples, n_channels)``."""

    samples: np.ndarray
    sample_rate: int
    role: str = "mixture"

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 1:
            s = s[:, None]
        self.samples = s

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]

    def __len__(self):
        return self.samples.shape[0]


@dataclass
class TFTensor:
    data: np.ndarray
    params: StftParams = field(default_factory=StftParams)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[2]

    def channel(self, m: int) -> np.ndarray:
        return self.data[:, :, m]


def analyze(signal: TimeTrackSet, params: StftParams = StftParams()) -> TFTensor:
    """Frame ``t`` spans samples ``[t*hop, t*hop + fft_size)``; no padding."""
    if signal.sample_rate != params.sample_rate:
        raise StftError(
            f"sample rate {signal.sample_rate} Hz does not match STFT rate {params.sample_rate} Hz"
        )
    x = signal.samples
    if x.shape[0] < params.fft_size:
        raise StftError(f"signal has {x.shape[0]} samples, need at least fft_size={params.fft_size}")
    n_frames = params.n_frames(x.shape[0])
    # (channel, frame, sample) view
    frames = sliding_window_view(x.T, params.fft_size, axis=1)[:, ::params.hop][:, :n_frames]
    spec = np.fft.rfft(frames * params.win, axis=-1)
    return TFTensor(np.ascontiguousarray(spec.transpose(1, 2, 0)), params)


def synthesize(tf: TFTensor | np.ndarray, params: StftParams = StftParams(),
               length: int | None = None) -> TimeTrackSet:
    """Weighted overlap-add inverse of :func:`analyze`.

    Accepts a ``TFTensor`` or a bare ``(frame, bin[, channel])`` array. Samples
    not covered by any frame (beyond the last frame, or up to ``length``) are
    zero.
    """
    if isinstance(tf, TFTensor):
        params = tf.params
        data = tf.data
    else:
        data = np.asarray(tf)
    if data.ndim == 2:
        data = data[:, :, None]
    if data.shape[1] != params.n_bins:
        raise StftError(f"tensor has {data.shape[1]} bins, expected {params.n_bins}")
    n_frames, _, n_ch = data.shape
    win = params.win
    hop, n = params.hop, params.fft_size
    out_len = (n_frames - 1) * hop + n
    frames = np.fft.irfft(data, n=n, axis=1) * win[None, :, None]
    y = np.zeros((out_len, n_ch))
    norm = np.zeros(out_len)
    # at 50% hop, frames of one parity tile the time axis back to back
    for parity in (0, 1):
        sel = frames[parity::2]
        k = sel.shape[0]
        off = parity * hop
        y[off:off + k * n] += sel.reshape(k * n, n_ch)
        norm[off:off + k * n] += np.tile(win ** 2, k)
    nz = norm > 1e-12
    y[nz] /= norm[nz, None]
    if length is not None:
        if length >= out_len:
            y = np.vstack([y, np.zeros((length - out_len, n_ch))])
        else:
            y = y[:length]
    return TimeTrackSet(y, params.sample_rate)


def interior_slice(n_frames: int, params: StftParams = StftParams()) -> slice:
    """Samples covered by two frames (fully overlapped region)."""
    return slice(params.hop, n_frames * params.hop)
