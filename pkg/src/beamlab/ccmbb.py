"""Coherence-based classification and mixing of binaural beamformer outputs.

Per side, the beamformer output ``z`` is compared with the front-microphone
noisy signal ``y``. Below the crossover the output phase is taken from
either ``z`` or ``y`` depending on the phase of their short-window
coherence; at and above it the output magnitude is a weighted mix of
``|z|`` and ``|y|`` chosen by comparing the short-window coherence
magnitude against a long-window threshold. The other polar component is
always the beamformer's.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .stft import StftParams


@dataclass(frozen=True)
class CcmbbParams:
    mu: float = 0.1
    alpha: float = 0.7
    crossover_hz: float = 1500.0
    short_window: int = 10
    long_window: int = 40
    threshold_clamp: tuple = (0.05, 0.999)

    def __post_init__(self):
        if not 0 <= self.mu < 1:
            raise ValueError(f"mu must be in [0, 1), got {self.mu}")
        if not 0.5 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0.5, 1], got {self.alpha}")
        if self.short_window < 2 or self.short_window >= self.long_window:
            raise ValueError("need 2 <= short_window < long_window")


@dataclass
class DecisionMap:
    """Per-frame branch choices for one side.

    ``phase_from_beamformer`` covers bins ``[0, crossover)``;
    ``emphasize_beamformer`` covers bins ``[crossover, n_bins)``.
    """

    side: str
    crossover: int
    phase_from_beamformer: np.ndarray
    emphasize_beamformer: np.ndarray

    def rows(self):
        for t, f in np.ndindex(*self.phase_from_beamformer.shape):
            yield t, f, self.side, "phase", "beamformer" if self.phase_from_beamformer[t, f] else "noisy"
        c = self.crossover
        for t, f in np.ndindex(*self.emphasize_beamformer.shape):
            branch = "emphasize-beamformer" if self.emphasize_beamformer[t, f] else "emphasize-noisy"
            yield t, f + c, self.side, "magnitude", branch


def write_decisions_csv(path, maps):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["# beamlab-decisions v1"])
        w.writerow(["frame", "bin", "side", "rule", "branch"])
        for dm in maps:
            w.writerows(dm.rows())


def crossover_bin(crossover_hz: float, params: StftParams = StftParams()) -> int:
    """First bin whose centre frequency is at or above the crossover."""
    nyquist = params.sample_rate / 2
    if crossover_hz >= nyquist:
        raise ValueError(f"crossover {crossover_hz} Hz must lie below Nyquist ({nyquist} Hz)")
    return int(np.ceil(crossover_hz * params.fft_size / params.sample_rate - 1e-9))


def _trailing_mean(x, window):
    acc = lfilter(np.ones(window), 1.0, x, axis=0)
    counts = np.minimum(np.arange(1, x.shape[0] + 1), window)
    return acc / counts.reshape((-1,) + (1,) * (x.ndim - 1))


def sliding_coherence(z, y, window: int, floor_rel: float = 1e-12):
    """Complex coherence over the trailing ``window`` frames, shape (frame, bin).

    Frames with fewer than ``window`` predecessors average what is available.
    Where an auto-PSD falls below ``floor_rel`` times the track's mean power
    the coherence is 0.
    """
    if window < 2:
        raise ValueError("window must be at least 2 frames")
    z = np.asarray(z)
    y = np.asarray(y)
    p_zz = _trailing_mean(np.abs(z) ** 2, window)
    p_yy = _trailing_mean(np.abs(y) ** 2, window)
    p_zy = _trailing_mean(z * np.conj(y), window)
    fz = floor_rel * np.mean(np.abs(z) ** 2)
    fy = floor_rel * np.mean(np.abs(y) ** 2)
    ok = (p_zz > fz) & (p_yy > fy) & (p_zz > 0) & (p_yy > 0)
    out = np.zeros_like(p_zy)
    out[ok] = p_zy[ok] / np.sqrt(p_zz[ok] * p_yy[ok])
    return out


def phase_rule(z, y, C, mu):
    """Output phase and a mask that is True where the beamformer phase is kept."""
    keep = np.abs(np.angle(C)) <= mu * np.pi
    return np.where(keep, np.angle(z), np.angle(y)), keep


def magnitude_rule(z, y, C, T, alpha):
    """Output magnitude and a mask that is True on the beamformer-emphasis branch."""
    az, ay = np.abs(z), np.abs(y)
    emph = np.abs(C) < T
    mag = np.where(emph, alpha * az + (1 - alpha) * ay, (1 - alpha) * az + alpha * ay)
    return mag, emph


def ccmbb_side(z, y, params: CcmbbParams, stft: StftParams = StftParams(), side: str = "left"):
    c = crossover_bin(params.crossover_hz, stft)
    C = sliding_coherence(z, y, params.short_window)
    T = np.clip(np.abs(sliding_coherence(z[:, c:], y[:, c:], params.long_window)), *params.threshold_clamp)
    out = np.empty_like(z, dtype=complex)
    phase, keep = phase_rule(z[:, :c], y[:, :c], C[:, :c], params.mu)
    out[:, :c] = np.abs(z[:, :c]) * np.exp(1j * phase)
    mag, emph = magnitude_rule(z[:, c:], y[:, c:], C[:, c:], T, params.alpha)
    out[:, c:] = mag * np.exp(1j * np.angle(z[:, c:]))
    return out, DecisionMap(side, c, keep, emph)


def apply_ccmbb(z_l, z_r, y_l, y_r, params: CcmbbParams = CcmbbParams(), stft: StftParams = StftParams()):
    """Post-process both sides independently.

    ``y_l``/``y_r`` are the front-microphone noisy spectra of each side.
    Returns ``(zm_l, zm_r, {"left": DecisionMap, "right": DecisionMap})``.
    """
    zm_l, dm_l = ccmbb_side(z_l, y_l, params, stft, "left")
    zm_r, dm_r = ccmbb_side(z_r, y_r, params, stft, "right")
    return zm_l, zm_r, {"left": dm_l, "right": dm_r}
