"""Parametric rigid-sphere head model and binaural scene rendering.

Azimuths are in degrees, counterclockwise, 0 = front, 90 = left. Microphone
order is front-left, rear-left, front-right, rear-right; the reference
microphones are front-left (index 0) and front-right (index 2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import butter, fftconvolve, sosfilt

from .stft import StftParams, TimeTrackSet

REF_LEFT = 0
REF_RIGHT = 2
N_MICS = 4
IR_LENGTH = 4096


class AcousticsError(ValueError):
    pass


@dataclass(frozen=True)
class ArrayGeometry:
    head_radius: float = 0.0875
    ear_azimuth: float = 100.0
    mic_spacing: float = 0.012
    speed_of_sound: float = 343.0
    source_distance: float = 1.0

    @property
    def mic_azimuths(self) -> np.ndarray:
        """Angular position of each microphone on the head circle (deg)."""
        half = math.degrees(math.asin(self.mic_spacing / (2 * self.head_radius)))
        e = self.ear_azimuth
        az = np.array([e - half, e + half, -(e - half), -(e + half)])
        return np.mod(az, 360.0)

    def path_lengths(self, theta: float) -> np.ndarray:
        """Shortest source-to-mic path, wrapping around the head when occluded."""
        r, dist = self.head_radius, self.source_distance
        gamma = np.radians(_angle_between(theta, self.mic_azimuths))
        horizon = math.acos(r / dist)
        direct = np.sqrt(dist ** 2 + r ** 2 - 2 * dist * r * np.cos(gamma))
        wrapped = math.sqrt(dist ** 2 - r ** 2) + r * (gamma - horizon)
        return np.where(gamma <= horizon, direct, wrapped)

    def delays(self, theta: float) -> np.ndarray:
        return self.path_lengths(theta) / self.speed_of_sound


@dataclass(frozen=True)
class Reverberant:
    """Reverberant variant: direct path plus a decaying random tail."""

    t60: float = 0.15
    drr_db: float = 5.0
    seed: int = 0
    coherent_samples: int = 50

    def __post_init__(self):
        if self.t60 <= 0:
            raise AcousticsError(f"t60 must be positive, got {self.t60}")


ANECHOIC = "anechoic"


@dataclass
class DirectivitySet:
    """Complex responses ``d_m(f, theta)`` on an azimuth grid, shape ``(angle, bin, mic)``."""

    responses: np.ndarray
    angles: np.ndarray
    freqs: np.ndarray
    variant: object = ANECHOIC

    def index(self, theta: float, snap: bool = False) -> int:
        theta = float(np.mod(theta, 360.0))
        diff = np.abs(_angle_between(theta, self.angles))
        i = int(np.argmin(diff))
        if diff[i] > 1e-9 and not snap:
            raise AcousticsError(f"angle {theta} deg is not on the directivity grid")
        return i

    def at(self, theta: float, snap: bool = False) -> np.ndarray:
        """``(bin, mic)`` responses for one azimuth."""
        return self.responses[self.index(theta, snap)]


def _angle_between(a, b):
    """Absolute angular separation in degrees, in [0, 180]."""
    d = np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float), 360.0)
    return np.minimum(d, 360.0 - d)


def shadow_gain(freqs: np.ndarray, separation_deg: np.ndarray) -> np.ndarray:
    """Real head-shadow gain, ``(bin, mic)``; full attenuation on the far side."""
    a_max = np.minimum(20 * np.log10(1 + np.asarray(freqs) / 1500.0), 18.0)
    weight = (1 - np.cos(np.radians(separation_deg))) / 2
    return 10 ** (-a_max[:, None] * weight[None, :] / 20)


def _check_angle(theta):
    if not 0.0 <= theta < 360.0:
        raise AcousticsError(f"azimuth must lie in [0, 360), got {theta}")


def anechoic_response(geometry: ArrayGeometry, theta: float, freqs: np.ndarray,
                      sample_rate: int) -> np.ndarray:
    path = geometry.path_lengths(theta)
    tau = path / geometry.speed_of_sound
    g = shadow_gain(freqs, _angle_between(theta, geometry.mic_azimuths))
    d = g * np.exp(-2j * np.pi * np.outer(freqs, tau)) / path
    # the Nyquist response of a real impulse response is real
    nyq = np.isclose(freqs, sample_rate / 2)
    d[nyq] = d[nyq].real
    return d


def impulse_responses(geometry: ArrayGeometry, theta: float, variant=ANECHOIC,
                      sample_rate: int = 24000, n_ir: int = IR_LENGTH) -> np.ndarray:
    """Per-mic impulse responses, shape ``(n_ir, mic)``."""
    _check_angle(theta)
    dense = np.arange(n_ir // 2 + 1) * sample_rate / n_ir
    ir = np.fft.irfft(anechoic_response(geometry, theta, dense, sample_rate), n=n_ir, axis=0)
    if variant == ANECHOIC:
        return ir
    if not isinstance(variant, Reverberant):
        raise AcousticsError(f"unknown directivity variant {variant!r}")
    return ir + _reverb_tail(geometry, theta, variant, ir, sample_rate)


def _reverb_tail(geometry, theta, rv: Reverberant, direct_ir, sample_rate):
    n_ir = direct_ir.shape[0]
    # one room per (seed, angle); millidegree resolution keeps nearby angles distinct
    rng = np.random.default_rng([rv.seed, int(round(theta * 1000))])
    onsets = np.round(geometry.delays(theta) * sample_rate).astype(int) + 1
    n_tail = n_ir - onsets.max()
    early = rng.standard_normal(rv.coherent_samples)
    late = rng.standard_normal((n_tail, N_MICS))
    t = np.arange(n_tail) / sample_rate
    envelope = 10 ** (-3 * t / rv.t60)
    tail = np.zeros_like(direct_ir)
    for m in range(N_MICS):
        noise = late[:, m].copy()
        k = min(rv.coherent_samples, n_tail)
        noise[:k] = early[:k]
        shaped = noise * envelope
        direct_energy = np.sum(direct_ir[:, m] ** 2)
        shaped *= np.sqrt(direct_energy / (np.sum(shaped ** 2) * 10 ** (rv.drr_db / 10)))
        tail[onsets[m]:onsets[m] + n_tail, m] = shaped
    return tail


def directivity(geometry: ArrayGeometry, theta: float, variant=ANECHOIC,
                params: StftParams = StftParams()) -> np.ndarray:
    """Per-bin complex 4-vector ``d(f, theta)``, shape ``(bin, mic)``."""
    _check_angle(theta)
    if variant == ANECHOIC:
        return anechoic_response(geometry, theta, params.freqs, params.sample_rate)
    ir = impulse_responses(geometry, theta, variant, params.sample_rate)
    step = ir.shape[0] // params.fft_size
    return np.fft.rfft(ir, axis=0)[::step]


def directivity_set(geometry: ArrayGeometry = ArrayGeometry(), variant=ANECHOIC,
                    params: StftParams = StftParams(), step_deg: float = 5.0) -> DirectivitySet:
    angles = np.arange(0.0, 360.0, step_deg)
    resp = np.stack([directivity(geometry, a, variant, params) for a in angles])
    return DirectivitySet(resp, angles, params.freqs, variant)


def render_point_source(src: np.ndarray, geometry: ArrayGeometry, theta: float,
                        variant=ANECHOIC, sample_rate: int = 24000) -> TimeTrackSet:
    """Convolve a mono source with the four microphone impulse responses.

    Output has the length of ``src`` (the convolution tail is dropped).
    """
    src = np.asarray(src, dtype=float)
    ir = impulse_responses(geometry, float(np.mod(theta, 360.0)), variant, sample_rate)
    out = fftconvolve(src[:, None], ir, axes=0)[: src.shape[0]]
    return TimeTrackSet(out, sample_rate, role="point")


def _speech_spectrum_sos(sample_rate):
    hp = butter(2, 100, "highpass", fs=sample_rate, output="sos")
    lp = butter(1, 500, "lowpass", fs=sample_rate, output="sos")
    return np.vstack([hp, lp])


def speech_shaped_noise(n: int, rng: np.random.Generator, sample_rate: int = 24000) -> np.ndarray:
    x = sosfilt(_speech_spectrum_sos(sample_rate), rng.standard_normal(n))
    return x / np.sqrt(np.mean(x ** 2))


def _syllabic_drive(m: int, rng: np.random.Generator, rate: float) -> np.ndarray:
    """Unit-variance 2-8 Hz band-limited noise sampled at ``rate``."""
    sos = butter(2, [2.0, 8.0], "bandpass", fs=rate, output="sos")
    b = sosfilt(sos, rng.standard_normal(m + 400))[400:]
    return b / np.std(b)


def syllabic_envelope(n: int, rng: np.random.Generator, sample_rate: int = 24000,
                      depth: float = 1.2) -> np.ndarray:
    """Log-normal envelope driven by 2-8 Hz band-limited noise."""
    # filter at a low rate, then interpolate: the band is far below audio rates
    dec = 100
    m = n // dec + 2
    coarse = np.exp(depth * _syllabic_drive(m, rng, sample_rate / dec))
    env = np.interp(np.arange(n) / dec, np.arange(m), coarse)
    return env / np.sqrt(np.mean(env ** 2))


def pause_gate(n: int, rng: np.random.Generator, sample_rate: int = 24000, pause_fraction: float = 0.2,
               mean_pause: float = 0.15, floor_db: float = -40.0, ramp: float = 0.01) -> np.ndarray:
    """Talk-spurt/pause gate: 1 while talking, ``floor_db`` during pauses.

    Pause and spurt lengths are exponential; spurts average
    ``mean_pause * (1 - pause_fraction) / pause_fraction`` seconds.
    """
    mean_spurt = mean_pause * (1 - pause_fraction) / pause_fraction
    gate = np.ones(n)
    t = rng.exponential(mean_spurt) * sample_rate
    while t < n:
        length = max(rng.exponential(mean_pause), 2 * ramp) * sample_rate
        gate[int(t):int(t + length)] = 0.0
        t += length + rng.exponential(mean_spurt) * sample_rate
    k = max(int(ramp * sample_rate), 1)
    gate = np.convolve(gate, np.hanning(k + 2)[1:-1] / np.hanning(k + 2)[1:-1].sum(), mode="same")
    floor = 10 ** (floor_db / 20)
    return floor + (1 - floor) * np.clip(gate, 0.0, 1.0)


def builtin_speech_source(duration: float, seed, sample_rate: int = 24000, depth: float = 1.0,
                          n_bands: int = 12, shared: float = 0.5, pause_fraction: float = 0.2) -> np.ndarray:
    """Amplitude-modulated speech-shaped noise at unit RMS; deterministic per seed.

    White noise is split into ``n_bands`` log-spaced bands, each modulated by
    its own log-normal syllabic envelope (``depth`` nepers) whose drive is
    partly ``shared`` across bands; a common gate inserts inter-word pauses.
    Like running speech, the result is sparse in time and frequency while
    keeping the long-term speech spectrum.
    """
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    dec = 100
    m = n // dec + 2
    common = _syllabic_drive(m, rng, sample_rate / dec)
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1 / sample_rate)
    edges = np.geomspace(100.0, sample_rate / 2, n_bands + 1)
    band = np.clip(np.searchsorted(edges, f, side="right") - 1, 0, n_bands - 1)
    t_fine = np.arange(n) / dec
    x = np.zeros(n)
    for k in range(n_bands):
        drive = shared * common + math.sqrt(1 - shared ** 2) * _syllabic_drive(m, rng, sample_rate / dec)
        env = np.interp(t_fine, np.arange(m), np.exp(depth * drive))
        x += np.fft.irfft(np.where(band == k, spec, 0), n) * env
    x *= pause_gate(n, rng, sample_rate, pause_fraction)
    x = sosfilt(_speech_spectrum_sos(sample_rate), x)
    return x / np.sqrt(np.mean(x ** 2))


DIFFUSE_AZIMUTHS = tuple(range(0, 360, 45))


def render_diffuse(duration: float, level_db: float, seed, geometry: ArrayGeometry = ArrayGeometry(),
                   sample_rate: int = 24000) -> TimeTrackSet:
    """Eight independent speech-shaped noise sources on a 1 m circle.

    Calibrated so the front-left RMS equals ``10**(level_db/20)``.
    """
    if duration <= 0:
        raise AcousticsError("duration must be positive")
    n = int(round(duration * sample_rate))
    children = np.random.SeedSequence(_seed_entropy(seed)).spawn(len(DIFFUSE_AZIMUTHS))
    total = np.zeros((n, N_MICS))
    for az, child in zip(DIFFUSE_AZIMUTHS, children):
        src = speech_shaped_noise(n, np.random.default_rng(child), sample_rate)
        total += render_point_source(src, geometry, az, ANECHOIC, sample_rate).samples
    total *= 10 ** (level_db / 20) / _rms(total[:, REF_LEFT])
    return TimeTrackSet(total, sample_rate, role="diffuse")


def _rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


def _seed_entropy(seed):
    if isinstance(seed, (list, tuple)):
        return [int(s) for s in seed]
    return int(seed)


@dataclass
class SceneTracks:
    """Per-component microphone signals; ``mixture`` is their exact sum."""

    target: TimeTrackSet
    interferers: list[TimeTrackSet]
    diffuse: TimeTrackSet | None
    mixture: TimeTrackSet
    target_deg: float
    interferer_degs: list[float] = field(default_factory=list)

    @property
    def sample_rate(self) -> int:
        return self.mixture.sample_rate

    def interferer_sum(self) -> TimeTrackSet | None:
        if not self.interferers:
            return None
        return TimeTrackSet(sum(v.samples for v in self.interferers), self.sample_rate, "interferer")

    def mirrored(self) -> "SceneTracks":
        """Swap left and right channels (mirror about the median plane)."""
        def flip(tr):
            if tr is None:
                return None
            return TimeTrackSet(tr.samples[:, [2, 3, 0, 1]], tr.sample_rate, tr.role)
        return SceneTracks(
            flip(self.target), [flip(v) for v in self.interferers], flip(self.diffuse),
            flip(self.mixture), float(np.mod(-self.target_deg, 360)),
            [float(np.mod(-a, 360)) for a in self.interferer_degs],
        )

    def scaled(self, c: float) -> "SceneTracks":
        def sc(tr):
            return None if tr is None else TimeTrackSet(tr.samples * c, tr.sample_rate, tr.role)
        return SceneTracks(sc(self.target), [sc(v) for v in self.interferers], sc(self.diffuse),
                           sc(self.mixture), self.target_deg, list(self.interferer_degs))


def environment_variant(environment: str, room_seed: int = 0, t60: float = 0.15, drr_db: float = 5.0):
    if environment == "anechoic":
        return ANECHOIC
    if environment == "reverberant":
        return Reverberant(t60=t60, drr_db=drr_db, seed=room_seed)
    raise AcousticsError(f"unknown environment {environment!r}")


def compose_scene(spec, geometry: ArrayGeometry = ArrayGeometry(), sample_rate: int = 24000,
                  source_level: float = 0.05, sources: Sequence[np.ndarray] | None = None) -> SceneTracks:
    """Render target, interferers and diffuse field at their true angles.

    ``spec`` needs ``true_target_deg``, ``interferer_true_degs``,
    ``diffuse_rel_db`` (None for no diffuse field), ``environment``,
    ``duration_s`` and ``seed``. Directional sources are calibrated to equal
    RMS ``source_level`` at the front-left microphone; the diffuse field sits
    ``diffuse_rel_db`` relative to that.
    """
    target_deg = float(np.mod(spec.true_target_deg, 360))
    interf_degs = [float(np.mod(a, 360)) for a in spec.interferer_true_degs]
    for a in interf_degs:
        if _angle_between(a, target_deg) < 1e-9:
            raise AcousticsError(f"interferer at {a} deg coincides with the target")
    n = int(round(spec.duration_s * sample_rate))
    variant = environment_variant(spec.environment, getattr(spec, "room_seed", 0))
    seq = np.random.SeedSequence(_seed_entropy(spec.seed))
    src_seeds = seq.spawn(1 + len(interf_degs) + 1)
    if sources is None:
        sources = [builtin_speech_source(spec.duration_s, s, sample_rate) for s in src_seeds[:-1]]
    sources = [_fit_length(s, n) for s in sources]

    def directional(sig, az):
        tr = render_point_source(sig, geometry, az, variant, sample_rate)
        tr.samples *= source_level / _rms(tr.samples[:, REF_LEFT])
        return tr

    target = directional(sources[0], target_deg)
    target.role = "target"
    interferers = []
    for i, (sig, az) in enumerate(zip(sources[1:], interf_degs)):
        tr = directional(sig, az)
        tr.role = f"interferer{i + 1}"
        interferers.append(tr)
    diffuse = None
    if spec.diffuse_rel_db is not None:
        level = 20 * np.log10(source_level) + spec.diffuse_rel_db
        diffuse = render_diffuse(spec.duration_s, level, src_seeds[-1].generate_state(2).tolist(),
                                 geometry, sample_rate)
    mix = target.samples.copy()
    for v in interferers:
        mix += v.samples
    if diffuse is not None:
        mix += diffuse.samples
    return SceneTracks(target, interferers, diffuse, TimeTrackSet(mix, sample_rate, "mixture"),
                       target_deg, interf_degs)


def _fit_length(x, n):
    x = np.asarray(x, dtype=float)
    if x.ndim > 1:
        x = x[:, 0]
    if x.shape[0] >= n:
        return x[:n]
    reps = int(np.ceil(n / x.shape[0]))
    return np.tile(x, reps)[:n]
