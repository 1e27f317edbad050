import math

import numpy as np
import pytest
from scipy.signal import coherence, welch

from beamlab.acoustics import (
    ANECHOIC, AcousticsError, ArrayGeometry, Reverberant, builtin_speech_source, compose_scene,
    directivity, render_diffuse, render_point_source, shadow_gain,
)
from beamlab.harness import ScenarioSpec
from beamlab.stft import StftParams

FS = 24000
GEO = ArrayGeometry()


def path_oracle(theta, mic_az, r=0.0875, dist=1.0):
    """Source on a circle of radius ``dist``; rigid circular head of radius ``r``."""
    gamma = math.radians(min(abs(theta - mic_az) % 360, 360 - abs(theta - mic_az) % 360))
    horizon = math.acos(r / dist)
    if gamma <= horizon:
        return math.sqrt(dist ** 2 + r ** 2 - 2 * dist * r * math.cos(gamma))
    return math.sqrt(dist ** 2 - r ** 2) + r * (gamma - horizon)


def test_mic_layout():
    az = GEO.mic_azimuths
    # front-left, rear-left, front-right, rear-right
    assert az[0] < 100 < az[1]
    assert np.allclose(np.mod(-az[0], 360), az[2])
    chord = 2 * GEO.head_radius * math.sin(math.radians(az[1] - az[0]) / 2)
    assert chord == pytest.approx(0.012)


def test_frontal_symmetry(params):
    d = directivity(GEO, 0.0)
    assert np.allclose(np.abs(d[:, 0]), np.abs(d[:, 2]))
    assert np.allclose(np.angle(d[:, 2] * np.conj(d[:, 0])), 0, atol=1e-12)


def test_lateral_itd_matches_path_lengths():
    tau = GEO.delays(90.0)
    assert tau[0] < tau[2]
    az = GEO.mic_azimuths
    itd = (path_oracle(90, az[2]) - path_oracle(90, az[0])) / 343.0
    assert tau[2] - tau[0] == pytest.approx(itd, rel=1e-12)
    assert 0.5e-3 < itd < 0.8e-3


@pytest.mark.parametrize("theta", [0, 45, 90, 135, 180, 225, 270, 315])
def test_anechoic_response_oracle(theta, params):
    d = directivity(GEO, float(theta))
    az = GEO.mic_azimuths
    bins = [1, 5, 16, 30, 60, 90, 110, 127]
    for m in range(4):
        L = path_oracle(theta, az[m])
        sep = min(abs(theta - az[m]) % 360, 360 - abs(theta - az[m]) % 360)
        for b in bins:
            f = params.freqs[b]
            a_max = min(20 * math.log10(1 + f / 1500), 18.0)
            g = 10 ** (-a_max * (1 - math.cos(math.radians(sep))) / 2 / 20)
            expect = g / L * np.exp(-2j * math.pi * f * L / 343.0)
            assert d[b, m] == pytest.approx(expect, rel=1e-10)


def test_directivity_finite_nonzero_and_smooth(dset):
    r = dset.responses[:, 1:]
    assert np.all(np.isfinite(r)) and np.all(np.abs(r) > 0)
    # the Nyquist bin is the real part of the response, so it is excluded from smoothness
    mag_db = 20 * np.log10(np.abs(r[:, :-1]))
    assert np.max(np.abs(np.diff(mag_db, axis=1))) < 1.0


def test_mirror_symmetry_of_responses():
    for theta in (30.0, 100.0, 250.0):
        a = directivity(GEO, theta)
        b = directivity(GEO, float(np.mod(-theta, 360)))
        assert np.allclose(a[:, [0, 1, 2, 3]], b[:, [2, 3, 0, 1]])


def test_shadow_gain_limits():
    g = shadow_gain(np.array([0.0, 1500.0, 1e6]), np.array([0.0, 180.0]))
    assert np.allclose(g[:, 0], 1.0)
    assert 20 * np.log10(g[1, 1]) == pytest.approx(-20 * math.log10(2))
    assert 20 * np.log10(g[2, 1]) == pytest.approx(-18.0)


def test_angle_and_variant_validation():
    with pytest.raises(AcousticsError):
        directivity(GEO, 360.0)
    with pytest.raises(AcousticsError):
        directivity(GEO, -5.0)
    with pytest.raises(AcousticsError):
        Reverberant(t60=0.0)


def test_reverberant_high_drr_matches_anechoic():
    an = directivity(GEO, 40.0)
    rv = directivity(GEO, 40.0, Reverberant(drr_db=60.0))
    rel = np.abs(rv[1:-1] - an[1:-1]) ** 2 / np.abs(an[1:-1]) ** 2
    assert 10 * np.log10(rel.max()) <= -40


def test_reverberant_variant_differs():
    an = directivity(GEO, 40.0)
    rv = directivity(GEO, 40.0, Reverberant())
    rel = np.mean(np.abs(rv[1:] - an[1:]) ** 2 / np.abs(an[1:]) ** 2)
    assert 10 * np.log10(rel) > -20


def test_reverberant_rooms_are_seeded():
    a = directivity(GEO, 40.0, Reverberant(seed=1))
    b = directivity(GEO, 40.0, Reverberant(seed=1))
    c = directivity(GEO, 40.0, Reverberant(seed=2))
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)


def test_point_source_zero_and_linearity(rng):
    assert not np.any(render_point_source(np.zeros(2000), GEO, 30.0).samples)
    a, b = rng.standard_normal((2, 4000))
    joint = render_point_source(a + 2 * b, GEO, 30.0).samples
    sep = render_point_source(a, GEO, 30.0).samples + 2 * render_point_source(b, GEO, 30.0).samples
    assert np.allclose(joint, sep, atol=1e-12)


def test_impulse_delay():
    x = np.zeros(2048)
    x[0] = 1.0
    out = render_point_source(x, GEO, 0.0).samples
    tau = GEO.delays(0.0) * FS
    for m in range(4):
        # bandlimited delayed impulse: peak within one sample of the geometric delay
        assert abs(np.argmax(np.abs(out[:, m])) - tau[m]) <= 1.0


def test_diffuse_level_law():
    a = render_diffuse(2.0, 0.0, seed=3)
    b = render_diffuse(2.0, -5.0, seed=3)
    ratio = 20 * np.log10(np.std(b.samples[:, 0]) / np.std(a.samples[:, 0]))
    assert ratio == pytest.approx(-5.0, abs=0.1)
    assert np.sqrt(np.mean(a.samples[:, 0] ** 2)) == pytest.approx(1.0)


def test_diffuse_seeds_independent():
    a = render_diffuse(2.0, 0.0, seed=1).samples[:, 0]
    b = render_diffuse(2.0, 0.0, seed=2).samples[:, 0]
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.05


def test_diffuse_front_pair_coherence():
    n = render_diffuse(10.0, 0.0, seed=7).samples
    f, c = coherence(n[:, 0], n[:, 2], fs=FS, nperseg=1024)
    az = GEO.mic_azimuths
    spacing = 2 * GEO.head_radius * math.sin(math.radians(abs(az[0] - az[2])) / 2)
    low = (f > 60) & (f < 140)
    high = (f > 7800) & (f < 8200)
    assert c[low].mean() >= 0.8
    assert c[high].mean() <= 0.2
    for sel in (low, high):
        oracle = np.sinc(2 * f[sel] * spacing / 343.0) ** 2
        assert abs(c[sel].mean() - oracle.mean()) <= 0.15


def test_speech_source_deterministic():
    assert np.array_equal(builtin_speech_source(2.0, 5), builtin_speech_source(2.0, 5))
    assert not np.array_equal(builtin_speech_source(2.0, 5), builtin_speech_source(2.0, 6))


def test_speech_source_spectral_tilt():
    x = builtin_speech_source(10.0, 0)
    f, p = welch(x, FS, nperseg=2048)

    def band(lo, hi):
        return p[(f >= lo) & (f < hi)].mean()

    assert 10 * np.log10(band(3500, 4500) / band(200, 300)) < 0
    assert np.sqrt(np.mean(x ** 2)) == pytest.approx(1.0)


def test_speech_envelope_modulation_band():
    x = builtin_speech_source(20.0, 1)
    env = np.abs(x)
    # 100 Hz envelope track
    env = env[: env.size // 240 * 240].reshape(-1, 240).mean(axis=1)
    env -= env.mean()
    spec = np.abs(np.fft.rfft(env * np.hanning(env.size))) ** 2
    f = np.fft.rfftfreq(env.size, 1 / 100)
    sel = (f >= 0.5) & (f <= 30)
    peak = f[sel][np.argmax(spec[sel])]
    assert 2.0 <= peak <= 8.0
    in_band = spec[(f >= 2) & (f <= 8)].sum()
    assert in_band > spec[(f > 8) & (f <= 30)].sum()


def spec_for(**kw):
    base = dict(name="s", true_target_deg=0.0, estimated_target_deg=0.0, duration_s=2.0, seed=0)
    base.update(kw)
    return ScenarioSpec(**base)


def test_scene_without_diffuse():
    sc = compose_scene(spec_for(interferer_true_degs=(225.0,), interferer_estimated_degs=(225.0,)))
    assert sc.diffuse is None and len(sc.interferers) == 1
    assert np.array_equal(sc.mixture.samples, sc.target.samples + sc.interferers[0].samples)


def test_scene_target_and_equal_level_diffuse():
    sc = compose_scene(spec_for(true_target_deg=10.0, diffuse_rel_db=0.0))
    assert not sc.interferers
    rms = [np.sqrt(np.mean(t.samples[:, 0] ** 2)) for t in (sc.target, sc.diffuse)]
    assert rms[0] == pytest.approx(rms[1], rel=1e-9)
    assert sc.target_deg == 10.0


def test_scene_additivity_and_levels():
    s = spec_for(interferer_true_degs=(225.0, 90.0), interferer_estimated_degs=(225.0, 90.0),
                 diffuse_rel_db=-5.0, environment="reverberant")
    sc = compose_scene(s)
    total = sc.target.samples + sum(v.samples for v in sc.interferers) + sc.diffuse.samples
    assert np.max(np.abs(sc.mixture.samples - total)) <= 1e-15
    lv = [np.sqrt(np.mean(t.samples[:, 0] ** 2)) for t in (sc.target, *sc.interferers, sc.diffuse)]
    assert lv[0] == pytest.approx(lv[1]) == pytest.approx(lv[2])
    assert 20 * np.log10(lv[3] / lv[0]) == pytest.approx(-5.0)
    assert np.array_equal(compose_scene(s).mixture.samples, sc.mixture.samples)


def test_scene_rejects_coincident_angles():
    with pytest.raises(AcousticsError, match="coincides"):
        compose_scene(spec_for(interferer_true_degs=(0.0,), interferer_estimated_degs=(0.0,)))


def test_scene_mirroring_swaps_channels():
    sc = compose_scene(spec_for(true_target_deg=30.0))
    m = sc.mirrored()
    assert np.array_equal(m.mixture.samples[:, 0], sc.mixture.samples[:, 2])
    assert m.target_deg == 330.0
