import csv

import numpy as np
import pytest

from beamlab import harness
from beamlab.ccmbb import (
    CcmbbParams, apply_ccmbb, ccmbb_side, crossover_bin, magnitude_rule, phase_rule, sliding_coherence,
    write_decisions_csv,
)
from beamlab.stft import StftParams


def cnoise(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture(scope="module")
def scene_tracks():
    """Beamformer outputs and front-mic spectra of a short mixed scene."""
    sc = harness.preset("table2_ccmbb").scenarios[0]
    sc = harness.ScenarioSpec(**{**sc.__dict__, "duration_s": 6.0})
    res_tf = harness.scene_spectra(harness.acoustics.compose_scene(sc))
    alg = harness.AlgorithmSpec("bmvdr")
    run = harness.run_algorithm(alg, sc, res_tf, harness.design_directivity(),
                                warmup_frames=StftParams().frames_for_seconds(0.25))
    Y = res_tf["mixture"]
    return run.outputs["left"], run.outputs["right"], Y[:, :, 0], Y[:, :, 2]


def test_param_validation():
    CcmbbParams(mu=0.0)
    CcmbbParams(alpha=1.0)
    with pytest.raises(ValueError):
        CcmbbParams(mu=1.0)
    with pytest.raises(ValueError):
        CcmbbParams(alpha=0.5)
    with pytest.raises(ValueError):
        CcmbbParams(alpha=1.2)
    with pytest.raises(ValueError):
        CcmbbParams(short_window=40, long_window=40)


def test_self_coherence_is_one(rng):
    y = cnoise(rng, (50, 129))
    C = sliding_coherence(y, y, 10)
    assert np.allclose(C, 1.0, atol=1e-12)


def test_rotated_coherence(rng):
    y = cnoise(rng, (50, 129))
    C = sliding_coherence(1j * y, y, 10)
    assert np.allclose(C, 1j, atol=1e-12)


def test_independent_noise_coherence_bias(rng):
    z, y = cnoise(rng, (2000, 8)), cnoise(rng, (2000, 8))
    C = sliding_coherence(z, y, 10)[10:]
    assert abs(np.mean(np.abs(C)) - 1 / np.sqrt(10)) <= 0.1
    assert np.all(np.abs(C) <= 1 + 1e-6)


def test_coherence_prefix_and_silence(rng):
    z, y = cnoise(rng, (20, 3)), cnoise(rng, (20, 3))
    C = sliding_coherence(z, y, 10)
    pzy = np.mean(z[:4] * np.conj(y[:4]), axis=0)
    expect = pzy / np.sqrt(np.mean(np.abs(z[:4]) ** 2, 0) * np.mean(np.abs(y[:4]) ** 2, 0))
    assert np.allclose(C[3], expect)
    z[:, 1] = 0
    assert np.all(sliding_coherence(z, y, 10)[:, 1] == 0)
    with pytest.raises(ValueError):
        sliding_coherence(z, y, 1)


def test_phase_rule_examples():
    z = np.array([np.exp(0.3j), np.exp(0.3j), np.exp(0.3j)])
    y = np.array([np.exp(-1j), np.exp(-1j), np.exp(-1j)])
    C = np.array([1.0, -1.0, np.exp(1j * 0.1 * np.pi)])
    phase, keep = phase_rule(z, y, C, 0.1)
    assert np.allclose(phase, [0.3, -1.0, 0.3])
    assert keep.tolist() == [True, False, True]


def test_magnitude_rule_examples():
    z, y = np.array([1.0, 1.0]), np.array([2.0, 2.0])
    mag, emph = magnitude_rule(z, y, np.array([0.3, 0.9]), np.array([0.5, 0.5]), 0.7)
    assert np.allclose(mag, [1.3, 1.7])
    assert emph.tolist() == [True, False]
    mag1, _ = magnitude_rule(z, y, np.array([0.3, 0.9]), np.array([0.5, 0.5]), 1.0)
    assert mag1.tolist() == [1.0, 2.0]
    # |C| == T takes the noisy-emphasis branch
    assert not magnitude_rule(z, y, np.array([0.5]), np.array([0.5]), 0.7)[1][0]


def test_crossover_bins():
    assert crossover_bin(1500.0) == 16
    assert crossover_bin(1000.0) == 11
    assert crossover_bin(93.75) == 1
    with pytest.raises(ValueError, match="Nyquist"):
        crossover_bin(12000.0)


def test_fixed_point(rng):
    y_l, y_r = cnoise(rng, (60, 129)), cnoise(rng, (60, 129))
    zl, zr, dec = apply_ccmbb(y_l, y_r, y_l, y_r)
    assert np.allclose(zl, y_l) and np.allclose(zr, y_r)
    assert dec["left"].phase_from_beamformer.all()
    assert not dec["left"].emphasize_beamformer.any()


def test_mu_zero_takes_noisy_phase(rng):
    z, y = cnoise(rng, (60, 129)), cnoise(rng, (60, 129))
    out, dm = ccmbb_side(z, y, CcmbbParams(mu=0.0))
    assert not dm.phase_from_beamformer.any()
    assert np.allclose(np.angle(out[:, :16]), np.angle(y[:, :16]))
    assert np.allclose(np.abs(out[:, :16]), np.abs(z[:, :16]))
    assert np.allclose(np.angle(out[:, 16:]), np.angle(z[:, 16:]))


def test_magnitude_bounds_and_threshold_clamp(rng):
    z, y = cnoise(rng, (80, 129)), cnoise(rng, (80, 129))
    out, _ = ccmbb_side(z, y, CcmbbParams())
    hi = slice(16, None)
    lo, up = np.minimum(abs(z[:, hi]), abs(y[:, hi])), np.maximum(abs(z[:, hi]), abs(y[:, hi]))
    m = np.abs(out[:, hi])
    assert np.all(m >= lo - 1e-12) and np.all(m <= up + 1e-12)


def test_decision_shapes_and_determinism(scene_tracks):
    zl, zr, yl, yr = scene_tracks
    a = apply_ccmbb(zl, zr, yl, yr)
    b = apply_ccmbb(zl, zr, yl, yr)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    for side in ("left", "right"):
        dm, dm2 = a[2][side], b[2][side]
        assert dm.phase_from_beamformer.shape == (zl.shape[0], 16)
        assert dm.emphasize_beamformer.shape == (zl.shape[0], 113)
        assert np.array_equal(dm.emphasize_beamformer, dm2.emphasize_beamformer)


def test_branch_coverage(scene_tracks):
    zl, zr, yl, yr = scene_tracks
    _, _, dec = apply_ccmbb(zl, zr, yl, yr)
    for dm in dec.values():
        for arr in (dm.phase_from_beamformer, dm.emphasize_beamformer):
            assert arr.any() and not arr.all()


def test_mu_monotonicity(scene_tracks):
    zl, zr, yl, yr = scene_tracks
    counts = []
    for mu in (0.05, 0.1, 0.2):
        _, _, dec = apply_ccmbb(zl, zr, yl, yr, CcmbbParams(mu=mu))
        counts.append(sum(int(d.phase_from_beamformer.sum()) for d in dec.values()))
    assert counts[0] <= counts[1] <= counts[2]
    assert counts[0] < counts[2]


def test_decisions_csv(tmp_path, rng):
    z, y = cnoise(rng, (5, 129)), cnoise(rng, (5, 129))
    _, dm = ccmbb_side(z, y, CcmbbParams())
    write_decisions_csv(tmp_path / "d.csv", [dm])
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "# beamlab-decisions v1"
    rows = list(csv.DictReader(lines[1:]))
    assert len(rows) == 5 * 129
    assert {r["rule"] for r in rows if int(r["bin"]) < 16} == {"phase"}
    assert {r["rule"] for r in rows if int(r["bin"]) >= 16} == {"magnitude"}
