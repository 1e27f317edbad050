"""Shadow filtering and objective metrics for binaural beamformer outputs.

All statistics are long-term PSDs over the evaluated frames of single-channel
(frame, bin) spectra. Each metric is kept per bin and summarised two ways:
``mean`` (band average of the per-bin curve; for cue errors, of its absolute
value) and ``broadband`` (ratio of bin-summed PSDs, gains/distortions only).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .beamform import REF_INDEX, SIDES, apply_weights

SDR_CLAMP_DB = 120.0
FLOOR_REL = 1e-12
CSV_HEADER = "# beamlab-metrics v1"
PER_SIDE = ("snr_gain", "sir_gain", "sdnr_gain", "sdr", "sdmag")
BINAURAL = ("delta_ild", "delta_ipd", "delta_msc")


class MetricError(ValueError):
    pass


# -- shadow filtering ---------------------------------------------------------

@dataclass
class PartialNoise:
    rho: float


@dataclass
class RatioPost:
    """Post-processor captured on the mixture as a per-bin complex gain per side."""

    gains: dict


def ratio_gain(z, zm, floor_rel=FLOOR_REL):
    """``H = zm / z`` with ``|z|`` floored relative to its mean power."""
    floor = math.sqrt(floor_rel * max(float(np.mean(np.abs(z) ** 2)), np.finfo(float).tiny))
    mag = np.abs(z)
    safe = np.where(mag < floor, floor * np.exp(1j * np.angle(z)), z)
    return zm / safe


def shadow_filter(components: dict, weights: dict, post=None, decisions=None) -> dict:
    """Pass every component through the mixture's time-varying processing.

    Parameters
    ----------
    components : name -> (frame, bin, mic) spectra
    weights : side -> (bin, mic) or (frame, bin, mic) weights
    post : None, :class:`PartialNoise` or :class:`RatioPost`
    decisions : decision maps recorded on the mixture; required with RatioPost

    Returns side -> name -> (frame, bin) output spectra.
    """
    if isinstance(post, RatioPost) and decisions is None:
        raise MetricError("post-processor shadow filtering needs the mixture's decision maps")
    out = {}
    for side in weights:
        ref = REF_INDEX[side]
        per = {}
        for name, X in components.items():
            z = apply_weights(weights[side], X)
            if isinstance(post, PartialNoise):
                z = post.rho * z + (1 - post.rho) * X[:, :, ref]
            elif isinstance(post, RatioPost):
                z = z * post.gains[side]
            per[name] = z
        out[side] = per
    return out


# -- statistics ---------------------------------------------------------------

def long_psd(a, b=None):
    """``mean_t a(f,t) b*(f,t)`` per bin."""
    a = np.asarray(a)
    if a.shape[0] == 0:
        raise MetricError("no frames to average")
    b = a if b is None else np.asarray(b)
    return np.mean(a * np.conj(b), axis=0)


def _db(x, floor):
    return 10 * np.log10(np.maximum(np.real(x), floor))


def _floor(*psds):
    m = max(float(np.mean(np.real(p))) for p in psds)
    return FLOOR_REL * m if m > 0 else np.finfo(float).tiny


@dataclass
class Curve:
    per_bin: np.ndarray
    mean: float | None = None
    broadband: float | None = None


def band_average(curve, mask=None, absolute=False):
    """Mean over bins that are present (finite) and inside ``mask``; None if empty."""
    c = np.asarray(curve, dtype=float)
    if absolute:
        c = np.abs(c)
    sel = np.isfinite(c)
    if mask is not None:
        sel &= mask
    if not np.any(sel):
        return None
    return float(np.mean(c[sel]))


def _ratio_gain_curve(out_sig, out_noise, in_sig, in_noise, mask):
    po_s, po_n = long_psd(out_sig).real, long_psd(out_noise).real
    pi_s, pi_n = long_psd(in_sig).real, long_psd(in_noise).real
    fl = _floor(po_s, po_n, pi_s, pi_n)
    per_bin = (_db(po_s, fl) - _db(po_n, fl)) - (_db(pi_s, fl) - _db(pi_n, fl))
    m = mask
    bb = (_db(po_s[m].sum(), fl) - _db(po_n[m].sum(), fl)) - (_db(pi_s[m].sum(), fl) - _db(pi_n[m].sum(), fl))
    return Curve(per_bin, band_average(per_bin, mask), float(bb))


def ratio_gains(out: dict, inp: dict, mask) -> dict:
    """SNR/SIR/SDNR gains in dB for one side.

    ``out``/``inp`` map component names (``target``, ``interferers``,
    ``diffuse``) to output and reference-microphone spectra. A gain whose
    noise component is absent is None (not applicable).
    """
    res = {}
    have_v = inp.get("interferers") is not None
    have_n = inp.get("diffuse") is not None
    if have_v or have_n:
        zn = sum(out[c] for c in ("interferers", "diffuse") if inp.get(c) is not None)
        un = sum(inp[c] for c in ("interferers", "diffuse") if inp.get(c) is not None)
        res["snr_gain"] = _ratio_gain_curve(out["target"], zn, inp["target"], un, mask)
    else:
        res["snr_gain"] = None
    res["sir_gain"] = _ratio_gain_curve(out["target"], out["interferers"], inp["target"],
                                        inp["interferers"], mask) if have_v else None
    res["sdnr_gain"] = _ratio_gain_curve(out["target"], out["diffuse"], inp["target"],
                                         inp["diffuse"], mask) if have_n else None
    return res


def distortion(z_x, x_ref, mask) -> tuple[Curve, Curve]:
    """Target speech distortion ratio and magnitude-only distance (dB)."""
    p_ref = long_psd(x_ref).real
    if not np.any(p_ref[mask] > 0):
        raise MetricError("target component is silent; distortion undefined")
    p_dist = long_psd(z_x - x_ref).real
    p_out = long_psd(z_x).real
    fl = _floor(p_ref)
    sdr = np.minimum(_db(p_ref, fl) - _db(p_dist, FLOOR_REL * np.maximum(p_ref, fl)), SDR_CLAMP_DB)
    sdmag = np.abs(_db(p_ref, fl) - _db(p_out, fl))
    sdr_bb = min(float(_db(p_ref[mask].sum(), fl) - _db(p_dist[mask].sum(), FLOOR_REL * p_ref[mask].sum())),
                 SDR_CLAMP_DB)
    sdmag_bb = float(abs(_db(p_ref[mask].sum(), fl) - _db(p_out[mask].sum(), fl)))
    return (Curve(sdr, band_average(sdr, mask), sdr_bb),
            Curve(sdmag, band_average(sdmag, mask), sdmag_bb))


def _wrap(phi):
    """Wrap to (-pi, pi]."""
    w = np.mod(phi + np.pi, 2 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def itf(left, right):
    """Interaural transfer function ``Gamma_{r,l} / Gamma_{l,l}``; NaN where the left PSD underflows."""
    p_ll = long_psd(left).real
    p_rl = long_psd(right, left)
    ok = p_ll > _floor(p_ll, long_psd(right).real)
    out = np.full(p_ll.shape, np.nan + 0j)
    out[ok] = p_rl[ok] / p_ll[ok]
    return out


def _ild(left, right):
    """Interaural level ratio ``10 log10(Gamma_rr / Gamma_ll)``; equals ``|ITF|^2`` for a coherent pair."""
    p_ll, p_rr = long_psd(left).real, long_psd(right).real
    fl = _floor(p_ll, p_rr)
    out = np.full(p_ll.shape, np.nan)
    ok = (p_ll > fl) & (p_rr > fl)
    out[ok] = 10 * np.log10(p_rr[ok] / p_ll[ok])
    return out


def itf_cues(in_l, in_r, out_l, out_r):
    """Per-bin ILD (dB) and IPD (rad) errors, output minus input.

    The IPD is the angle of the ITF. The ILD uses the auto-PSD ratio, which
    keeps a partially coherent output pair symmetric under a left/right swap.
    """
    i_in, i_out = itf(in_l, in_r), itf(out_l, out_r)
    ild = _ild(out_l, out_r) - _ild(in_l, in_r)
    ipd = _wrap(np.angle(i_out) - np.angle(i_in))
    ipd = np.where(np.isfinite(i_in) & np.isfinite(i_out), ipd, np.nan)
    return ild, ipd


def msc(left, right):
    p_ll, p_rr = long_psd(left).real, long_psd(right).real
    p_rl = long_psd(right, left)
    fl = _floor(p_ll, p_rr)
    ok = (p_ll > fl) & (p_rr > fl)
    out = np.full(p_ll.shape, np.nan)
    out[ok] = np.abs(p_rl[ok]) ** 2 / (p_ll[ok] * p_rr[ok])
    return np.clip(out, 0.0, 1.0)


def msc_error(in_l, in_r, out_l, out_r):
    return msc(out_l, out_r) - msc(in_l, in_r)


def better_ear(inputs: dict) -> str:
    """Side with the higher broadband input SNR at its reference microphone; ties go left."""
    snr = {}
    for side in SIDES:
        comp = inputs[side]
        sig = float(np.sum(np.abs(comp["target"]) ** 2))
        noise_tracks = [comp[c] for c in ("interferers", "diffuse") if comp.get(c) is not None]
        noise = float(np.sum(np.abs(sum(noise_tracks)) ** 2)) if noise_tracks else 0.0
        snr[side] = sig / noise if noise > 0 else math.inf
    return "right" if snr["right"] > snr["left"] else "left"


# -- reports ------------------------------------------------------------------

@dataclass
class MetricReport:
    scenario: str
    algorithm: str
    seed: int | None
    better_ear: str
    per_side: dict = field(default_factory=dict)
    binaural: dict = field(default_factory=dict)
    freqs: np.ndarray | None = None

    def value(self, metric: str, side: str | None = None, summary: str = "mean"):
        if metric in BINAURAL:
            c = self.binaural.get(metric)
        else:
            c = self.per_side[side or self.better_ear].get(metric)
        if c is None:
            return None
        return getattr(c, summary)

    def rows(self):
        base = (self.scenario, self.algorithm, "" if self.seed is None else self.seed)
        yield (*base, self.better_ear, "better_ear", "broadband", 1)
        for side, metrics in self.per_side.items():
            for name in PER_SIDE:
                yield from _curve_rows(base, side, name, metrics.get(name))
        for name in BINAURAL:
            yield from _curve_rows(base, "binaural", name, self.binaural.get(name))


def _fmt(v):
    return "na" if v is None or not np.isfinite(v) else repr(float(v))


def _curve_rows(base, side, name, curve):
    if curve is None:
        yield (*base, side, name, "mean", "na")
        return
    yield (*base, side, name, "mean", _fmt(curve.mean))
    if curve.broadband is not None:
        yield (*base, side, name, "broadband", _fmt(curve.broadband))
    for f, v in enumerate(curve.per_bin):
        if np.isfinite(v):
            yield (*base, side, name, f, _fmt(v))


CSV_COLUMNS = ["scenario", "algorithm", "seed", "side", "metric", "bin", "value"]


def write_reports_csv(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([CSV_HEADER])
        w.writerow(CSV_COLUMNS)
        for r in reports:
            w.writerows(r.rows())


def read_reports_csv(path):
    """Rows as dicts; header/version lines are skipped."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rd = csv.DictReader(lines)
    if rd.fieldnames != CSV_COLUMNS:
        raise MetricError(f"{path}: unexpected columns {rd.fieldnames}")
    return list(rd)


def band_masks(freqs, crossover_hz=1500.0):
    """Evaluation bins (DC and Nyquist excluded) and the cue sub-bands."""
    n = len(freqs)
    valid = np.zeros(n, dtype=bool)
    valid[1:n - 1] = True
    return {
        "all": valid,
        "low": valid & (freqs < crossover_hz),
        "high": valid & (freqs > crossover_hz),
    }


def evaluate(scenario: str, algorithm: str, seed, outputs: dict, inputs: dict, freqs,
             crossover_hz: float = 1500.0) -> MetricReport:
    """Build a report from per-side output and reference-microphone components.

    ``outputs[side]`` and ``inputs[side]`` map component names to (frame, bin)
    spectra already restricted to the evaluated frames.
    """
    masks = band_masks(np.asarray(freqs), crossover_hz)
    all_bins = masks["all"]
    rep = MetricReport(scenario, algorithm, seed, better_ear(inputs), freqs=np.asarray(freqs))
    for side in SIDES:
        m = ratio_gains(outputs[side], inputs[side], all_bins)
        m["sdr"], m["sdmag"] = distortion(outputs[side]["target"], inputs[side]["target"], all_bins)
        rep.per_side[side] = m
    il, ir = inputs["left"], inputs["right"]
    ol, orr = outputs["left"], outputs["right"]
    if il.get("interferers") is not None:
        ild, ipd = itf_cues(il["interferers"], ir["interferers"], ol["interferers"], orr["interferers"])
        ild = np.where(masks["high"], ild, np.nan)
        ipd = np.where(masks["low"], ipd, np.nan)
        rep.binaural["delta_ild"] = Curve(ild, band_average(ild, masks["high"], absolute=True))
        rep.binaural["delta_ipd"] = Curve(ipd, band_average(ipd, masks["low"], absolute=True))
    else:
        rep.binaural["delta_ild"] = rep.binaural["delta_ipd"] = None
    if il.get("diffuse") is not None:
        dm = msc_error(il["diffuse"], ir["diffuse"], ol["diffuse"], orr["diffuse"])
        dm = np.where(all_bins, dm, np.nan)
        rep.binaural["delta_msc"] = Curve(dm, band_average(dm, all_bins, absolute=True))
    else:
        rep.binaural["delta_msc"] = None
    return rep
