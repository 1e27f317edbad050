"""Scenarios, algorithm roster, experiment presets and the experiment runner."""
from __future__ import annotations

import configparser
import dataclasses
import logging
import math
import re
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import acoustics, beamform, ccmbb, metrics
from .acoustics import REF_LEFT, REF_RIGHT, ArrayGeometry
from .beamform import SIDES, DesignParams
from .ccmbb import CcmbbParams
from .stft import StftParams, analyze

log = logging.getLogger(__name__)

ALGORITHM_KINDS = ("identity", "bmvdr", "bmvdr_n", "bmvdr_ccmbb", "blcmv", "robust_tlcmv",
                   "robust_tlcmv_ccmbb")
COVARIANCE_SOURCES = ("R_y", "R_n")
WARMUP_S = 0.25
DEFAULT_SEEDS = (0, 1, 2)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    true_target_deg: float
    estimated_target_deg: float
    interferer_true_degs: tuple = ()
    interferer_estimated_degs: tuple | None = None
    diffuse_rel_db: float | None = None
    environment: str = "anechoic"
    duration_s: float = 10.0
    seed: int = 0
    room_seed: int = 0
    source_paths: tuple = ()

    def __post_init__(self):
        if self.duration_s < 2:
            raise ConfigError(f"scenario {self.name}: duration must be at least 2 s")
        if self.environment not in ("anechoic", "reverberant"):
            raise ConfigError(f"scenario {self.name}: unknown environment {self.environment!r}")
        est = self.interferer_estimated_degs
        if est is not None and len(est) != len(self.interferer_true_degs):
            raise ConfigError(f"scenario {self.name}: estimated and true interferer lists differ in length")


@dataclass(frozen=True)
class AlgorithmSpec:
    kind: str
    design: DesignParams = DesignParams()
    post: CcmbbParams = CcmbbParams()
    covariance_source: str = "R_y"
    label: str = ""

    def __post_init__(self):
        if self.kind not in ALGORITHM_KINDS:
            raise ConfigError(f"unknown algorithm kind {self.kind!r}; choose from {', '.join(ALGORITHM_KINDS)}")
        if self.covariance_source not in COVARIANCE_SOURCES:
            raise ConfigError(f"covariance_source must be one of {COVARIANCE_SOURCES}")
        if not self.label:
            suffix = "" if self.covariance_source == "R_y" else f"[{self.covariance_source}]"
            object.__setattr__(self, "label", self.kind + suffix)


@dataclass
class Preset:
    name: str
    scenarios: list
    algorithms: list
    description: str = ""


def _alg(*kinds):
    return [AlgorithmSpec(k) for k in kinds]


def _table1(n, target):
    interf = {1: (), 2: (225,), 3: (225, 90), 4: (225, 90)}[n]
    diffuse = {1: 0.0, 2: None, 3: None, 4: 0.0}[n]
    return ScenarioSpec(f"table1_s{n}_t{target}", true_target_deg=target, estimated_target_deg=0,
                        interferer_true_degs=interf, interferer_estimated_degs=interf,
                        diffuse_rel_db=diffuse, environment="anechoic")


def _mismatch(name, target, interf, est_interf, env, diffuse=-5.0, est_target=0):
    return ScenarioSpec(name, true_target_deg=target, estimated_target_deg=est_target,
                        interferer_true_degs=tuple(interf), interferer_estimated_degs=tuple(est_interf),
                        diffuse_rel_db=diffuse, environment=env)


def _build_presets():
    p = {}
    for n in (1, 2, 3, 4):
        p[f"table1_s{n}"] = Preset(f"table1_s{n}", [_table1(n, 0), _table1(n, 10)],
                                   _alg("bmvdr", "robust_tlcmv"),
                                   f"Acoustic scenario {n}, target at 0 and 10 deg")
    p["fig6_sweep"] = Preset("fig6_sweep", [_table1(n, t) for n in (1, 2, 3, 4) for t in (0, 10)],
                             _alg("bmvdr", "robust_tlcmv"),
                             "BMVDR vs Robust TLCMV across the four scenarios, 0/10 deg target mismatch")
    p["fig7_ry_vs_rn"] = Preset(
        "fig7_ry_vs_rn",
        [ScenarioSpec("fig7_ry_vs_rn", 0, 0, (225, 90, 180), None, -14.0, "reverberant")],
        [AlgorithmSpec("robust_tlcmv"), AlgorithmSpec("robust_tlcmv", covariance_source="R_n")],
        "Robust TLCMV with noisy vs diffuse-noise covariance")
    p["table2_ccmbb"] = Preset(
        "table2_ccmbb",
        [ScenarioSpec("table2_ccmbb", 0, 0, (165,), None, -5.0, "reverberant")],
        _alg("bmvdr", "bmvdr_n", "bmvdr_ccmbb"),
        "BMVDR, BMVDR-n and BMVDR-CCMBB, interferer at 165 deg")
    p["fig9_doa0_anechoic"] = Preset(
        "fig9_doa0_anechoic",
        [_mismatch("fig9_doa0_anechoic", 0, (225, 90), (225, 90), "anechoic")],
        _alg("blcmv", "robust_tlcmv_ccmbb"), "BLCMV vs Robust TLCMV+CCMBB, no mismatch")
    p["fig10_doa10_anechoic"] = Preset(
        "fig10_doa10_anechoic",
        [_mismatch("fig10_doa10_anechoic", 10, (235, 100), (225, 90), "anechoic")],
        _alg("blcmv", "robust_tlcmv_ccmbb"), "10 deg DOA mismatch, anechoic")
    p["fig13_doa10_reverb"] = Preset(
        "fig13_doa10_reverb",
        [_mismatch("fig13_doa10_reverb", 10, (235, 100), (225, 90), "reverberant")],
        _alg("blcmv", "robust_tlcmv_ccmbb"), "10 deg DOA mismatch with HRTF mismatch")
    p["fig15_interferer_mismatch_sweep"] = Preset(
        "fig15_interferer_mismatch_sweep",
        [_mismatch(f"fig15_imis{m}", 0, (225 + m, 90 + m), (225, 90), "reverberant")
         for m in (0, 5, 10, 15, 20)],
        _alg("blcmv", "robust_tlcmv_ccmbb"), "Interferer DOA mismatch sweep, reverberant")
    p["fig16_lateral90"] = Preset(
        "fig16_lateral90",
        [_mismatch("fig16_lateral90", 90, (225, 315), (225, 315), "reverberant", est_target=90)],
        _alg("blcmv", "robust_tlcmv_ccmbb"), "Lateral target at 90 deg, reverberant")
    return p


PRESETS = _build_presets()


def preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None


# -- running ----------------------------------------------------------------

@lru_cache(maxsize=4)
def design_directivity(geometry: ArrayGeometry = ArrayGeometry(), params: StftParams = StftParams()):
    return acoustics.directivity_set(geometry, acoustics.ANECHOIC, params)


@dataclass
class AlgorithmRun:
    """Mixture outputs plus everything needed to shadow-filter components."""

    outputs: dict
    weights: dict
    post: object = None
    decisions: dict | None = None


@dataclass
class ExperimentResult:
    scenario: ScenarioSpec
    reports: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)
    additivity: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    decisions: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def report(self, label):
        for r in self.reports:
            if r.algorithm == label:
                return r
        raise KeyError(label)


def constraints_for(alg: AlgorithmSpec, scenario: ScenarioSpec, dset):
    """Per-side constraint sets, or None for the reference-selector identity."""
    k, dp = alg.kind, alg.design
    theta = scenario.estimated_target_deg
    if k == "identity":
        return None
    if k in ("bmvdr", "bmvdr_n", "bmvdr_ccmbb"):
        return {s: beamform.design_bmvdr(dset, theta, s) for s in SIDES}
    if k in ("robust_tlcmv", "robust_tlcmv_ccmbb"):
        return {s: beamform.design_robust_tlcmv(dset, theta, dp.delta_deg, s) for s in SIDES}
    if k == "blcmv":
        if scenario.interferer_estimated_degs is None:
            raise ConfigError(f"blcmv needs estimated interferer angles in scenario {scenario.name}")
        return {s: beamform.design_blcmv(dset, theta, scenario.interferer_estimated_degs,
                                         dp.zeta, dp.eta, s) for s in SIDES}
    raise ConfigError(f"unknown algorithm kind {k!r}")


def run_algorithm(alg: AlgorithmSpec, scenario: ScenarioSpec, tf: dict, dset,
                  stft: StftParams = StftParams(), warmup_frames: int = 0, stride: int = 1) -> AlgorithmRun:
    """Adaptive beamforming plus optional post-processing on the mixture."""
    Y = tf["mixture"]
    T, F, M = Y.shape
    cons = constraints_for(alg, scenario, dset)
    if cons is None:
        weights = {s: beamform.selector_weights(F, s, M) for s in SIDES}
    else:
        if alg.covariance_source == "R_n":
            if tf.get("diffuse") is None:
                raise ConfigError("R_n covariance requested but the scene has no diffuse component")
            cov_frames = tf["diffuse"]
        else:
            cov_frames = Y
        weights = beamform.adaptive_weights(cov_frames, cons, alg.design.forgetting, alg.design.loading,
                                            warmup_frames, stride)
    z = {s: beamform.apply_weights(weights[s], Y) for s in SIDES}
    ref = {"left": Y[:, :, REF_LEFT], "right": Y[:, :, REF_RIGHT]}
    if alg.kind == "bmvdr_n":
        post = metrics.PartialNoise(alg.design.rho)
        out = {s: beamform.bmvdr_partial_noise(z[s], ref[s], alg.design.rho) for s in SIDES}
        return AlgorithmRun(out, weights, post)
    if alg.kind.endswith("_ccmbb"):
        zm_l, zm_r, dec = ccmbb.apply_ccmbb(z["left"], z["right"], ref["left"], ref["right"], alg.post, stft)
        post = metrics.RatioPost({s: metrics.ratio_gain(z[s], zm) for s, zm in zip(SIDES, (zm_l, zm_r))})
        # z*H differs from zm only where |z| sits under the ratio floor
        out = {s: z[s] * post.gains[s] for s in SIDES}
        return AlgorithmRun(out, weights, post, dec)
    return AlgorithmRun(z, weights)


def scene_spectra(scene: acoustics.SceneTracks, stft: StftParams = StftParams()) -> dict:
    tf = {"mixture": analyze(scene.mixture, stft).data, "target": analyze(scene.target, stft).data}
    vsum = scene.interferer_sum()
    tf["interferers"] = None if vsum is None else analyze(vsum, stft).data
    for i, v in enumerate(scene.interferers):
        tf[f"interferer{i + 1}"] = analyze(v, stft).data
    tf["diffuse"] = None if scene.diffuse is None else analyze(scene.diffuse, stft).data
    return tf


def load_sources(scenario: ScenarioSpec, sample_rate: int):
    if not scenario.source_paths:
        return None
    from .wavio import read_wav
    n_needed = 1 + len(scenario.interferer_true_degs)
    if len(scenario.source_paths) != n_needed:
        raise ConfigError(f"scenario {scenario.name}: need {n_needed} source WAVs (target, then interferers)")
    return [read_wav(p, sample_rate, resample=True).samples[:, 0] for p in scenario.source_paths]


def evaluate_run(run: AlgorithmRun, tf: dict, scenario: ScenarioSpec, label: str, start: int,
                 stft: StftParams = StftParams()):
    comps = {k: v for k, v in tf.items() if k != "mixture" and v is not None}
    shadow = metrics.shadow_filter(comps, run.weights, run.post, run.decisions)
    names = ("target", "interferers", "diffuse")
    outputs, inputs, additivity = {}, {}, 0.0
    for s in SIDES:
        ref = REF_LEFT if s == "left" else REF_RIGHT
        total = sum(shadow[s][c] for c in names if c in shadow[s])
        mix = run.outputs[s]
        additivity = max(additivity, float(np.linalg.norm(total - mix) / max(np.linalg.norm(mix), 1e-300)))
        outputs[s] = {c: (shadow[s][c][start:] if c in shadow[s] else None) for c in names}
        inputs[s] = {c: (tf[c][start:, :, ref] if tf.get(c) is not None else None) for c in names}
    rep = metrics.evaluate(scenario.name, label, scenario.seed, outputs, inputs, stft.freqs)
    return rep, additivity


def run_experiment(scenario: ScenarioSpec, algorithms, geometry: ArrayGeometry = ArrayGeometry(),
                   stft: StftParams = StftParams(), keep_outputs: bool = False, stride: int = 1,
                   scene: acoustics.SceneTracks | None = None) -> ExperimentResult:
    """Compose the scene once, then process and evaluate every algorithm.

    A failing algorithm is recorded in ``errors`` without aborting the rest.
    """
    res = ExperimentResult(scenario)
    t0 = time.perf_counter()
    if scene is None:
        sources = load_sources(scenario, stft.sample_rate)
        scene = acoustics.compose_scene(scenario, geometry, stft.sample_rate, sources=sources)
    tf = scene_spectra(scene, stft)
    res.timing["scene"] = time.perf_counter() - t0
    dset = design_directivity(geometry, stft)
    warm = stft.frames_for_seconds(WARMUP_S)
    for alg in algorithms:
        t1 = time.perf_counter()
        try:
            run = run_algorithm(alg, scenario, tf, dset, stft, warm, stride)
            rep, add = evaluate_run(run, tf, scenario, alg.label, warm, stft)
        except (ValueError, np.linalg.LinAlgError) as exc:
            log.warning("%s / %s failed: %s", scenario.name, alg.label, exc)
            res.errors[alg.label] = f"{type(exc).__name__}: {exc}"
            continue
        res.reports.append(rep)
        res.additivity[alg.label] = add
        if keep_outputs:
            res.outputs[alg.label] = run.outputs
            if run.decisions is not None:
                res.decisions[alg.label] = run.decisions
        res.timing[alg.label] = time.perf_counter() - t1
    return res


def _run_task(args):
    scenario, algorithms, keep = args
    return run_experiment(scenario, algorithms, keep_outputs=keep)


def run_preset(p: Preset, seeds=DEFAULT_SEEDS, jobs: int = 1, keep_outputs: bool = False,
               duration_s: float | None = None):
    """Every scenario of a preset over several seeds; returns ExperimentResults."""
    tasks = []
    for sc in p.scenarios:
        for seed in seeds:
            kw = {"seed": int(seed)}
            if duration_s is not None:
                kw["duration_s"] = duration_s
            tasks.append((dataclasses.replace(sc, **kw), p.algorithms, keep_outputs))
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_run_task, tasks))
    return [_run_task(t) for t in tasks]


def seed_mean(results, scenario_name: str, label: str, metric: str, summary: str = "mean",
              side: str | None = None):
    vals = []
    for r in results:
        if r.scenario.name != scenario_name:
            continue
        v = r.report(label).value(metric, side, summary)
        if v is not None:
            vals.append(v)
    return float(np.mean(vals)) if vals else None


# -- config files -------------------------------------------------------------

def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    cur = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]", s)
        if m:
            cur = m.group(1).strip()
            if key is None and cur == section:
                return i
            continue
        if cur == section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return i
    return None


def _floats(v):
    v = v.strip()
    if not v or v.lower() == "none":
        return ()
    return tuple(float(x) for x in v.split(","))


def _opt_float(v):
    v = v.strip()
    return None if v.lower() in ("", "none") else float(v)


SCENARIO_FIELDS = {
    "name": str, "true_target_deg": float, "estimated_target_deg": float,
    "interferer_true_degs": _floats, "interferer_estimated_degs": _floats,
    "diffuse_rel_db": _opt_float, "environment": str, "duration_s": float, "seed": int,
    "room_seed": int, "source_paths": lambda v: tuple(x.strip() for x in v.split(",")
                                                      if x.strip() and x.strip().lower() != "none"),
}
DESIGN_FIELDS = {f.name: float for f in dataclasses.fields(DesignParams)}
CCMBB_FIELDS = {"mu": float, "alpha": float, "crossover_hz": float, "short_window": int, "long_window": int}


@dataclass
class RunConfig:
    scenarios: list
    algorithms: list
    seeds: tuple = DEFAULT_SEEDS
    preset: str | None = None


def parse_config(path) -> RunConfig:
    """Read an INI experiment config; errors name the file, line and field.

    Sections: ``[run]`` (``preset``, ``seeds``), ``[scenario]`` or
    ``[scenario.NAME]``, and ``[algorithm.LABEL]``.
    """
    path = Path(path)
    text = path.read_text()
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc

    def fail(section, key, msg):
        line = _line_of(text, section, key)
        where = f"{path}:{line}" if line else str(path)
        raise ConfigError(f"{where}: [{section}] {key or ''}: {msg}")

    scenarios, algorithms, seeds, pname = [], [], DEFAULT_SEEDS, None
    if cp.has_section("run"):
        sec = cp["run"]
        for key in sec:
            if key not in ("preset", "seeds"):
                fail("run", key, "unknown field")
        pname = sec.get("preset")
        if pname:
            try:
                pr = preset(pname)
            except ConfigError as exc:
                fail("run", "preset", str(exc))
            scenarios, algorithms = list(pr.scenarios), list(pr.algorithms)
        if "seeds" in sec:
            try:
                seeds = tuple(int(x) for x in sec["seeds"].split(","))
            except ValueError:
                fail("run", "seeds", "expected comma-separated integers")
    for name in cp.sections():
        if name == "scenario" or name.startswith("scenario."):
            kw = {"name": name.partition(".")[2] or "custom"}
            for key, raw in cp[name].items():
                if key not in SCENARIO_FIELDS:
                    fail(name, key, "unknown field")
                try:
                    kw[key] = SCENARIO_FIELDS[key](raw)
                except ValueError as exc:
                    fail(name, key, f"bad value {raw!r} ({exc})")
            for req in ("true_target_deg",):
                if req not in kw:
                    fail(name, None, f"missing required field {req}")
            kw.setdefault("estimated_target_deg", kw["true_target_deg"])
            if "interferer_estimated_degs" in kw and not kw["interferer_estimated_degs"]:
                kw["interferer_estimated_degs"] = None
            try:
                scenarios.append(ScenarioSpec(**kw))
            except (ConfigError, TypeError) as exc:
                fail(name, None, str(exc))
        elif name.startswith("algorithm."):
            label = name.partition(".")[2]
            sec = cp[name]
            dkw, ckw = {}, {}
            kind = sec.get("kind", label)
            cov = sec.get("covariance_source", "R_y")
            for key, raw in sec.items():
                if key in ("kind", "covariance_source"):
                    continue
                target = DESIGN_FIELDS if key in DESIGN_FIELDS else CCMBB_FIELDS if key in CCMBB_FIELDS else None
                if target is None:
                    fail(name, key, "unknown field")
                try:
                    (dkw if target is DESIGN_FIELDS else ckw)[key] = target[key](raw)
                except ValueError as exc:
                    fail(name, key, f"bad value {raw!r} ({exc})")
            try:
                algorithms.append(AlgorithmSpec(kind, DesignParams(**dkw), CcmbbParams(**ckw), cov, label))
            except (ConfigError, ValueError) as exc:
                fail(name, "kind" if "kind" in str(exc) else None, str(exc))
        elif name != "run":
            fail(name, None, "unknown section")
    if not scenarios:
        raise ConfigError(f"{path}: no scenario defined (add [scenario] or [run] preset = ...)")
    if not algorithms:
        algorithms = [AlgorithmSpec("identity")]
    return RunConfig(scenarios, algorithms, seeds, pname)


def config_text(scenarios, algorithms, seeds=DEFAULT_SEEDS) -> str:
    """Serialise to the INI schema accepted by :func:`parse_config`."""
    cp = configparser.ConfigParser()
    cp["run"] = {"seeds": ", ".join(str(s) for s in seeds)}
    for sc in scenarios:
        sec = {}
        for f in dataclasses.fields(ScenarioSpec):
            if f.name == "name":
                continue
            v = getattr(sc, f.name)
            if isinstance(v, tuple):
                v = ", ".join(str(x) for x in v) or "none"
            sec[f.name] = "none" if v is None else str(v)
        cp[f"scenario.{sc.name}"] = sec
    for alg in algorithms:
        sec = {"kind": alg.kind, "covariance_source": alg.covariance_source}
        sec.update({f.name: str(getattr(alg.design, f.name)) for f in dataclasses.fields(DesignParams)})
        sec.update({k: str(getattr(alg.post, k)) for k in CCMBB_FIELDS})
        cp[f"algorithm.{alg.label}"] = sec
    import io
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


# -- seed aggregation and ordering checks --------------------------------------

DISPLAY = {
    "identity": "Identity", "bmvdr": "BMVDR", "bmvdr_n": "BMVDR-n", "bmvdr_ccmbb": "BMVDR-CCMBB",
    "blcmv": "BLCMV", "robust_tlcmv": "Robust TLCMV", "robust_tlcmv[R_n]": "Robust TLCMV (R_n)",
    "robust_tlcmv_ccmbb": "Robust TLCMV+CCMBB",
}
METRIC_DISPLAY = {
    "snr_gain": "SNR-gain", "sir_gain": "SIR-gain", "sdnr_gain": "SDNR-gain", "sdr": "SDR",
    "sdmag": "SDmag", "delta_ild": "ILD-error", "delta_ipd": "IPD-error", "delta_msc": "MSC-error",
}
SUMMARY_HEADER = "# beamlab-summary v1"
SUMMARY_COLUMNS = ["scenario", "algorithm", "metric", "summary", "mean", "min", "max", "n_seeds"]


def report_rows(reports):
    """MetricReports as string-valued CSV row dicts (same form as the metrics CSV)."""
    return [dict(zip(metrics.CSV_COLUMNS, map(str, row))) for rep in reports for row in rep.rows()]


def summarize_rows(rows, summaries=("mean", "broadband")) -> dict:
    """Seed statistics per (scenario, algorithm, metric, summary) at the better ear.

    Returns a dict mapping that key to ``(mean, min, max, n_seeds)``; metrics
    that are not applicable in every seed are left out.
    """
    ear, per_seed = {}, {}
    for r in rows:
        if r["metric"] == "better_ear":
            ear[(r["scenario"], r["algorithm"], r["seed"])] = r["side"]
    for r in rows:
        if r["bin"] not in summaries or r["metric"] == "better_ear":
            continue
        run = (r["scenario"], r["algorithm"], r["seed"])
        if r["side"] != "binaural" and r["side"] != ear.get(run, "left"):
            continue
        per_seed.setdefault((r["scenario"], r["algorithm"], r["metric"], r["bin"]), []).append(r["value"])
    out = {}
    for key, vals in per_seed.items():
        if any(v == "na" for v in vals):
            continue
        v = np.array([float(x) for x in vals])
        out[key] = (float(v.mean()), float(v.min()), float(v.max()), len(v))
    return out


def write_summary_csv(path, summary: dict):
    import csv
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([SUMMARY_HEADER])
        w.writerow(SUMMARY_COLUMNS)
        for key in sorted(summary):
            w.writerow([*key, *(repr(x) for x in summary[key][:3]), summary[key][3]])


@dataclass(frozen=True)
class CheckResult:
    check: object
    passed: bool | None
    values: tuple
    detail: str

    def line(self) -> str:
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[self.passed]
        return f"{status}  [{self.check.group}] {self.check.text()}  ({self.detail})"


@dataclass(frozen=True)
class OrderingCheck:
    """``items`` (scenario, algorithm) in claimed order under ``relation``.

    ``relation`` is ``">"`` or ``"<"``; ``margin`` relaxes each step to
    ``a > b - margin`` (or ``a < b + margin``).
    """

    group: str
    metric: str
    items: tuple
    relation: str = ">"
    margin: float = 0.0
    summary: str = "mean"

    def text(self) -> str:
        names = []
        scenarios = {s for s, _ in self.items}
        for s, a in self.items:
            n = DISPLAY.get(a, a)
            names.append(n if len(scenarios) == 1 else f"{n}@{s}")
        rel = f" {self.relation} "
        body = rel.join(names)
        if self.margin:
            body += f" (margin {self.margin:g})"
        return f"{METRIC_DISPLAY.get(self.metric, self.metric)}: {body}"

    def evaluate(self, summary: dict) -> CheckResult:
        vals = []
        for s, a in self.items:
            v = summary.get((s, a, self.metric, self.summary))
            if v is None:
                return CheckResult(self, None, (), f"missing {s}/{a}/{self.metric}")
            vals.append(v[0])
        sign = 1 if self.relation == ">" else -1
        ok = all(sign * (x - y) > -self.margin for x, y in zip(vals, vals[1:]))
        rel = f" {self.relation} "
        return CheckResult(self, ok, tuple(vals), rel.join(f"{v:.3f}" for v in vals))


@dataclass(frozen=True)
class StabilityCheck:
    """Relative spread ``(max - min) / mean`` of a metric across items stays below ``limit``."""

    group: str
    metric: str
    items: tuple
    algorithm: str = ""
    limit: float = 0.2
    summary: str = "mean"

    def text(self) -> str:
        a = DISPLAY.get(self.items[0][1], self.items[0][1])
        return (f"{METRIC_DISPLAY.get(self.metric, self.metric)}: {a} spread across "
                f"{len(self.items)} scenarios < {self.limit:.0%}")

    def evaluate(self, summary: dict) -> CheckResult:
        vals = []
        for s, a in self.items:
            v = summary.get((s, a, self.metric, self.summary))
            if v is None:
                return CheckResult(self, None, (), f"missing {s}/{a}/{self.metric}")
            vals.append(v[0])
        v = np.array(vals)
        spread = float((v.max() - v.min()) / abs(v.mean())) if v.mean() else math.inf
        return CheckResult(self, spread < self.limit, tuple(vals),
                           f"spread {spread:.1%} over " + ", ".join(f"{x:.3f}" for x in vals))


def _checks():
    c = []
    for n in (1, 2, 3, 4):
        s0, s10 = f"table1_s{n}_t0", f"table1_s{n}_t10"
        c.append(OrderingCheck("fig6", "sdr", ((s10, "robust_tlcmv"), (s10, "bmvdr"))))
        c.append(OrderingCheck("fig6", "snr_gain", ((s10, "robust_tlcmv"), (s10, "bmvdr"))))
        c.append(OrderingCheck("fig6", "snr_gain", ((s0, "bmvdr"), (s0, "robust_tlcmv")), margin=1.0))
    f7 = "fig7_ry_vs_rn"
    c.append(OrderingCheck("fig7", "sir_gain", ((f7, "robust_tlcmv"), (f7, "robust_tlcmv[R_n]"))))
    c.append(OrderingCheck("fig7", "sdnr_gain", ((f7, "robust_tlcmv[R_n]"), (f7, "robust_tlcmv"))))
    t2 = "table2_ccmbb"
    c.append(OrderingCheck("table2", "snr_gain", ((t2, "bmvdr"), (t2, "bmvdr_ccmbb"), (t2, "bmvdr_n"))))
    c.append(OrderingCheck("table2", "delta_msc", ((t2, "bmvdr_ccmbb"), (t2, "bmvdr_n"), (t2, "bmvdr")), "<"))
    c.append(OrderingCheck("table2", "sdmag", ((t2, "bmvdr_ccmbb"), (t2, "bmvdr_n"), (t2, "bmvdr")), "<"))
    for s in ("fig10_doa10_anechoic", "fig13_doa10_reverb"):
        pair = ((s, "robust_tlcmv_ccmbb"), (s, "blcmv"))
        c.append(OrderingCheck("fig10_13", "snr_gain", pair))
        c.append(OrderingCheck("fig10_13", "sdr", pair))
        c.append(OrderingCheck("fig10_13", "delta_msc", pair, "<"))
    for m in ("delta_ipd", "delta_ild"):
        # DOA mismatch (anechoic), then HRTF mismatch without and with DOA mismatch
        c.append(OrderingCheck("fig11_14", m, (("fig10_doa10_anechoic", "blcmv"), ("fig9_doa0_anechoic", "blcmv"))))
        c.append(OrderingCheck("fig11_14", m, (("fig15_imis0", "blcmv"), ("fig9_doa0_anechoic", "blcmv"))))
        c.append(OrderingCheck("fig11_14", m, (("fig13_doa10_reverb", "blcmv"), ("fig10_doa10_anechoic", "blcmv"))))
        c.append(StabilityCheck("fig15", m, tuple((f"fig15_imis{k}", "robust_tlcmv_ccmbb") for k in (0, 5, 10, 15, 20))))
    return tuple(c)


CHECKS = _checks()


def run_checks(summary: dict, checks=CHECKS, skip_missing: bool = True):
    """Evaluate checks against a seed summary; checks with absent inputs are skipped."""
    res = [chk.evaluate(summary) for chk in checks]
    return [r for r in res if r.passed is not None] if skip_missing else res
