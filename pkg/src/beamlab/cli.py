"""Command-line front end: ``beamlab {synth,run,beampattern,report,presets}``.

Exit codes: 0 success, 1 usage error, 2 runtime error, 3 ordering check failed.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, acoustics, beamform, harness, metrics
from .ccmbb import write_decisions_csv
from .stft import StftParams, TimeTrackSet, synthesize
from .wavio import CHANNEL_ORDER, write_wav

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_ORDERING = 0, 1, 2, 3
SEED_ENV = "BEAMLAB_SEED"
BEAMPATTERN_HEADER = "# beamlab-beampattern v1"
SOURCE_LEVEL = 0.05

log = logging.getLogger("beamlab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p, experiment=True):
    p.add_argument("--out", type=Path, default=Path("beamlab_out"), help="output directory")
    p.add_argument("--force", action="store_true", help="allow writing into a non-empty output directory")
    p.add_argument("-v", "--verbose", action="count", default=0)
    if experiment:
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", type=Path, help="INI experiment config")
        src.add_argument("--preset", help="named experiment preset (see `beamlab presets`)")
        p.add_argument("--seed", type=int, help=f"single seed (falls back to ${SEED_ENV}, then the config)")
        p.add_argument("--duration", type=float, help="override scene duration in seconds")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="beamlab", description="Binaural beamforming simulation and evaluation.")
    ap.add_argument("--version", action="version", version=f"beamlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="render scene components to WAV")
    _add_common(p)

    p = sub.add_parser("run", help="process scenes and write outputs and metrics")
    _add_common(p)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--no-audio", action="store_true", help="skip output WAVs")
    p.add_argument("--no-decisions", action="store_true", help="skip CCMBB decision CSVs")

    p = sub.add_parser("beampattern", help="export beampatterns under isotropic diffuse noise")
    _add_common(p, experiment=False)
    p.add_argument("--config", type=Path, help="take angles and designs from a config")
    p.add_argument("--preset", help="take angles and designs from a preset's first scenario")
    p.add_argument("--designs", default="bmvdr,robust_tlcmv,blcmv")
    p.add_argument("--target", type=float, default=0.0, help="estimated target angle (deg)")
    p.add_argument("--interferers", default="225,90", help="estimated interferer angles for BLCMV")
    p.add_argument("--delta", type=float, default=5.0)
    p.add_argument("--zeta", type=float, default=1.0)
    p.add_argument("--eta", type=float, default=0.2)

    p = sub.add_parser("report", help="summarise metrics CSVs and check orderings")
    p.add_argument("inputs", nargs="*", type=Path, help="metrics CSV files or run directories")
    p.add_argument("--out", type=Path, help="also write summary.csv and report.txt here")
    p.add_argument("--force", action="store_true")
    p.add_argument("--summary", choices=("mean", "broadband"), default="mean",
                   help="per-bin band mean or broadband values for gain/distortion checks")
    p.add_argument("-v", "--verbose", action="count", default=0)

    p = sub.add_parser("presets", help="list experiment presets")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return ap


# -- helpers --------------------------------------------------------------------

def _prepare_out(out: Path, force: bool):
    if out.exists() and not out.is_dir():
        raise UsageError(f"{out} exists and is not a directory")
    if out.exists() and any(out.iterdir()) and not force:
        raise UsageError(f"{out} is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)


def resolve_seeds(arg_seed, config_seeds, env=None):
    env = os.environ if env is None else env
    if arg_seed is not None:
        return (arg_seed,)
    if env.get(SEED_ENV, "").strip():
        try:
            return (int(env[SEED_ENV]),)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
    return tuple(config_seeds)


def load_experiment(args) -> harness.RunConfig:
    if args.config is not None:
        if not args.config.exists():
            raise UsageError(f"config file {args.config} not found")
        cfg = harness.parse_config(args.config)
    elif args.preset:
        p = harness.preset(args.preset)
        cfg = harness.RunConfig(list(p.scenarios), list(p.algorithms), harness.DEFAULT_SEEDS, p.name)
    else:
        raise UsageError("one of --config or --preset is required")
    if getattr(args, "duration", None) is not None:
        cfg.scenarios = [dataclasses.replace(s, duration_s=args.duration) for s in cfg.scenarios]
    return cfg


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(type(o).__name__)


def _scenario_dict(sc):
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(sc).items()}


# -- commands ---------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = load_experiment(args)
    _prepare_out(args.out, args.force)
    seeds = resolve_seeds(args.seed, (None,))
    manifest = {"sample_rate": 24000, "channel_order": list(CHANNEL_ORDER),
                "source_level_db": 20 * np.log10(SOURCE_LEVEL), "scenes": []}
    for sc in cfg.scenarios:
        for seed in seeds:
            s = sc if seed is None else dataclasses.replace(sc, seed=seed)
            sources = harness.load_sources(s, 24000)
            scene = acoustics.compose_scene(s, source_level=SOURCE_LEVEL, sources=sources)
            d = args.out / s.name / f"seed{s.seed}"
            d.mkdir(parents=True, exist_ok=True)
            files = {"mixture": write_wav(d / "mixture.wav", scene.mixture),
                     "target": write_wav(d / "target.wav", scene.target)}
            for i, v in enumerate(scene.interferers):
                files[f"interferer{i + 1}"] = write_wav(d / f"interferer{i + 1}.wav", v)
            if scene.diffuse is not None:
                files["diffuse"] = write_wav(d / "diffuse.wav", scene.diffuse)
            manifest["scenes"].append({
                "scenario": _scenario_dict(s),
                "target_deg": scene.target_deg, "interferer_degs": scene.interferer_degs,
                "diffuse_level_db": None if s.diffuse_rel_db is None
                else 20 * np.log10(SOURCE_LEVEL) + s.diffuse_rel_db,
                "files": {k: str(p.relative_to(args.out)) for k, p in files.items()},
            })
            log.info("wrote %s", d)
    (args.out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_json_default))
    print(f"synthesised {len(manifest['scenes'])} scene(s) into {args.out}")
    return EXIT_OK


def _file_label(label: str) -> str:
    return label.replace("[", "_").replace("]", "")


def _write_run_outputs(res: harness.ExperimentResult, out: Path, audio: bool, decisions: bool):
    d = out / res.scenario.name / f"seed{res.scenario.seed}"
    d.mkdir(parents=True, exist_ok=True)
    written = {}
    n = int(round(res.scenario.duration_s * 24000))
    for label, sides in res.outputs.items():
        if audio:
            zm = np.stack([sides["left"], sides["right"]], axis=-1)
            track = synthesize(zm, StftParams(), length=n)
            name = f"{_file_label(label)}.wav"
            written[name] = write_wav(d / name, TimeTrackSet(track.samples, 24000, "output"))
        if decisions and label in res.decisions:
            p = d / f"{_file_label(label)}_decisions.csv"
            write_decisions_csv(p, [res.decisions[label][s] for s in beamform.SIDES])
            written[p.name] = p
    return written


def cmd_run(args) -> int:
    cfg = load_experiment(args)
    _prepare_out(args.out, args.force)
    seeds = resolve_seeds(args.seed, cfg.seeds)
    keep = not (args.no_audio and args.no_decisions)
    p = harness.Preset(cfg.preset or "config", cfg.scenarios, cfg.algorithms)
    results = harness.run_preset(p, seeds, jobs=max(args.jobs, 1), keep_outputs=keep)
    reports, errors, runs = [], [], []
    for res in results:
        reports.extend(res.reports)
        files = _write_run_outputs(res, args.out, not args.no_audio, not args.no_decisions) if keep else {}
        for label, msg in res.errors.items():
            errors.append(f"{res.scenario.name} seed {res.scenario.seed} {label}: {msg}")
        runs.append({"scenario": res.scenario.name, "seed": res.scenario.seed, "errors": res.errors,
                     "additivity": res.additivity, "timing_s": res.timing,
                     "files": sorted(str(f.relative_to(args.out)) for f in files.values())})
    metrics.write_reports_csv(args.out / "metrics.csv", reports)
    (args.out / "config.ini").write_text(harness.config_text(cfg.scenarios, cfg.algorithms, seeds))
    (args.out / "run.json").write_text(json.dumps({"seeds": list(seeds), "runs": runs}, indent=2,
                                                  default=_json_default))
    print(f"{len(reports)} report(s) written to {args.out / 'metrics.csv'}")
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    return EXIT_RUNTIME if errors else EXIT_OK


def _beampattern_requests(args):
    designs = [d.strip() for d in args.designs.split(",") if d.strip()]
    interf = harness._floats(args.interferers)
    dp = beamform.DesignParams(zeta=args.zeta, eta=args.eta, delta_deg=args.delta)
    if args.config or args.preset:
        if args.config:
            cfg = harness.parse_config(args.config)
            sc, algs = cfg.scenarios[0], cfg.algorithms
        else:
            pr = harness.preset(args.preset)
            sc, algs = pr.scenarios[0], pr.algorithms
        return sc, [a for a in algs if a.kind != "identity"]
    sc = harness.ScenarioSpec("beampattern", args.target, args.target, interf, interf)
    return sc, [harness.AlgorithmSpec(d, dp) for d in designs]


def cmd_beampattern(args) -> int:
    _prepare_out(args.out, args.force)
    sc, algs = _beampattern_requests(args)
    dset = harness.design_directivity()
    R = beamform.isotropic_diffuse_covariance(dset)
    path = args.out / "beampattern.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([BEAMPATTERN_HEADER])
        w.writerow(["design", "side", "angle_deg", "bin", "freq_hz", "bp"])
        for alg in algs:
            cons = harness.constraints_for(alg, sc, dset)
            for side in beamform.SIDES:
                wts = beamform.fixed_weights(R, cons[side], alg.design.loading)
                bp = beamform.beampattern(wts, dset)
                for f in range(bp.shape[0]):
                    for a, ang in enumerate(dset.angles):
                        w.writerow([alg.label, side, f"{ang:g}", f, f"{dset.freqs[f]:g}", repr(float(bp[f, a]))])
    print(f"beampatterns for {', '.join(a.label for a in algs)} written to {path}")
    return EXIT_OK


def _collect_inputs(paths):
    if not paths:
        raise UsageError("report needs at least one metrics CSV or run directory")
    files, missing = [], []
    for p in paths:
        if p.is_dir() and (p / "metrics.csv").exists():
            files.append(p / "metrics.csv")
        elif p.is_file():
            files.append(p)
        else:
            missing.append(str(p))
    if missing:
        raise FileNotFoundError("missing inputs: " + ", ".join(missing))
    return files


def summary_text(summary: dict, summ: str) -> list[str]:
    cols = list(harness.METRIC_DISPLAY)
    lines = [f"{'scenario':26s} {'algorithm':22s} " + " ".join(f"{harness.METRIC_DISPLAY[c]:>10s}" for c in cols)]
    runs = sorted({(k[0], k[1]) for k in summary})
    for sc, alg in runs:
        vals = []
        for c in cols:
            key = (sc, alg, c, summ if c in metrics.PER_SIDE else "mean")
            v = summary.get(key)
            vals.append(f"{v[0]:10.3f}" if v else f"{'na':>10s}")
        lines.append(f"{sc:26s} {alg:22s} " + " ".join(vals))
    return lines


def cmd_report(args) -> int:
    files = _collect_inputs(args.inputs)
    rows = []
    for f in files:
        rows.extend(metrics.read_reports_csv(f))
    if not rows:
        raise UsageError("input CSVs contain no metric rows")
    summary = harness.summarize_rows(rows)
    checks = [dataclasses.replace(c, summary=args.summary)
              if c.metric in metrics.PER_SIDE else c for c in harness.CHECKS]
    results = harness.run_checks(summary, checks)
    lines = summary_text(summary, args.summary)
    lines.append("")
    if results:
        lines.extend(r.line() for r in results)
    else:
        lines.append("no ordering checks apply to these inputs")
    text = "\n".join(lines)
    print(text)
    if args.out is not None:
        _prepare_out(args.out, args.force)
        harness.write_summary_csv(args.out / "summary.csv", summary)
        (args.out / "report.txt").write_text(text + "\n")
    return EXIT_ORDERING if any(r.passed is False for r in results) else EXIT_OK


def cmd_presets(args) -> int:
    for name, p in harness.PRESETS.items():
        algs = ", ".join(a.label for a in p.algorithms)
        print(f"{name:34s} {len(p.scenarios)} scenario(s); {algs}")
        if args.verbose:
            print(f"    {p.description}")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "run": cmd_run, "beampattern": cmd_beampattern,
            "report": cmd_report, "presets": cmd_presets}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, harness.ConfigError) as exc:
        print(f"beamlab {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"beamlab {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
