"""``veremi-bench`` command line: generate, detect, report, pipeline.

Exit codes: 0 ok, 1 I/O failure, 2 configuration error, 3 data-format error.

The config file is INI with ``[scenario]``, ``[attack]`` and ``[detect]``
sections. Every key is also a command-line flag of the same name, and the
flag wins. Sweep keys (``seed``, ``density``, ``attacker-type``,
``attacker-fraction``) take comma-separated lists; one run directory is
generated per combination.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import os
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .attacks import AttackParams, Rect
from .core import DENSITIES, AttackerType, DensityClass, Vec3
from .detect import (
    VERDICT_FILE,
    DetectionError,
    DetectorConfig,
    available_backends,
    detect_run,
    read_verdicts,
    write_verdicts,
)
from .metrics import MissingLabelError, RunInfo, emit_report, evaluate_run
from .scenario import ConfigError, ScenarioConfig, generate_run, run_name, sweep_configs
from .traceio import (
    GROUND_TRUTH_NAME,
    TraceFormatError,
    UnknownMessageError,
    list_logs,
    read_ground_truth_file,
    read_log_file,
    read_manifest,
    write_manifest,
)

log = logging.getLogger("veremi_bench")

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


# -- config keys ---------------------------------------------------------------------

def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(" ", "").split(",") if x]


def _ints(text: str) -> list[int]:
    out = []
    for x in text.replace(" ", "").split(","):
        if x:
            out.append(int(x))
    return out


def _strs(text: str) -> list[str]:
    return [x for x in text.replace(" ", "").split(",") if x]


@dataclass(frozen=True)
class Key:
    name: str
    section: str
    parse: Callable[[str], object]
    help: str


KEYS = [
    Key("seed", "scenario", _ints, "random seed(s)"),
    Key("density", "scenario", _strs, "density class(es): low, medium, high"),
    Key("attacker-type", "scenario", _ints, "attacker type code(s): 1, 2, 4, 8, 16"),
    Key("attacker-fraction", "scenario", _floats, "per-vehicle attacker probability(ies)"),
    Key("duration", "scenario", float, "simulated seconds"),
    Key("beacon-rate", "scenario", float, "beacons per second"),
    Key("gps-rate", "scenario", float, "GPS updates per second"),
    Key("comm-range", "scenario", float, "maximum radio range (m)"),
    Key("loss-exponent", "scenario", float, "reception probability falloff exponent"),
    Key("noise-sigma-pos", "scenario", float, "receiver position noise sigma (m)"),
    Key("noise-sigma-spd", "scenario", float, "receiver speed noise sigma (m/s)"),
    Key("playground", "scenario", _floats, "xmin,ymin,xmax,ymax"),
    Key("grid-x", "scenario", _floats, "x coordinates of north-south roads"),
    Key("grid-y", "scenario", _floats, "y coordinates of east-west roads"),
    Key("speed-limits", "scenario", _floats, "per-road limits to draw from (m/s)"),
    Key("light-cycle", "scenario", float, "traffic light cycle (s)"),
    Key("low-band", "scenario", _ints, "vehicle count band min,max"),
    Key("medium-band", "scenario", _ints, "vehicle count band min,max"),
    Key("high-band", "scenario", _ints, "vehicle count band min,max (491,519 for full scale)"),
    Key("constant-pos", "attack", _floats, "type 1 claimed position x,y[,z]"),
    Key("constant-offset", "attack", _floats, "type 2 offset dx,dy[,dz]"),
    Key("random-offset-bound", "attack", float, "type 8 offset bound (m)"),
    Key("stop-prob-increment", "attack", float, "type 16 stop probability step"),
    Key("art-thresholds", "detect", _floats, "ART reception ranges (m)"),
    Key("saw-thresholds", "detect", _floats, "SAW appearance distances (m)"),
    Key("ssc-thresholds", "detect", _floats, "SSC speed deviations (m/s)"),
    Key("dmv-thresholds", "detect", _floats, "DMV minimum distances (m)"),
]
KEY_BY_NAME = {k.name: k for k in KEYS}


def load_settings(path: str | None, overrides: dict[str, str | None]) -> dict[str, object]:
    """Merge config file and flag values into parsed settings keyed by flag name."""
    raw: dict[str, str] = {}
    if path:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read config {path}: {exc.strerror}") from None
        except configparser.Error as exc:
            raise CliError(EXIT_CONFIG, f"{path}: {exc}") from None
        for section in parser.sections():
            for name, value in parser.items(section):
                key = KEY_BY_NAME.get(name)
                if key is None:
                    raise CliError(EXIT_CONFIG, f"{path}: unknown key {name!r} in [{section}]")
                if key.section != section:
                    raise CliError(EXIT_CONFIG,
                                   f"{path}: key {name!r} belongs in [{key.section}]")
                raw[name] = value
    for name, value in overrides.items():
        if value is not None:
            raw[name] = value
    settings = {}
    for name, value in raw.items():
        try:
            settings[name] = KEY_BY_NAME[name].parse(value)
        except ValueError:
            raise CliError(EXIT_CONFIG, f"{name}: cannot parse {value!r}") from None
    return settings


def _vec(name: str, values: list[float]) -> Vec3:
    if len(values) not in (2, 3):
        raise CliError(EXIT_CONFIG, f"{name}: expected 2 or 3 numbers")
    return Vec3(*values)


def build_configs(settings: dict[str, object]) -> list[ScenarioConfig]:
    s = settings
    try:
        densities = dict(DENSITIES)
        for tag in ("low", "medium", "high"):
            band = s.get(f"{tag}-band")
            if band is not None:
                if len(band) != 2:
                    raise CliError(EXIT_CONFIG, f"{tag}-band: expected min,max")
                densities[tag] = DensityClass(tag, band[0], band[1])
        chosen = []
        for tag in s.get("density", ["low"]):
            if tag not in densities:
                raise CliError(EXIT_CONFIG, f"density: unknown class {tag!r}")
            chosen.append(densities[tag])
        types = []
        for code in s.get("attacker-type", [1]):
            try:
                types.append(AttackerType(code))
            except ValueError:
                raise CliError(EXIT_CONFIG, f"attacker-type: invalid code {code}") from None
        fractions = s.get("attacker-fraction", [0.1])
        seeds = s.get("seed", [0])

        pg = s.get("playground")
        playground = Rect(*pg) if pg is not None else AttackParams().playground
        attack_kw = {"playground": playground}
        if "constant-pos" in s:
            attack_kw["constantPos"] = _vec("constant-pos", s["constant-pos"])
        if "constant-offset" in s:
            attack_kw["constantOffset"] = _vec("constant-offset", s["constant-offset"])
        if "random-offset-bound" in s:
            attack_kw["randomOffsetBound"] = s["random-offset-bound"]
        if "stop-prob-increment" in s:
            attack_kw["stopProbIncrement"] = s["stop-prob-increment"]
        attack = AttackParams(**attack_kw)

        kw: dict[str, object] = {"playground": playground, "attack": attack}
        for name, attr in (("duration", "durationSeconds"), ("beacon-rate", "beaconRate"),
                           ("gps-rate", "gpsRate"), ("comm-range", "commRange"),
                           ("loss-exponent", "lossExponent"), ("noise-sigma-pos", "noiseSigmaPos"),
                           ("noise-sigma-spd", "noiseSigmaSpd"), ("light-cycle", "lightCycle")):
            if name in s:
                kw[attr] = s[name]
        for name, attr in (("grid-x", "gridX"), ("grid-y", "gridY"),
                           ("speed-limits", "speedLimits")):
            if name in s:
                kw[attr] = tuple(s[name])
        if pg is not None and "grid-x" not in s:
            kw["gridX"] = _default_grid(playground.xmin, playground.xmax, 500.0)
        if pg is not None and "grid-y" not in s:
            kw["gridY"] = _default_grid(playground.ymin, playground.ymax, 450.0)
        for f in fractions:
            if not 0.0 <= f <= 1.0:
                raise ConfigError("attacker-fraction", f"{f} is outside [0, 1]")
        base = ScenarioConfig(density=chosen[0], attackerType=types[0],
                              attackerFraction=fractions[0], seed=seeds[0], **kw)
        return sweep_configs(base, chosen, fractions, types, seeds)
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None


def _default_grid(lo: float, hi: float, spacing: float) -> tuple[float, ...]:
    n = max(1, round((hi - lo) / spacing))
    return tuple(lo + (hi - lo) * k / n for k in range(n + 1))


def build_detector_config(settings: dict[str, object]) -> DetectorConfig:
    kw = {}
    for name, attr in (("art-thresholds", "artThresholds"), ("saw-thresholds", "sawThresholds"),
                       ("ssc-thresholds", "sscThresholds"), ("dmv-thresholds", "dmvThresholds")):
        if name in settings:
            kw[attr] = tuple(settings[name])
    try:
        return DetectorConfig(**kw)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None


# -- workers -------------------------------------------------------------------------

def _map(fn, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _generate_one(args: tuple[ScenarioConfig, str]) -> str:
    config, out = args
    generate_run(config, out)
    return out


def _detect_one(args: tuple[str, DetectorConfig, bool, str | None]) -> tuple[str, int]:
    run_dir, config, external, backend = args
    run = Path(run_dir)
    manifest = read_manifest(run)
    if manifest is None and not external:
        raise CliError(EXIT_DATA, f"{run}: no manifest.json (pass --external for third-party data)")
    logs_found = list_logs(run)
    if not logs_found:
        raise CliError(EXIT_DATA, f"{run}: no reception logs (log-<id>.jsonl)")
    try:
        logs = {rid: read_log_file(p, rid) for rid, p in logs_found.items()}
        table = detect_run(logs, config, run=run.name, backend=backend)
    except (TraceFormatError, DetectionError) as exc:
        raise CliError(EXIT_DATA, str(exc)) from None
    try:
        write_verdicts(table, run / VERDICT_FILE)
        if manifest is not None:
            manifest["detector"] = config.snapshot()
            write_manifest(run, manifest)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write to {run}: {exc.strerror}") from None
    return run_dir, len(table)


def _evaluate_one(args: tuple[str, bool, bool]):
    run_dir, include_attackers, external = args
    run = Path(run_dir)
    manifest = read_manifest(run)
    if manifest is None and not external:
        raise CliError(EXIT_DATA, f"{run}: no manifest.json (pass --external for third-party data)")
    vpath = run / VERDICT_FILE
    if not vpath.exists():
        raise CliError(EXIT_DATA, f"{run}: no {VERDICT_FILE}; run 'detect' first")
    try:
        truth = read_ground_truth_file(run / GROUND_TRUTH_NAME)
        table = read_verdicts(vpath)
    except FileNotFoundError as exc:
        raise CliError(EXIT_DATA, f"{run}: missing {Path(exc.filename).name}") from None
    except (TraceFormatError, DetectionError, ValueError) as exc:
        raise CliError(EXIT_DATA, str(exc)) from None
    if manifest is not None:
        info = RunInfo(run.name, int(manifest["attackerType"]), str(manifest["density"]),
                       float(manifest["attackerFraction"]), int(manifest["seed"]))
    else:
        kind = max((int(gt.attackerType) for gt in truth.values()), default=0)
        info = RunInfo(run.name, kind, "external", None, None)
    try:
        return evaluate_run(table, truth, info, include_attackers)
    except MissingLabelError as exc:
        raise CliError(EXIT_DATA, f"{run}: {exc.args[0]}") from None


def expand_runs(paths: Sequence[str]) -> list[str]:
    """Accept run directories or parents of run directories."""
    out = []
    for p in paths:
        path = Path(p)
        if not path.is_dir():
            raise CliError(EXIT_DATA, f"{p}: not a directory")
        if (path / "manifest.json").exists() or list_logs(path) or (path / VERDICT_FILE).exists():
            out.append(str(path))
            continue
        children = sorted(c for c in path.iterdir() if c.is_dir()
                          and ((c / "manifest.json").exists() or list_logs(c)))
        out.extend(str(c) for c in children) if children else out.append(str(path))
    return out


# -- commands --------------------------------------------------------------------------

def cmd_generate(args) -> int:
    settings = load_settings(args.config, _flag_values(args))
    configs = build_configs(settings)
    out = Path(args.out)
    targets = [(c, str(out / run_name(c))) for c in configs]
    if args.dry_run:
        for _, path in targets:
            print(path)
        return EXIT_OK
    for _, path in targets:
        if Path(path).exists():
            if not args.overwrite:
                raise CliError(EXIT_IO, f"{path} exists (use --overwrite)")
            shutil.rmtree(path)
    try:
        _map(_generate_one, targets, args.jobs)
    except OSError as exc:
        raise CliError(EXIT_IO, f"write failed: {exc}") from None
    log.info("generated %d run(s) under %s", len(targets), out)
    return EXIT_OK


def cmd_detect(args) -> int:
    settings = load_settings(args.config, _flag_values(args))
    config = build_detector_config(settings)
    runs = expand_runs(args.runs)
    results = _map(_detect_one, [(r, config, args.external, args.backend) for r in runs], args.jobs)
    for run, n in results:
        log.info("%s: %d beacon events x %d thresholds", run, n, len(config.columns))
    return EXIT_OK


def cmd_report(args) -> int:
    runs = expand_runs(args.runs)
    evaluations = _map(_evaluate_one,
                       [(r, args.include_attacker_receivers, args.external) for r in runs],
                       args.jobs)
    try:
        emit_report(evaluations, args.out)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write report to {args.out}: {exc.strerror}") from None
    return EXIT_OK


def cmd_pipeline(args) -> int:
    out = Path(args.out)
    runs_dir, report_dir = out / "runs", out / "report"
    gen = replace_ns(args, out=str(runs_dir))
    cmd_generate(gen)
    if args.dry_run:
        return EXIT_OK
    names = [str(runs_dir / run_name(c))
             for c in build_configs(load_settings(args.config, _flag_values(args)))]
    cmd_detect(replace_ns(args, runs=names, external=False))
    return cmd_report(replace_ns(args, runs=names, out=str(report_dir), external=False))


def replace_ns(ns: argparse.Namespace, **changes) -> argparse.Namespace:
    d = vars(ns).copy()
    d.update(changes)
    return argparse.Namespace(**d)


def _flag_values(args) -> dict[str, str | None]:
    return {k.name: getattr(args, "cfg_" + k.name.replace("-", "_"), None) for k in KEYS}


def _add_keys(p: argparse.ArgumentParser, sections: set[str]) -> None:
    group = p.add_argument_group("settings (override the config file)")
    for k in KEYS:
        if k.section in sections:
            group.add_argument(f"--{k.name}", dest="cfg_" + k.name.replace("-", "_"),
                               metavar="VALUE", help=k.help)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="veremi-bench", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    jobs_default = os.cpu_count() or 1

    g = sub.add_parser("generate", help="simulate runs and write run directories")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.add_argument("--jobs", type=int, default=jobs_default)
    g.add_argument("--overwrite", action="store_true")
    g.add_argument("--dry-run", action="store_true", help="list run directories only")
    _add_keys(g, {"scenario", "attack"})
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("detect", help="run detectors over run directories")
    d.add_argument("runs", nargs="+")
    d.add_argument("--config")
    d.add_argument("--jobs", type=int, default=jobs_default)
    d.add_argument("--external", action="store_true", help="accept runs without a manifest")
    d.add_argument("--backend", choices=available_backends())
    _add_keys(d, {"detect"})
    d.set_defaults(func=cmd_detect)

    r = sub.add_parser("report", help="aggregate verdicts into CSV reports")
    r.add_argument("runs", nargs="+")
    r.add_argument("--out", required=True)
    r.add_argument("--jobs", type=int, default=jobs_default)
    r.add_argument("--include-attacker-receivers", action="store_true")
    r.add_argument("--external", action="store_true")
    r.set_defaults(func=cmd_report)

    pl = sub.add_parser("pipeline", help="generate, detect and report in one go")
    pl.add_argument("--config")
    pl.add_argument("--out", required=True)
    pl.add_argument("--jobs", type=int, default=jobs_default)
    pl.add_argument("--overwrite", action="store_true")
    pl.add_argument("--dry-run", action="store_true")
    pl.add_argument("--include-attacker-receivers", action="store_true")
    pl.add_argument("--backend", choices=available_backends())
    _add_keys(pl, {"scenario", "attack", "detect"})
    pl.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"veremi-bench: error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"veremi-bench: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
