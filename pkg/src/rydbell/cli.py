"""Command-line entry point: ``rydbell <experiment> [options]``.

Each experiment subcommand simulates shots and writes four files to
``--out``: ``shots.csv`` (one row per shot), ``summary.csv`` (per-point
x, y, yerr and fitted curve), ``result.json`` (fits and estimates) and
``effective_config.json`` (the config actually used, seed and overrides
included). ``analyze`` recomputes ``result.json`` from a saved shot file.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

from . import __version__, experiments
from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .detection import ShotRecords

log = logging.getLogger("rydbell")

SUMMARY_COLUMNS = ("series", "group_value", "x", "y", "yerr", "fit_y")


def _clean(obj):
    """JSON-safe copy: non-finite floats become null, tuples become lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if hasattr(obj, "item"):
        return _clean(obj.item())
    return obj


def write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True, allow_nan=False) + "\n")


def write_summary(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([r["series"]] + [repr(float(r[k])) for k in SUMMARY_COLUMNS[1:]])


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "shots", None) is not None:
        overrides["scan.shots_per_point"] = args.shots
    if getattr(args, "no_blowaway", False):
        overrides["detection.blowaway"] = False
    return cfg.replace(**overrides) if overrides else cfg


def cmd_experiment(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    kwargs = {}
    if args.command == "blockade" and args.mode != "both":
        kwargs["modes"] = (args.mode,)
    sim = experiments.Simulator(cfg, threads=args.threads)
    res = experiments.SIMULATE[args.command](sim, **kwargs)
    records, extras = res if isinstance(res, tuple) else (res, {})
    summary, analysis = experiments.analyze(args.command, records, cfg, raw_bins=args.raw_bins)
    records.write_csv(out / "shots.csv")
    write_summary(out / "summary.csv", summary)
    write_json(out / "result.json", {
        "experiment": args.command,
        "version": __version__,
        "raw_bins": args.raw_bins,
        "analysis": analysis,
        "simulation": extras,
    })
    dump_config(cfg, out / "effective_config.json")
    log.info("%s: %d shots in %.1f s -> %s", args.command, len(records.outcomes), time.perf_counter() - t0, out)
    print(json.dumps(_clean(headline(args.command, analysis)), sort_keys=True))
    return 0


def headline(name: str, analysis: dict) -> dict:
    """The few numbers worth printing to the terminal."""
    if name == "bell":
        b = analysis["bell"]
        return {k: b[k] for k in ("fidelity", "fidelity_pairs", "p_recap", "loss1", "loss2", "re_coherence")}
    if name == "blockade":
        return {k: v for k, v in analysis.items() if not isinstance(v, dict)} or {
            m: analysis[m]["rabi_MHz"] for m in analysis}
    if name == "rabi-ground":
        return {a: analysis[a]["rabi_MHz"] for a in ("atom1", "atom2")}
    return {k: v for k, v in analysis.items() if not isinstance(v, dict)}


def cmd_analyze(args) -> int:
    shots = Path(args.shots_file)
    if shots.is_dir():
        shots = shots / "shots.csv"
    if not shots.is_file():
        print(f"error: shot file {shots} not found", file=sys.stderr)
        return 1
    base = shots.parent
    name = args.experiment
    if name is None:
        meta = base / "result.json"
        if not meta.is_file():
            print("error: pass --experiment (no result.json next to the shot file)", file=sys.stderr)
            return 1
        name = json.loads(meta.read_text())["experiment"]
    cfg_path = args.config or (base / "effective_config.json")
    cfg = load_config(cfg_path if Path(cfg_path).is_file() else None)
    records = ShotRecords.read_csv(shots)
    summary, analysis = experiments.analyze(name, records, cfg, raw_bins=args.raw_bins)
    out = Path(args.out) if args.out else base
    out.mkdir(parents=True, exist_ok=True)
    write_summary(out / "summary.csv", summary)
    result = {"experiment": name, "version": __version__, "raw_bins": args.raw_bins, "analysis": analysis}
    old = out / "result.json"
    if old.is_file():
        result["simulation"] = json.loads(old.read_text()).get("simulation", {})
    write_json(out / "result.json", result)
    print(json.dumps(_clean(headline(name, analysis)), sort_keys=True))
    return 0


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    res = experiments.calibrate_phase_noise(cfg, target_tau=args.tau_us * 1e-6, model=args.model,
                                            n_shots=args.cal_shots)
    print(json.dumps(res, sort_keys=True))
    if args.write_config:
        pn = "noise.phase_noise."
        cfg = cfg.replace(**{pn + "model": res["model"], pn + res["key"]: res["value"],
                             pn + "drive_scale": res["drive_scale"]})
        dump_config(cfg, args.write_config)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rydbell", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config (default: the shipped experimental parameters)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--shots", type=int, help="shots per scan point")
    common.add_argument("--no-blowaway", action="store_true", help="disable the state-selective blow-away")

    helps = {
        "rabi-ground": "Raman Rabi flop on both atoms",
        "ramsey-ground": "ground-qubit Ramsey and spin-echo visibility decay",
        "rabi-rydberg": "single-atom ground-Rydberg Rabi flop",
        "ramsey-rydberg": "ground-Rydberg Ramsey fringes versus detuning",
        "blockade": "single-atom versus blockaded pair Rydberg flops",
        "bell": "Bell-state preparation, parity scan and fidelity",
    }
    for name in experiments.EXPERIMENTS:
        p = sub.add_parser(name, parents=[common], help=helps[name])
        p.add_argument("--out", type=Path, default=Path("out") / name, help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker threads per scan point")
        p.add_argument("--raw-bins", action="store_true",
                       help="read P|00>, P|11> from the theta = 0, pi bins instead of the fitted curve")
        if name == "blockade":
            p.add_argument("--mode", choices=("single", "pair", "both"), default="both")
        p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("analyze", help="re-run the analysis on a saved shot file")
    p.add_argument("shots_file", help="shots.csv or the directory holding it")
    p.add_argument("--experiment", choices=experiments.EXPERIMENTS)
    p.add_argument("--config", type=Path, help="config (default: effective_config.json beside the shots)")
    p.add_argument("--out", type=Path, help="output directory (default: beside the shots)")
    p.add_argument("--raw-bins", action="store_true")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("calibrate", parents=[common], help="tune phase noise to a single-atom damping time")
    p.add_argument("--tau-us", type=float, default=3.2)
    p.add_argument("--model", choices=("white_frequency", "servo_bump"))
    p.add_argument("--cal-shots", type=int, default=300)
    p.add_argument("--write-config", type=Path, help="write the calibrated config here")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
