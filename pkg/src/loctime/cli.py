"""Command-line entry point: ``loctime {run, verify-all, calibrate, report}``.

Exit codes: 0 all gating checks pass, 1 some check failed, 2 usage or
configuration error (nothing is simulated in that case).
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
import time
from importlib import resources
from pathlib import Path as FsPath

from . import calibration
from .harness import run_experiment
from .report import ConfigError, ExperimentConfig, ExperimentReport

__all__ = ["load_config", "main"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SEED_ENV = "LOCTIME_SEED"

log = logging.getLogger("loctime")


class UsageError(Exception):
    pass


def _read_ini(path) -> configparser.ConfigParser:
    path = FsPath(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: malformed config ({exc.message if hasattr(exc, 'message') else exc})") from None
    if not cp.has_section("experiment"):
        raise ConfigError(f"{path}: missing [experiment] section")
    return cp


def load_config(path, overrides=(), quick: bool = False) -> tuple[ExperimentConfig, list[str]]:
    """Parse an INI config, apply ``[quick]`` values if asked, then the
    ``LOCTIME_SEED`` environment variable, then ``key=value`` overrides."""
    cp = _read_ini(path)
    values = dict(cp.items("experiment"))
    tol = dict(cp.items("tolerance")) if cp.has_section("tolerance") else {}
    applied: list[str] = []
    if quick and cp.has_section("quick"):
        for k, v in cp.items("quick"):
            if k.startswith("tolerance."):
                tol[k.split(".", 1)[1]] = v
            else:
                values[k] = v
            applied.append(f"{k}={v} (quick)")
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        values["base_seed"] = env_seed
        applied.append(f"base_seed={env_seed} ({SEED_ENV})")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        k, v = (s.strip() for s in item.split("=", 1))
        if k.startswith("tolerance."):
            tol[k.split(".", 1)[1]] = v
        else:
            values[k] = v
        applied.append(f"{k}={v}")
    return ExperimentConfig.from_mapping(values, tol), applied


def golden_config_dir() -> FsPath:
    return FsPath(str(resources.files("loctime") / "data" / "configs"))


# ---- subcommands ----------------------------------------------------------------


def cmd_run(args) -> int:
    cfg, applied = load_config(args.config, args.override)
    report = run_experiment(cfg, threads=args.threads, overrides=applied)
    stem = FsPath(args.config).stem
    j, c = report.write(args.output_dir, stem)
    for line in report.summary_lines():
        print(line)
    print(f"wrote {j} and {c}")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_verify_all(args) -> int:
    cfg_dir = FsPath(args.config_dir) if args.config_dir else golden_config_dir()
    paths = sorted(cfg_dir.glob("*.cfg"))
    if not paths:
        raise UsageError(f"no *.cfg files in {cfg_dir}")
    # validate everything before simulating anything
    configs = [(p, *load_config(p, args.override, quick=args.quick)) for p in paths]
    rows, all_ok = [], True
    t0 = time.perf_counter()
    for p, cfg, applied in configs:
        report = run_experiment(cfg, threads=args.threads, overrides=applied)
        report.write(args.output_dir, p.stem)
        all_ok &= report.passed
        for c in report.checks:
            rows.append((c.anchor, p.stem, c.name, "" if c.h is None else f"{c.h:g}", c.status, c.estimate, c.oracle))
        if report.degraded:
            rows.append(("harness.grid_retry", p.stem, "degraded", "", "FAIL", report.retry_rate, 0.01))
        print(f"{p.stem}: {'PASS' if report.passed else 'FAIL'} ({report.wall_time:.1f}s)", flush=True)
    print()
    print(f"{'status':6s} {'anchor':40s} {'experiment':18s} {'check':44s} {'h':>6s} {'estimate':>12s} {'oracle':>12s}")
    for anchor, exp, name, h, status, est, orc in sorted(rows, key=lambda r: (r[0], r[1])):
        print(f"{status:6s} {anchor:40s} {exp:18s} {name:44s} {h:>6s} {est:12.6g} {orc:12.6g}")
    n_fail = sum(r[4] == "FAIL" for r in rows)
    print(f"\n{n_fail} failing check(s); total {time.perf_counter() - t0:.0f}s"
          + ("  [quick mode: reduced sizes, looser gates]" if args.quick else ""))
    return EXIT_OK if all_ok else EXIT_FAIL


def cmd_calibrate(args) -> int:
    target = FsPath(args.output_dir) / "calibration.txt" if args.output_dir else calibration.default_calibration_path()
    if target.exists() and not args.force:
        print(f"{target} exists; nothing to do (use --force to refit)")
        return EXIT_OK
    consts = calibration.fit_constants()
    calibration.write_calibration(target, consts)
    for k, v in consts.items():
        print(f"{k} = {v:.6g}")
    print(f"wrote {target}")
    return EXIT_OK


def cmd_report(args) -> int:
    ok = True
    for p in args.reports:
        try:
            report = ExperimentReport.from_json(FsPath(p).read_text())
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"cannot read report {p}: {exc}") from None
        print(f"== {p}: {report.config.experiment_kind} {'PASS' if report.passed else 'FAIL'}")
        for line in report.summary_lines():
            print(line)
        ok &= report.passed
    return EXIT_OK if ok else EXIT_FAIL


# ---- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="loctime", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required: bool):
        if config_required:
            p.add_argument("--config", required=True, help="INI experiment config")
        p.add_argument("--output-dir", default="reports", help="where JSON/CSV reports go")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field (repeatable)")
        p.add_argument("--threads", type=int, default=0, help="worker threads, 0 = all cores")

    p = sub.add_parser("run", help="run one experiment")
    common(p, True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify-all", help="run every golden acceptance experiment")
    common(p, False)
    p.add_argument("--quick", action="store_true", help="reduced sizes and looser gates")
    p.add_argument("--config-dir", help="directory of *.cfg files (default: bundled golden configs)")
    p.set_defaults(func=cmd_verify_all)

    p = sub.add_parser("calibrate", help="fit and freeze the bound constants")
    p.add_argument("--output-dir", help="write calibration.txt here instead of the package data file")
    p.add_argument("--force", action="store_true", help="refit even if the file exists")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("report", help="summarize saved JSON reports")
    p.add_argument("reports", nargs="+")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "threads", 0) < 0:
        print("error: --threads must be >= 0", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
