"""Command-line scenario runner: ``pullback-lab run|study|catalog``."""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import report as rp
from .config import SUITES, catalog_hash, catalog_listing, load_scenario
from .errors import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_FAIL = 0, 1, 2


def _u64(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _levels(text):
    v = int(text)
    if not 2 <= v <= 4:
        raise argparse.ArgumentTypeError("levels must be between 2 and 4")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="pullback-lab", description="Run numerical verification scenarios.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="scenario TOML file")
        sp.add_argument("--out", default="reports", help="output directory (default: reports)")
        sp.add_argument("--seed", type=_u64, default=None, help="override the scenario seed")
        sp.add_argument("--tol-scale", type=_positive, default=1.0, help="multiply all tolerances")

    common(sub.add_parser("run", help="run a scenario and write its report"))
    st = sub.add_parser("study", help="convergence study over N refinement levels")
    common(st)
    st.add_argument("--levels", type=_levels, default=3)
    cat = sub.add_parser("catalog", help="inspect catalogs")
    cat.add_argument("action", choices=["list"])
    return p


def execute(config, out, seed=None, tol_scale=1.0, levels=None, stream=sys.stdout):
    """Run a scenario; returns (exit code, report or None)."""
    from .suites import SUITE_FUNCS
    try:
        scn = load_scenario(config, seed=seed, tol_scale=tol_scale)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    if levels is not None:
        scn.levels = levels
    checks, timings = [], {}
    for name in SUITES:
        if name not in scn.suites:
            continue
        t0 = time.perf_counter()
        got = SUITE_FUNCS[name](scn)
        timings[name] = time.perf_counter() - t0
        checks.extend(got)
    report = rp.build_report(scn, checks, tol_scale, catalog_hash())
    rp.validate(report)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    stem = scn.name
    (out / f"{stem}.json").write_text(rp.dumps(report), encoding="utf-8")
    (out / f"{stem}_convergence.csv").write_text(rp.convergence_csv(report), encoding="utf-8")
    # wall times vary run to run, so they live outside the byte-stable report
    (out / f"{stem}_timings.json").write_text(json.dumps({k: round(v, 3) for k, v in timings.items()},
                                                         indent=2) + "\n", encoding="utf-8")
    for c in report["checks"]:
        order = "" if c["order"] is None else f"  order {c['order']:.2f}"
        val = c["value"]
        val = f"{val:.3e}" if isinstance(val, float) else str(val)
        print(f"[{c['status'].upper():7}] {c['suite']}/{c['name']}: {val}{order}", file=stream)
    s = report["summary"]
    print(f"{s['passed']} passed, {s['failed']} failed, {s['errors']} errors, {s['skipped']} skipped"
          f" -> {out / (stem + '.json')}", file=stream)
    return (EXIT_OK if s["all_passed"] else EXIT_FAIL), report


def _print_study(report, stream):
    print("suite,check,level,parameter,residual", file=stream)
    for c in report["checks"]:
        for lv in c["levels"]:
            print(f"{c['suite']},{c['name']},{lv['level']},{lv['parameter']!r},{lv['residual']!r}", file=stream)
        if c["levels"]:
            slope = "floor-limited" if c["order_status"] == "floor-limited" else c["order"]
            print(f"# {c['suite']}/{c['name']} slope: {slope}", file=stream)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "catalog":
        listing = catalog_listing()
        for section in ("manifolds", "maps"):
            print(f"{section}:")
            for k, v in listing[section].items():
                print(f"  {k:15} {v}")
        print("suites:")
        for s in listing["suites"]:
            print(f"  {s}")
        return EXIT_OK
    levels = args.levels if args.command == "study" else None
    code, report = execute(args.config, args.out, args.seed, args.tol_scale, levels)
    if args.command == "study" and report is not None:
        _print_study(report, sys.stdout)
    return code


if __name__ == "__main__":
    sys.exit(main())
