"""Command-line entry point: ``gradflow run | validate | prox-check | report``.

Exit status: 0 on success, 1 when a check or threshold fails, 2 for usage
errors (missing or invalid config, unknown preset).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("gradflow")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
PROX_TOLERANCE = 1e-6


def _configure_threads() -> None:
    """Honour ``GRADFLOW_THREADS`` (0 or unset = library default)."""
    raw = os.environ.get("GRADFLOW_THREADS", "").strip()
    if not raw:
        return
    try:
        n = int(raw)
    except ValueError:
        raise SystemExit(f"GRADFLOW_THREADS must be an integer, got {raw!r}")
    if n > 0:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _emit(rows, header=None, out=None) -> None:
    w = csv.writer(out or sys.stdout, lineterminator="\n")
    if header is not None:
        w.writerow(header)
    for row in rows:
        w.writerow([format(v, ".10g") if isinstance(v, (float, np.floating)) else v for v in row])


def _progress(label, rec):
    log.info("%s step %d t=%.6g iterations=%d converged=%s energy=%.10g mass=%.12g",
             label, rec.step, rec.time, rec.iterations, rec.converged, rec.entropy, rec.mass)


# ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    from . import io
    from .config import ConfigError, load_config, to_evolution
    from .jko import run_evolution

    try:
        cfg = load_config(args.config)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    evo = to_evolution(cfg, args.seed)
    out = Path(args.out or cfg.output.dir)
    snaps, man = run_evolution(evo, progress=lambda r: _progress("run", r), config_echo=cfg.echo())
    io.write_run(out, evo.grid, snaps, man, cfg.echo(), cfg.output.precision)
    rows = [[r.step, r.time, r.iterations, int(r.converged), r.entropy, r.mass] for r in man.records]
    _emit(rows, ["step", "t", "iterations", "converged", "energy", "mass"])
    unconverged = sum(not r.converged for r in man.records)
    if unconverged:
        print(f"warning: {unconverged} step(s) hit max_iter", file=sys.stderr)
    print(f"wrote {len(snaps)} snapshot(s) to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args) -> int:
    from .presets import CHECK_HEADER, PRESETS, checks_rows, run_preset

    if args.list:
        _emit([[p.name, p.description] for p in PRESETS.values()], ["preset", "description"])
        return EXIT_OK
    if args.preset is None:
        print("error: a preset name is required; available: " + ", ".join(PRESETS),
              file=sys.stderr)
        return EXIT_USAGE
    if args.preset not in PRESETS:
        print(f"error: unknown preset {args.preset!r}; available: " + ", ".join(PRESETS),
              file=sys.stderr)
        return EXIT_USAGE
    report = run_preset(args.preset, args.out, seed=args.seed, progress=_progress)
    _emit(checks_rows(report), CHECK_HEADER)
    for name, (header, rows) in report.tables.items():
        print(f"# table {name}")
        _emit(rows, header)
    print(f"# {report.name}: {'PASS' if report.passed else 'FAIL'} ({report.wall_time:.1f} s)")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_prox_check(args) -> int:
    from .oracles import oracle_suite

    if args.samples < 0:
        print("error: --samples must be nonnegative", file=sys.stderr)
        return EXIT_USAGE
    results = oracle_suite(args.samples, args.seed)
    rows = [[label, dev, "PASS" if dev <= PROX_TOLERANCE else "FAIL"] for label, dev in results]
    _emit(rows, ["pair", "max_deviation", "status"])
    return EXIT_OK if all(dev <= PROX_TOLERANCE for _, dev in results) else EXIT_FAIL


def _report_one(run_dir: Path, out: Path) -> list[list]:
    from . import io, plotting
    from .config import parse_config
    from .grid import GridSpec

    snaps, man = io.read_run(run_dir)
    cfg_path = run_dir / "config.json"
    if cfg_path.is_file():
        g = parse_config(json.loads(cfg_path.read_text())).grid
        grid = GridSpec(tuple(g.a), tuple(g.b), tuple(g.n))
    else:
        coords, _, _ = io.read_snapshot(next(run_dir.glob("rho_*.csv")))
        x = coords[:, 0]
        grid = GridSpec((x[0],), (x[-1],), (x.size - 1,))
    out.mkdir(parents=True, exist_ok=True)
    title = run_dir.name
    if grid.d == 1 and snaps:
        plotting.plot_profiles(out / "profiles.png", grid, snaps, title=title)
    plotting.plot_entropy(out / "energy.png", {title: man}, title=title)
    plotting.plot_iterations(out / "iterations.png", {title: man}, title=title)
    rows = [[r.step, r.time, r.dt, r.iterations, int(r.converged), r.entropy, r.mass,
             r.feasibility] for r in man.records]
    io.write_table(out / "summary.csv", REPORT_HEADER, rows)
    return rows


REPORT_HEADER = ["step", "t", "dt", "iterations", "converged", "energy", "mass", "feasibility"]


def cmd_report(args) -> int:
    root = Path(args.run_dir)
    if not root.is_dir():
        print(f"error: run directory not found: {root}", file=sys.stderr)
        return EXIT_USAGE
    dirs = [root] if (root / "manifest.json").is_file() else sorted(
        p.parent for p in root.glob("*/manifest.json"))
    if not dirs:
        print(f"error: no manifest.json in {root} or its subdirectories", file=sys.stderr)
        return EXIT_USAGE
    out_root = Path(args.out) if args.out else None
    for d in dirs:
        out = d if out_root is None else (out_root if d == root else out_root / d.name)
        rows = _report_one(d, out)
        print(f"# run {d}")
        _emit(rows, REPORT_HEADER)
    checks = root / "checks.csv"
    if checks.is_file():
        print("# checks")
        sys.stdout.write(checks.read_text())
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gradflow",
                                 description="Generalized JKO gradient-flow solver.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log every implicit step")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for all randomness (default 0)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run a configuration file (YAML or JSON)")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (default: output.dir from the config)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", parents=[common], help="run a named validation preset")
    p.add_argument("preset", nargs="?")
    p.add_argument("--out", help="directory for snapshots, tables and figures")
    p.add_argument("--list", action="store_true", help="list presets and exit")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("prox-check", parents=[common], help="compare prox maps against the brute-force oracle")
    p.add_argument("--samples", type=int, default=1000)
    p.set_defaults(func=cmd_prox_check)

    p = sub.add_parser("report", parents=[common], help="tables and figures from a run or preset directory")
    p.add_argument("run_dir")
    p.add_argument("--out", help="write figures here instead of next to the data")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    _configure_threads()
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
