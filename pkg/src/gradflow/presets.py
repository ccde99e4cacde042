"""Named validation scenarios with fixed discretizations and pass/fail checks.

Each preset builds one or more run configurations, advances them, compares the
results with analytic references or with each other, and returns a
:class:`PresetReport`.  When an output directory is given, snapshots,
manifests, tables and figures are written below ``out_dir / preset_name``.
"""
from __future__ import annotations

import copy
import json
import time as _time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.stats import theilslopes

from . import io, plotting
from .config import RunConfig, parse_config, to_evolution
from .grid import GridSpec
from .jko import RunManifest, Snapshot, StepRecord, run_evolution
from .validation import (BarenblattParams, barenblatt_value, convergence_order, error_norms,
                         front_position, front_speed, heat_kernel_value)

Progress = Callable[[str, StepRecord], None]

L1_BOUND = 5e-2
SLOPE_RANGE = (0.8, 1.2)
SPEED_RANGE = (0.9, 1.1)
AGREEMENT_BOUND = 1e-3
ITER_RATIO_RANGE = (0.5, 2.0)
ENTROPY_SLACK = 10.0  # multiples of the solver tolerance


@dataclass(frozen=True)
class Check:
    """One scalar compared against a closed interval (``None`` = unbounded side)."""

    name: str
    value: float
    lower: float | None = None
    upper: float | None = None

    @property
    def passed(self) -> bool:
        v = self.value
        if not np.isfinite(v):
            return False
        return ((self.lower is None or v >= self.lower)
                and (self.upper is None or v <= self.upper))


@dataclass
class RunResult:
    label: str
    config: RunConfig
    grid: GridSpec
    snapshots: list[Snapshot]
    manifest: RunManifest


@dataclass
class PresetReport:
    name: str
    checks: list[Check] = field(default_factory=list)
    tables: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)
    runs: dict[str, RunResult] = field(default_factory=dict)
    figures: list[Path] = field(default_factory=list)
    notes: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    build: Callable[["_Context"], None]


# ---------------------------------------------------------------------------
# configuration helpers


def _scheme(**kw) -> dict:
    base = {"tol": 1e-6, "tol_feas": 1e-2, "max_iter": 200_000}
    base.update(kw)
    return base


def _grid1d(a: float, b: float, dx: float) -> dict:
    return {"d": 1, "a": [a], "b": [b], "n": [int(round((b - a) / dx))]}


def _plap_config(m: float, grid: dict, schedule, T: float, initial: dict, scheme: dict,
                 snapshots=()) -> dict:
    p = 3.0
    return {
        "grid": grid,
        "cost": {"variant": "power", "q": p / (p - 1.0)},
        "energy": {"variant": "m_p", "m_p": {"m": m, "p": p}},
        "scheme": scheme,
        "time": {"T": T, "schedule": [list(s) for s in schedule], "snapshots": list(snapshots)},
        "initial": initial,
    }


def _barenblatt_config(m: float, half_width: float, dx: float, dt: float, t0: float,
                       elapsed: float, scheme: dict, snapshots=()) -> dict:
    initial = {"family": "barenblatt", "params": {"m": m, "p": 3.0, "t0": t0}, "renormalize": True}
    return _plap_config(m, _grid1d(-half_width, half_width, dx), [(elapsed, dt)], elapsed,
                        initial, scheme, snapshots)


def _relativistic_config(alpha: float, k: float, grid: dict, dt: float, T: float,
                         initial: dict, scheme: dict, snapshots=()) -> dict:
    return {
        "grid": grid,
        "cost": {"variant": "relativistic", "alpha": alpha, "k": k},
        "energy": {"variant": "entropy"},
        "scheme": scheme,
        "time": {"T": T, "schedule": [[T, dt]], "snapshots": list(snapshots)},
        "initial": initial,
    }


def _with_scheme(cfg: dict, **kw) -> dict:
    out = copy.deepcopy(cfg)
    out["scheme"].update(kw)
    return out


# ---------------------------------------------------------------------------
# running and generic checks


class _Context:
    def __init__(self, report: PresetReport, out_dir: Path | None, seed: int,
                 progress: Progress | None):
        self.report = report
        self.out_dir = out_dir
        self.seed = seed
        self.progress = progress

    def run(self, label: str, data: dict) -> RunResult:
        cfg = parse_config(data)
        evo = to_evolution(cfg, self.seed)
        cb = None if self.progress is None else (lambda rec: self.progress(label, rec))
        snaps, man = run_evolution(evo, progress=cb, config_echo=cfg.echo())
        res = RunResult(label, cfg, evo.grid, snaps, man)
        self.report.runs[label] = res
        self.report.checks.extend(decay_checks(label, res))
        unconverged = [r.step for r in man.records if not r.converged]
        self.report.notes[f"{label}: unconverged steps"] = unconverged
        if man.notes.get("initial_renormalized"):
            self.report.notes[f"{label}: initial mass before renormalization"] = \
                man.notes["initial_raw_mass"]
        if self.out_dir is not None:
            io.write_run(self.out_dir / label, evo.grid, snaps, man, cfg.echo(),
                         cfg.output.precision)
        return res

    def figure(self, fn, name: str, *args, **kw):
        if self.out_dir is not None:
            self.report.figures.append(fn(self.out_dir / name, *args, **kw))

    def table(self, name: str, header: list[str], rows: list[list]):
        self.report.tables[name] = (header, rows)


def decay_checks(label: str, run: RunResult) -> list[Check]:
    """Entropy monotonicity and per-step mass drift for one run."""
    man, sch = run.manifest, run.config.scheme
    rises = np.diff(man.entropies)
    drift = np.abs(np.diff(man.masses))
    bounds = man.mass_bounds(run.grid, sch.tol_feas)
    ratio = float(np.max(drift / bounds)) if len(bounds) else 0.0
    return [
        Check(f"{label}: max entropy increase", float(rises.max()) if rises.size else 0.0,
              None, ENTROPY_SLACK * sch.tol),
        Check(f"{label}: max mass drift / bound", ratio, None, 1.0),
    ]


def iteration_trend(iterations) -> float:
    """Theil-Sen slope of ``log(iterations)`` against step index."""
    it = np.asarray(iterations, dtype=float)
    if it.size < 2:
        return 0.0
    slope, *_ = theilslopes(np.log(np.maximum(it, 1.0)), np.arange(it.size))
    return float(slope)


def agreement_checks(report: PresetReport, a: RunResult, b: RunResult) -> None:
    """Final-density discrepancy and iteration-count trends of two runs."""
    diff = float(np.max(np.abs(a.snapshots[-1].rho - b.snapshots[-1].rho)))
    report.checks.append(Check(f"{a.label}/{b.label}: max density discrepancy", diff,
                               None, AGREEMENT_BOUND))
    ia, ib = a.manifest.iterations, b.manifest.iterations
    sa, sb = iteration_trend(ia), iteration_trend(ib)
    same = float(np.sign(sa) == np.sign(sb))
    report.checks.append(Check(f"{a.label}/{b.label}: same iteration trend", same, 1.0, None))
    ratio = float(np.median(ib / np.maximum(ia, 1)))
    report.checks.append(Check(f"{a.label}/{b.label}: median iteration ratio", ratio,
                               *ITER_RATIO_RANGE))
    report.notes[f"{a.label}/{b.label}: log-iteration trends"] = [sa, sb]


def _iteration_table(ctx: _Context, runs: list[RunResult]):
    header = ["step", "t"] + [f"iterations_{r.label}" for r in runs]
    recs = [r.manifest.records for r in runs]
    rows = [[i + 1, float(recs[0][i].time)] + [rr[i].iterations for rr in recs]
            for i in range(len(recs[0]))]
    ctx.table("iterations", header, rows)


def _energy_table(ctx: _Context, runs: list[RunResult]):
    header = ["t"] + [f"energy_{r.label}" for r in runs] + [f"mass_{r.label}" for r in runs]
    t = runs[0].manifest.times
    cols = [r.manifest.entropies for r in runs] + [r.manifest.masses for r in runs]
    ctx.table("energy", header, [[float(t[i])] + [float(c[i]) for c in cols] for i in range(len(t))])


def _standard_figures(ctx: _Context, runs: list[RunResult], title: str, exact=None):
    first = runs[0]
    ctx.figure(plotting.plot_profiles, "profiles.png", first.grid, first.snapshots,
               exact=exact, title=title)
    mans = {r.label: r.manifest for r in runs}
    ctx.figure(plotting.plot_entropy, "energy.png", mans, title=title)
    ctx.figure(plotting.plot_iterations, "iterations.png", mans, title=title)


# ---------------------------------------------------------------------------
# scenarios


def _barenblatt_case(ctx: _Context, m: float, half_width: float, dx: float, dt: float,
                     elapsed: float, scheme: dict, snapshots=(), separate: dict | None = None):
    t0 = 0.01
    data = _barenblatt_config(m, half_width, dx, dt, t0, elapsed, scheme, snapshots)
    runs = [ctx.run("joint", data)]
    if separate is not None:
        runs.append(ctx.run("separate", _with_scheme(data, formulation="separate", **separate)))
    bp = BarenblattParams(m, 3.0)
    x = runs[0].grid.axes[0]
    rows = []
    for r in runs:
        final = r.snapshots[-1]
        l1, l2, linf = error_norms(r.grid, final.rho, barenblatt_value(bp, t0 + final.time, x))
        rows.append([r.label, t0 + final.time, l1, l2, linf])
        ctx.report.checks.append(Check(f"{r.label}: relative L1 error at final time", l1,
                                       None, L1_BOUND))
    ctx.table("errors", ["run", "t", "rel_L1", "rel_L2", "rel_Linf"], rows)
    if separate is not None:
        agreement_checks(ctx.report, runs[0], runs[1])
    _iteration_table(ctx, runs)
    _energy_table(ctx, runs)
    _standard_figures(ctx, runs, f"m = {m}, p = 3",
                      exact=lambda t: barenblatt_value(bp, t0 + t, x))


def _plap_m05(ctx):
    _barenblatt_case(ctx, 0.5, 2.5, 0.04, 0.01, 0.1,
                     _scheme(lam=2.5, dual_init="energy"), snapshots=(0.05,))


def _plap_m1(ctx):
    _barenblatt_case(ctx, 1.0, 1.5, 0.02, 5e-4, 0.01,
                     _scheme(lam=9.5, dual_init="energy", max_iter=100_000),
                     snapshots=(0.005,),
                     separate={"rho_floor": 1e-4, "lipschitz_floor": 1e-2})


def _plap_m025(ctx):
    _barenblatt_case(ctx, 0.25, 2.75, 0.02, 0.01, 0.1,
                     _scheme(lam=3.0, dual_init="energy", max_iter=100_000), snapshots=(0.05,))


def _accuracy_dt(ctx):
    m, t0, elapsed = 0.5, 0.01, 0.16
    bp = BarenblattParams(m, 3.0)
    rows, runs = [], []
    for dt in (0.08, 0.04, 0.02, 0.01):
        data = _barenblatt_config(m, 2.5, 0.04, dt, t0, elapsed,
                                  _scheme(lam=2.5, dual_init="energy"))
        r = ctx.run(f"dt_{dt:g}", data)
        runs.append(r)
        x = r.grid.axes[0]
        l1 = error_norms(r.grid, r.snapshots[-1].rho, barenblatt_value(bp, t0 + elapsed, x))[0]
        rows.append([dt, l1])
    slope = convergence_order(rows)
    ctx.table("convergence", ["dt", "rel_L1"], rows)
    ctx.report.notes["fitted slope"] = slope
    ctx.report.checks.append(Check("fitted log-log slope", slope, *SLOPE_RANGE))
    ctx.figure(plotting.plot_convergence, "convergence.png", [r[0] for r in rows],
               [r[1] for r in rows], slope, title="m = 0.5, p = 3")
    _energy_table(ctx, runs[-1:])


def _heat_limit(ctx):
    t0, T = 0.01, 0.1
    data = _relativistic_config(
        1.0, 1e5, _grid1d(-1.5, 1.5, 0.04), 0.002, T,
        {"family": "gaussian", "params": {"t0": t0}, "renormalize": True},
        _scheme(lam=1.0, dual_init="energy", max_iter=100_000), snapshots=(0.02, 0.05))
    r = ctx.run("joint", data)
    x = r.grid.axes[0]
    final = r.snapshots[-1]
    l1, l2, linf = error_norms(r.grid, final.rho, heat_kernel_value(t0, final.time, x))
    ctx.table("errors", ["run", "t", "rel_L1", "rel_L2", "rel_Linf"],
              [["joint", final.time, l1, l2, linf]])
    ctx.report.checks.append(Check("joint: relative L1 error vs heat kernel", l1, None, L1_BOUND))
    _iteration_table(ctx, [r])
    _energy_table(ctx, [r])
    _standard_figures(ctx, [r], "alpha = 1, k = 1e5",
                      exact=lambda t: heat_kernel_value(t0, t, x))


def _tv_limit(ctx, threshold: float = 0.25):
    times = (0.05, 0.1, 0.15)
    data = _relativistic_config(
        1e7, 1.0, _grid1d(-1.0, 1.0, 0.01), 0.01, 0.2,
        {"family": "tanh", "params": {"t0": 0.001}},
        _scheme(lam=1.0, max_iter=100_000), snapshots=times)
    r = ctx.run("joint", data)
    ts = [s.time for s in r.snapshots]
    xs = [front_position(r.grid, s.rho, threshold) for s in r.snapshots]
    speed = front_speed(ts, xs)
    ctx.table("fronts", ["t", "front"], [[t, x] for t, x in zip(ts, xs)])
    ctx.report.notes["front threshold"] = threshold
    ctx.report.checks.append(Check("fitted front speed", speed, *SPEED_RANGE))
    ctx.figure(plotting.plot_fronts, "fronts.png", ts, xs, speed, title="alpha = 1e7, k = 1")
    _iteration_table(ctx, [r])
    _energy_table(ctx, [r])
    _standard_figures(ctx, [r], "alpha = 1e7, k = 1")


def _two_hump(ctx):
    data = _relativistic_config(
        1.0, 1.0, _grid1d(-1.0, 1.0, 0.01), 0.01, 0.3, {"family": "two_hump"},
        _scheme(lam=1.0, max_iter=100_000), snapshots=(0.1, 0.2))
    joint = ctx.run("joint", data)
    sep = ctx.run("separate", _with_scheme(data, formulation="separate", lipschitz_floor=0.1))
    agreement_checks(ctx.report, joint, sep)
    _iteration_table(ctx, [joint, sep])
    _energy_table(ctx, [joint, sep])
    _standard_figures(ctx, [joint, sep], "alpha = 1, k = 1, two humps")


def _two_bump(ctx, m: float, a: float, b: float, dx: float, schedule, T: float, scheme: dict,
              snapshots=()):
    initial = {"family": "two_bump",
               "params": {"m": m, "p": 3.0, "t0": 0.01, "centers": [0.0, 1.0],
                          "weights": [0.5, 0.5]},
               "renormalize": True}
    r = ctx.run("joint", _plap_config(m, _grid1d(a, b, dx), schedule, T, initial, scheme,
                                      snapshots))
    ctx.report.notes["two-bump normalization"] = (
        "equal-weight sum of unit-mass profiles centred at 0 and 1, rescaled to unit discrete mass")
    _iteration_table(ctx, [r])
    _energy_table(ctx, [r])
    _standard_figures(ctx, [r], f"two bumps, m = {m}, p = 3")


def _two_bump_m025(ctx):
    _two_bump(ctx, 0.25, -2.0, 3.0, 0.03, [(0.3, 0.01), (0.4, 0.05)], 0.4,
              _scheme(lam=3.0, dual_init="energy", max_iter=100_000), snapshots=(0.1, 0.3))


def _two_bump_m1(ctx):
    _two_bump(ctx, 1.0, -1.0, 2.0, 0.04, [(0.02, 0.001)], 0.02,
              _scheme(lam=9.5, dual_init="energy", max_iter=100_000), snapshots=(0.01,))


PRESETS: dict[str, Preset] = {p.name: p for p in [
    Preset("plap-m05-p3", "Barenblatt, m = 0.5, p = 3, dx = 0.04, dt = 0.01", _plap_m05),
    Preset("plap-m1-p3", "Barenblatt, m = 1, p = 3, dx = 0.02, dt = 5e-4, joint and separate",
           _plap_m1),
    Preset("plap-m025-p3", "Barenblatt, m = 0.25, p = 3, dx = 0.02, dt = 0.01", _plap_m025),
    Preset("accuracy-dt", "time-step refinement, m = 0.5, p = 3, dx = 0.04", _accuracy_dt),
    Preset("rel-heat-limit", "relativistic cost alpha = 1, k = 1e5 against the heat kernel",
           _heat_limit),
    Preset("tv-limit", "relativistic cost alpha = 1e7, k = 1, front speed", _tv_limit),
    Preset("rel-two-hump", "relativistic cost alpha = k = 1, two-hump datum, joint and separate",
           _two_hump),
    Preset("plap-two-bump-m025", "two Barenblatt bumps, m = 0.25, p = 3", _two_bump_m025),
    Preset("plap-two-bump-m1", "two Barenblatt bumps, m = 1, p = 3", _two_bump_m1),
]}


def run_preset(name: str, out_dir: str | Path | None = None, *, seed: int = 0,
               progress: Progress | None = None) -> PresetReport:
    """Run a named scenario; write its artifacts below ``out_dir / name`` if given."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    report = PresetReport(name)
    target = None
    if out_dir is not None:
        target = Path(out_dir) / name
        target.mkdir(parents=True, exist_ok=True)
    t = _time.perf_counter()
    PRESETS[name].build(_Context(report, target, seed, progress))
    report.wall_time = _time.perf_counter() - t
    if target is not None:
        write_report(target, report)
    return report


def checks_rows(report: PresetReport) -> list[list]:
    return [[c.name, c.value, "" if c.lower is None else c.lower,
             "" if c.upper is None else c.upper, "PASS" if c.passed else "FAIL"]
            for c in report.checks]


CHECK_HEADER = ["check", "value", "lower", "upper", "status"]


def write_report(target: Path, report: PresetReport) -> list[Path]:
    """Checks and tables as CSV files plus a JSON notes file."""
    written = [io.write_table(target / "checks.csv", CHECK_HEADER, checks_rows(report))]
    for name, (header, rows) in report.tables.items():
        written.append(io.write_table(target / f"{name}.csv", header, rows))
    notes = dict(report.notes, wall_time=report.wall_time, passed=report.passed)
    p = target / "notes.json"
    p.write_text(json.dumps(notes, indent=2, default=io.json_default) + "\n")
    written.append(p)
    return written
