"""Outer time loop: repeated implicit steps with diagnostics and snapshots."""
from __future__ import annotations

import time as _time
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable

import numpy as np

from .costs import CostSpec
from .energies import discrete_energy
from .grid import GridSpec, build_constraint, estimate_operator_norm
from .pd import PDConfig, PDState, solve_jko_step
from .validation import BarenblattParams, barenblatt_value, heat_kernel_value

_TIME_EPS = 1e-9


@dataclass(frozen=True)
class InitialCondition:
    """Named initial datum with parameters.

    Families: ``constant`` (value), ``gaussian`` (t0, center), ``tanh`` (t0,
    half_width, sharpness, height, floor), ``barenblatt`` (m, p, t0, center),
    ``two_bump`` (m, p, t0, centers, weights), ``two_hump``.
    """

    family: str
    params: dict = field(default_factory=dict)
    renormalize: bool = False


def _two_hump(x):
    inner = np.where(np.abs(x) <= 0.5, np.sqrt(np.maximum(0.5 - np.abs(x), 0.0)), 0.0)
    return 0.25 * (np.abs(x) <= 1.0) + 3.0 / (2.0 * np.sqrt(2.0)) * inner


def initial_condition(ic: InitialCondition, grid: GridSpec) -> np.ndarray:
    """Nodal values of the datum, optionally rescaled to unit trapezoid mass."""
    prm = dict(ic.params)
    x = grid.coords if grid.d > 1 else grid.axes[0]
    fam = ic.family
    if fam == "constant":
        rho = np.full(grid.shape, float(prm.get("value", 1.0)))
    elif fam == "gaussian":
        _need_1d(grid, fam)
        rho = heat_kernel_value(float(prm["t0"]), 0.0, x - float(prm.get("center", 0.0)))
    elif fam == "tanh":
        _need_1d(grid, fam)
        t0 = float(prm.get("t0", 0.0))
        w = float(prm.get("half_width", 0.2)) + t0
        k = float(prm.get("sharpness", 30.0))
        rho = (float(prm.get("height", 0.499)) * (np.tanh(k * (x + w)) - np.tanh(k * (x - w)))
               + float(prm.get("floor", 1e-5)))
    elif fam == "barenblatt":
        bp = BarenblattParams(float(prm["m"]), float(prm["p"]), grid.d)
        c = np.asarray(prm.get("center", 0.0), dtype=float)
        rho = barenblatt_value(bp, float(prm["t0"]), x - c)
    elif fam == "two_bump":
        _need_1d(grid, fam)
        bp = BarenblattParams(float(prm["m"]), float(prm["p"]))
        centers = prm.get("centers", [0.0, 1.0])
        weights = prm.get("weights", [0.5] * len(centers))
        rho = sum(float(w) * barenblatt_value(bp, float(prm["t0"]), x - float(c))
                  for c, w in zip(centers, weights))
    elif fam == "two_hump":
        _need_1d(grid, fam)
        rho = _two_hump(x)
    else:
        raise ValueError(f"unknown initial condition family {fam!r}")
    rho = np.asarray(rho, dtype=float).reshape(grid.shape)
    if ic.renormalize:
        mass = grid.mass(rho)
        if not mass > 0:
            raise ValueError("initial datum has no mass to renormalize")
        rho = rho / mass
    return rho


def _need_1d(grid, fam):
    if grid.d != 1:
        raise ValueError(f"initial condition {fam!r} is defined in 1D only")


@dataclass(frozen=True)
class EvolutionConfig:
    """Everything :func:`run_evolution` needs.

    ``schedule`` is a list of ``(until_time, dt)`` pairs covering ``[0, T]``;
    times are measured from the initial datum.  ``snapshots`` must fall on step
    times; ``0`` and ``T`` are always recorded.
    """

    grid: GridSpec
    cost: CostSpec
    energy: Any
    initial: InitialCondition
    T: float
    schedule: tuple[tuple[float, float], ...]
    pd: PDConfig = field(default_factory=PDConfig)
    snapshots: tuple[float, ...] = ()
    delta: float | None = None
    boundary_continuity: bool = True
    compare_cold: bool = False

    def step_times(self) -> np.ndarray:
        if not self.T > 0:
            raise ValueError("T must be positive")
        sched = sorted((float(u), float(d)) for u, d in self.schedule)
        if not sched:
            raise ValueError("empty time-step schedule")
        if any(d <= 0 for _, d in sched):
            raise ValueError("time steps must be positive")
        if sched[-1][0] < self.T - _TIME_EPS:
            raise ValueError(f"schedule ends at {sched[-1][0]} before T = {self.T}")
        times = [0.0]
        # count steps per segment to avoid accumulating roundoff
        start = 0.0
        for until, dt in sched:
            end = min(until, self.T)
            if end <= start + _TIME_EPS:
                continue
            k = (end - start) / dt
            nk = int(round(k))
            if abs(k - nk) > 1e-6:
                raise ValueError(f"segment [{start}, {end}] is not a multiple of dt = {dt}")
            times.extend(start + dt * np.arange(1, nk + 1))
            start = end
            if start >= self.T - _TIME_EPS:
                break
        return np.asarray(times)

    def snapshot_steps(self, times: np.ndarray) -> list[int]:
        idx = {0, len(times) - 1}
        for s in self.snapshots:
            j = int(np.argmin(np.abs(times - s)))
            if abs(times[j] - s) > _TIME_EPS:
                raise ValueError(f"snapshot time {s} is not a step time")
            idx.add(j)
        return sorted(idx)


@dataclass
class StepRecord:
    step: int
    time: float
    dt: float
    iterations: int
    converged: bool
    entropy: float
    mass: float
    residual: float
    feasibility: float
    delta: float
    objective: float
    iterations_cold: int | None = None


@dataclass
class Snapshot:
    step: int
    time: float
    rho: np.ndarray
    mom: np.ndarray


@dataclass
class RunManifest:
    records: list[StepRecord] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    initial_entropy: float = 0.0
    initial_mass: float = 0.0
    wall_time: float = 0.0
    notes: dict = field(default_factory=dict)

    @property
    def entropies(self) -> np.ndarray:
        return np.array([self.initial_entropy] + [r.entropy for r in self.records])

    @property
    def masses(self) -> np.ndarray:
        return np.array([self.initial_mass] + [r.mass for r in self.records])

    @property
    def iterations(self) -> np.ndarray:
        return np.array([r.iterations for r in self.records])

    @property
    def times(self) -> np.ndarray:
        return np.array([0.0] + [r.time for r in self.records])

    def mass_bounds(self, grid: GridSpec, tol_feas: float) -> np.ndarray:
        """Per-step bound on the trapezoid mass change implied by the ball radius."""
        w = np.asarray(grid.trapezoid_weights).ravel()
        # weighting the continuity rows by w cancels the divergences, so
        # h w . (rho - rho_prev) = h w' . (A u - b) with |w'| = |w|
        wn = np.sqrt(np.sum(w ** 2))
        return np.array([grid.h * wn * r.delta * (1.0 + tol_feas) for r in self.records])

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        return cls(records=[StepRecord(**r) for r in data.get("records", [])],
                   config=data.get("config", {}),
                   initial_entropy=float(data.get("initial_entropy", 0.0)),
                   initial_mass=float(data.get("initial_mass", 0.0)),
                   wall_time=float(data.get("wall_time", 0.0)), notes=data.get("notes", {}))

    def to_dict(self) -> dict:
        return {
            "records": [asdict(r) for r in self.records],
            "config": self.config,
            "initial_entropy": self.initial_entropy,
            "initial_mass": self.initial_mass,
            "wall_time": self.wall_time,
            "notes": self.notes,
        }


def run_evolution(cfg: EvolutionConfig, *, progress: Callable[[StepRecord], None] | None = None,
                  config_echo: dict | None = None) -> tuple[list[Snapshot], RunManifest]:
    """Advance the initial datum through the schedule, one implicit step at a time."""
    grid = cfg.grid
    times = cfg.step_times()
    snap_idx = set(cfg.snapshot_steps(times))
    rho = initial_condition(cfg.initial, grid)
    if np.any(rho < 0) or not grid.mass(rho) > 0:
        raise ValueError("initial density must be nonnegative with positive mass")
    manifest = RunManifest(config=config_echo or {},
                           initial_entropy=discrete_energy(grid, cfg.energy, rho),
                           initial_mass=grid.mass(rho))
    if cfg.initial.renormalize:
        raw = initial_condition(replace(cfg.initial, renormalize=False), grid)
        manifest.notes["initial_renormalized"] = True
        manifest.notes["initial_raw_mass"] = grid.mass(raw)
    zero_mom = np.zeros((grid.d,) + grid.shape)
    snaps = [Snapshot(0, 0.0, rho.copy(), zero_mom)]
    state: PDState | None = None
    norms: dict[float, float] = {}
    t_start = _time.perf_counter()
    for k in range(1, len(times)):
        dt = float(times[k] - times[k - 1])
        key = round(dt, 12)
        if key not in norms:
            probe = build_constraint(grid, dt, rho, cfg.delta,
                                     boundary_continuity=cfg.boundary_continuity)
            norms[key] = estimate_operator_norm(probe, iters=cfg.pd.norm_iters, seed=cfg.pd.seed)
        try:
            res = solve_jko_step(rho, cfg.pd, grid, cfg.cost, cfg.energy, dt, cfg.delta,
                                 state=state, boundary_continuity=cfg.boundary_continuity,
                                 norm=norms[key])
            cold_iters = None
            if cfg.compare_cold:
                cold_cfg = replace(cfg.pd, warm_start=False)
                cold = solve_jko_step(rho, cold_cfg, grid, cfg.cost, cfg.energy, dt, cfg.delta,
                                      boundary_continuity=cfg.boundary_continuity,
                                      norm=norms[key])
                cold_iters = cold.stats.iterations
        except Exception as exc:  # annotate and re-raise
            raise RuntimeError(f"step {k} (t = {times[k]:.6g}) failed: {exc}") from exc
        state = res.state
        rho = np.maximum(res.rho, 0.0)
        st = res.stats
        delta = st.residual - st.feasibility
        rec = StepRecord(k, float(times[k]), dt, st.iterations, st.converged,
                         discrete_energy(grid, cfg.energy, rho), grid.mass(rho),
                         st.residual, st.feasibility, delta, st.objective, cold_iters)
        manifest.records.append(rec)
        if progress is not None:
            progress(rec)
        if k in snap_idx:
            snaps.append(Snapshot(k, float(times[k]), rho.copy(), res.mom.copy()))
    manifest.wall_time = _time.perf_counter() - t_start
    return snaps, manifest
