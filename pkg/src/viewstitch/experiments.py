"""Benchmark setups and the ablation grid driver.

``build_setup`` wires a trajectory to an aligned world, window schedules
(with and without loop closing), a noise schedule, and the exact denoiser;
``run_sampler`` dispatches to one of the three samplers; ``run_grid``
expands a cell grid deterministically, runs every (cell, seed) pair, and
emits one CSV row per run.
"""

from __future__ import annotations

import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .baselines import ArConfig, StochSyncConfig, ar_sample, stochsync_sample
from .errors import ConfigurationError
from .guidance import GuidanceConfig
from .metrics import MetricReport, compute_report
from .schedule import NoiseSchedule, build_schedule
from .stitching import StitchConfig, stitch_sample
from .trajectories import Trajectory, generate_trajectory
from .windows import WindowSchedule, compile_windows, partition
from .world import OracleDenoiser, World, world_for_trajectory

log = logging.getLogger(__name__)

SAMPLERS = ("gvs", "ar", "stochsync")

# Trajectories whose conditioning paths revisit scene regions and therefore
# run with the loop-closing machinery by default.
LOOP_TRAJECTORIES = (
    "panorama_1loop", "panorama_2loop", "circle_1loop", "circle_2loop",
    "staircase_circuit", "impossible_staircase", "forward_orbit_backward",
)


@dataclass
class Setup:
    traj: Trajectory
    world: World
    noise_schedule: NoiseSchedule
    denoiser: OracleDenoiser
    windows_loop: WindowSchedule        # temporal + spatial windows
    windows_plain: WindowSchedule       # temporal only
    chunk_size: int
    overlap: int

    def windows(self, loop_closing: bool) -> WindowSchedule:
        return self.windows_loop if loop_closing else self.windows_plain


def build_setup(trajectory: str = "panorama_1loop", frames: int = 120,
                chunk_size: int = 4, overlap: int = 2, rays_per_frame: int = 8,
                grid_size: int | None = None, length_scale: float = 6.0,
                schedule_kind: str = "cosine", levels: int = 1000, steps: int = 50,
                spatial_threshold: float = 0.5, spatial_min_gap: int = 3,
                context_length: int = 8, traj_params: dict | None = None) -> Setup:
    traj = generate_trajectory(trajectory, frames, chunk_size, **(traj_params or {}))
    world = world_for_trajectory(traj, rays_per_frame=rays_per_frame,
                                 grid_size=grid_size, length_scale=length_scale)
    plan = partition(frames, chunk_size)
    noise_schedule = build_schedule(levels, schedule_kind, steps)
    denoiser = OracleDenoiser(world, noise_schedule, context_length=context_length)
    windows_loop = compile_windows(world, traj, plan, overlap, context_length,
                                   loop_closing=True, threshold=spatial_threshold,
                                   min_gap=spatial_min_gap)
    windows_plain = compile_windows(world, traj, plan, overlap, context_length,
                                    loop_closing=False)
    return Setup(traj=traj, world=world, noise_schedule=noise_schedule,
                 denoiser=denoiser, windows_loop=windows_loop,
                 windows_plain=windows_plain, chunk_size=chunk_size, overlap=overlap)


def run_sampler(setup: Setup, sampler: str = "gvs", eta: float = 0.9,
                gamma: float = 1.0, guidance_mode: str = "merged",
                gamma1: float | None = None, gamma2: float | None = None,
                loop_closing: bool | None = None, seed: int = 0,
                execution: str = "parallel", jobs: int = 8,
                ar: ArConfig | None = None, stochsync: StochSyncConfig | None = None,
                batch: int | None = None, trace: list | None = None) -> np.ndarray:
    """Run one sampler on a prepared setup and return the sequence values."""
    if loop_closing is None:
        loop_closing = setup.traj.name in LOOP_TRAJECTORIES
    if sampler == "gvs":
        guidance = GuidanceConfig(gamma=gamma, gamma1=gamma1, gamma2=gamma2,
                                  mode=guidance_mode)
        cfg = StitchConfig(eta=eta, guidance=guidance, execution=execution, jobs=jobs)
        return stitch_sample(setup.denoiser, setup.traj, setup.windows(loop_closing),
                             setup.noise_schedule, cfg, seed, batch=batch, trace=trace)
    if batch is not None:
        raise ConfigurationError("batched sampling is only supported for gvs")
    if sampler == "ar":
        cfg = ar or ArConfig()
        if loop_closing and not cfg.retrieval_enabled:
            cfg = ArConfig(history_frames=cfg.history_frames,
                           guidance_scale=cfg.guidance_scale,
                           stabilization=cfg.stabilization,
                           frames_per_step=1, retrieval_enabled=True,
                           retrieval_threshold=cfg.retrieval_threshold,
                           max_retrieved=cfg.max_retrieved,
                           context_length=cfg.context_length)
        return ar_sample(setup.denoiser, setup.traj, setup.noise_schedule, cfg,
                         setup.world, seed)
    if sampler == "stochsync":
        cfg = stochsync or StochSyncConfig()
        return stochsync_sample(setup.denoiser, setup.traj, setup.noise_schedule,
                                cfg, seed, loop_closing=loop_closing)
    raise ConfigurationError(f"unknown sampler {sampler!r}; known: {', '.join(SAMPLERS)}")


# -- grid driver --------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentGrid:
    """Cell grid: samplers x trajectories x eta x gamma x loop_closing x seeds."""

    samplers: tuple = ("gvs",)
    trajectories: tuple = ("straight_line",)
    frames: int = 120
    etas: tuple = (0.9,)
    gammas: tuple = (1.0,)
    loop_closing: tuple = (True,)
    seeds: tuple = tuple(range(20))
    chunk_size: int = 4
    overlap: int = 2
    rays_per_frame: int = 8
    length_scale: float = 6.0
    schedule_kind: str = "cosine"
    levels: int = 1000
    steps: int = 50
    lrc_threshold: float = 0.5
    lrc_min_gap: int = 12

    def cells(self):
        i = 0
        for sampler in self.samplers:
            for traj in self.trajectories:
                for eta in self.etas:
                    for gamma in self.gammas:
                        for lc in self.loop_closing:
                            for seed in self.seeds:
                                yield i, dict(sampler=sampler, trajectory=traj,
                                              eta=float(eta), gamma=float(gamma),
                                              loop_closing=bool(lc), seed=int(seed))
                                i += 1


GRID_COLUMNS = ("sampler", "trajectory", "eta", "gamma", "loop_closing", "seed",
                "f2fc", "lrc", "hf_energy", "cov_error", "wall_ms")


def _fmt(v):
    if v is None:
        return "NA"
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return format(v, ".10g")
    return str(v)


def run_grid(grid: ExperimentGrid, jobs: int = 1):
    """Run every (cell, seed) pair; returns (rows, failures).

    Rows come back in cell order regardless of execution concurrency; cell
    failures are recorded and the grid continues.
    """
    setups: dict[str, Setup] = {}
    for name in grid.trajectories:
        setups[name] = build_setup(
            trajectory=name, frames=grid.frames, chunk_size=grid.chunk_size,
            overlap=grid.overlap, rays_per_frame=grid.rays_per_frame,
            length_scale=grid.length_scale, schedule_kind=grid.schedule_kind,
            levels=grid.levels, steps=grid.steps,
        )

    cells = list(grid.cells())
    failures = []

    def run_cell(item):
        idx, cell = item
        setup = setups[cell["trajectory"]]
        t0 = time.perf_counter()
        try:
            video = run_sampler(setup, sampler=cell["sampler"], eta=cell["eta"],
                                gamma=cell["gamma"], loop_closing=cell["loop_closing"],
                                seed=cell["seed"], jobs=1)
            report = compute_report(video, setup.traj, setup.world,
                                    grid.lrc_threshold, grid.lrc_min_gap)
        except Exception as exc:  # cell failures are recorded, grid continues
            log.warning("grid cell %d failed: %s", idx, exc)
            failures.append((idx, cell, repr(exc)))
            report = None
        wall_ms = (time.perf_counter() - t0) * 1e3
        row = dict(cell)
        row["f2fc"] = report.f2fc if report else None
        row["lrc"] = report.lrc if report else None
        row["hf_energy"] = report.hf_energy if report else None
        row["cov_error"] = None
        row["wall_ms"] = wall_ms
        return idx, row

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(run_cell, cells))
    else:
        done = [run_cell(c) for c in cells]
    done.sort(key=lambda t: t[0])
    return [row for _, row in done], failures


def grid_rows_to_csv(rows) -> str:
    out = io.StringIO()
    out.write(",".join(GRID_COLUMNS) + "\n")
    for row in rows:
        out.write(",".join(_fmt(row[c]) for c in GRID_COLUMNS) + "\n")
    return out.getvalue()
