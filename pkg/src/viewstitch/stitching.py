"""The parallel stitching sampler.

One denoising pass over the whole sequence: initialize pure noise, then for
every inference level pick one context window per chunk (cycling through
temporal and spatial windows), project the sequence estimate into each
window, denoise with guidance, run the stochastic update, and scatter the
target chunks back. All randomness flows from keyed streams, so parallel
and sequential window execution produce bit-identical sequences.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import CapacityError, ConfigurationError, NumericFailure, ScheduleError
from .guidance import Denoiser, GuidanceConfig, WindowInput, guided_eps
from .schedule import (NoiseSchedule, StochasticityConfig, ddim_step,
                       predict_clean, sigma_level)
from .trajectories import Trajectory
from .windows import Window, WindowSchedule, cyclic_pick


@dataclass(frozen=True)
class StitchConfig:
    """Sampler defaults: partial stochasticity 0.9, merged guidance at 1."""

    eta: float = 0.9
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    execution: str = "parallel"
    jobs: int = 8

    def __post_init__(self):
        if self.execution not in ("parallel", "sequential"):
            raise ConfigurationError(f"unknown execution mode {self.execution!r}")
        StochasticityConfig(self.eta)


def project(z: np.ndarray, step_noise: np.ndarray, window: Window, level: int,
            max_level: int, pad_values=None, pad_step_noise=None):
    """Gather a window's slot values, noise levels, and stochasticity noise.

    Virtual padding slots receive the supplied fresh pure-noise values at the
    maximum level; their poses were fixed at schedule build time (duplicated
    endpoints). Returns the window input and the gathered step noise.
    """
    num_frames = z.shape[-2]
    slots = window.slots
    span = window.num_slots
    if np.any((slots < -span) | (slots >= num_frames + span)):
        raise ScheduleError(f"window {window.index} has out-of-range slots {slots}")
    virtual = window.virtual_mask(num_frames)
    idx = np.clip(slots, 0, num_frames - 1)
    values = np.array(z[..., idx, :])
    noise = np.array(step_noise[..., idx, :])
    levels = np.full(span, level, dtype=np.int64)
    if virtual.any():
        if pad_values is None or pad_step_noise is None:
            raise ScheduleError("padding slots need fresh pad noise")
        values[..., virtual, :] = pad_values
        noise[..., virtual, :] = pad_step_noise
        levels[virtual] = max_level
    inp = WindowInput(values=values, noise_levels=levels, poses=window.poses,
                      coords=window.coords, null_mask=np.zeros(span, dtype=bool),
                      target_mask=window.target_mask)
    return inp, noise


def scatter_update(z: np.ndarray, windows, target_values) -> np.ndarray:
    """Write each window's denoised target chunk back into the sequence.

    The step's windows must have disjoint, covering target masks, in which
    case the least-squares sequence update reduces to direct assignment;
    conditioning-slot outputs are discarded by construction.
    """
    num_frames = z.shape[-2]
    covered = np.zeros(num_frames, dtype=bool)
    out = np.array(z)
    for window, vals in zip(windows, target_values):
        frames = window.slots[window.target_mask]
        if frames.min() < 0 or frames.max() >= num_frames:
            raise ScheduleError(f"window {window.index} targets out-of-range frames")
        if covered[frames].any():
            raise ScheduleError("target chunks overlap within one step")
        covered[frames] = True
        out[..., frames, :] = vals
    if not covered.all():
        raise ScheduleError("target chunks do not cover the sequence")
    return out


def _window_update(denoiser, noise_schedule, window, inp, win_noise, g_cfg,
                   sigma, level_prev, final, fresh_noise, max_level):
    eps_hat = guided_eps(denoiser, inp, g_cfg, fresh_noise, max_level)
    if final:
        out = predict_clean(noise_schedule, inp.values, eps_hat, inp.noise_levels)
    else:
        out = ddim_step(noise_schedule, inp.values, eps_hat, inp.noise_levels,
                        level_prev, sigma, win_noise)
    return out[..., window.target_mask, :]


def stitch_sample(denoiser: Denoiser, traj: Trajectory, window_schedule: WindowSchedule,
                  noise_schedule: NoiseSchedule, cfg: StitchConfig, seed: int,
                  batch: int | None = None, trace: list | None = None) -> np.ndarray:
    """Sample a full sequence aligned with the trajectory.

    Returns (T, D) values, or (batch, T, D) when ``batch`` is given. The
    final inference step returns the clean-sample prediction rather than
    completing a stochastic update to the effectively-clean level.
    """
    window_schedule.validate()
    max_win = max(w.num_slots for w in window_schedule.windows)
    if max_win > denoiser.context_length:
        raise CapacityError(f"windows of {max_win} slots exceed the denoiser context")
    num_frames = window_schedule.num_frames
    frame_dim = denoiser.frame_dim
    lead = () if batch is None else (int(batch),)
    levels = noise_schedule.inference_levels
    max_level = noise_schedule.max_level
    stoch = StochasticityConfig(cfg.eta)
    needs_fresh = not (cfg.guidance.mode == "merged" and cfg.guidance.gamma == 0)

    z = rng.normal((*lead, num_frames, frame_dim), seed, rng.INIT)
    num_chunks = window_schedule.plan.num_chunks
    pool = (ThreadPoolExecutor(max_workers=max(1, cfg.jobs))
            if cfg.execution == "parallel" else None)
    try:
        for s in range(levels.size - 1):
            level, level_prev = int(levels[s]), int(levels[s + 1])
            final = s == levels.size - 2
            step_noise = rng.normal((*lead, num_frames, frame_dim), seed, rng.STEP_NOISE, s)
            sigma = sigma_level(stoch, noise_schedule, level_prev)
            picks = [cyclic_pick(window_schedule, t, s) for t in range(num_chunks)]

            def eval_chunk(t):
                w = picks[t]
                n_virtual = int(w.virtual_mask(num_frames).sum())
                pad_vals = pad_noise = None
                if n_virtual:
                    pad_vals = rng.normal((*lead, n_virtual, frame_dim),
                                          seed, rng.PADDING, s, w.index)
                    pad_noise = rng.normal((*lead, n_virtual, frame_dim),
                                           seed, rng.PADDING_STEP, s, w.index)
                inp, win_noise = project(z, step_noise, w, level, max_level,
                                         pad_vals, pad_noise)
                fresh = None
                if needs_fresh:
                    n_drop = int((~w.target_mask).sum())
                    fresh = rng.normal((*lead, n_drop, frame_dim),
                                       seed, rng.GUIDANCE, s, w.index)
                res = _window_update(denoiser, noise_schedule, w, inp, win_noise,
                                     cfg.guidance, sigma, level_prev, final,
                                     fresh, max_level)
                if not np.all(np.isfinite(res)):
                    raise NumericFailure(step=s, chunk=t)
                return res

            if pool is not None:
                results = list(pool.map(eval_chunk, range(num_chunks)))
            else:
                results = [eval_chunk(t) for t in range(num_chunks)]
            z = scatter_update(z, picks, results)
            if trace is not None:
                trace.append({"step": s, "level": level_prev,
                              "norm": float(np.linalg.norm(z))})
    finally:
        if pool is not None:
            pool.shutdown()
    return z


def ddim_reference_sample(denoiser: Denoiser, traj: Trajectory,
                          noise_schedule: NoiseSchedule, eta: float, seed: int,
                          batch: int | None = None) -> np.ndarray:
    """Plain full-sequence stochastic DDIM sampling (no windows, no guidance).

    Uses the same keyed noise streams and final-step rule as the stitched
    sampler, so a single full-coverage window at zero guidance reproduces it
    seed for seed.
    """
    num_frames = traj.num_frames
    if num_frames > denoiser.context_length:
        raise CapacityError("sequence exceeds the denoiser context; use stitching")
    frame_dim = denoiser.frame_dim
    lead = () if batch is None else (int(batch),)
    stoch = StochasticityConfig(eta)
    levels = noise_schedule.inference_levels
    z = rng.normal((*lead, num_frames, frame_dim), seed, rng.INIT)
    poses = traj.pose_array()
    all_target = np.ones(num_frames, dtype=bool)
    no_null = np.zeros(num_frames, dtype=bool)
    for s in range(levels.size - 1):
        level, level_prev = int(levels[s]), int(levels[s + 1])
        step_noise = rng.normal((*lead, num_frames, frame_dim), seed, rng.STEP_NOISE, s)
        slot_levels = np.full(num_frames, level, dtype=np.int64)
        inp = WindowInput(values=z, noise_levels=slot_levels, poses=poses,
                          coords=traj.scene_coords, null_mask=no_null,
                          target_mask=all_target)
        eps_hat = denoiser.eps(inp)
        if s == levels.size - 2:
            z = predict_clean(noise_schedule, z, eps_hat, slot_levels)
        else:
            sigma = sigma_level(stoch, noise_schedule, level_prev)
            z = ddim_step(noise_schedule, z, eps_hat, slot_levels, level_prev,
                          sigma, step_noise)
    return z
