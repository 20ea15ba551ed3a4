"""Baseline samplers sharing the denoiser contract.

Autoregressive sampling slides a context window forward, conditioning each
step on stabilized recent history (plus retrieved spatially close frames
when loop closing) under joint history/camera guidance. The
synchronization sampler denoises alternating sets of non-overlapping
windows to clean estimates with an inner deterministic pass, then renoises
the stitched sequence with maximum stochasticity at each outer level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import CapacityError, ConfigurationError, NumericFailure
from .guidance import WindowInput, history_guided_eps, pose_cfg_eps
from .schedule import NoiseSchedule, forward_noise, predict_clean, ddim_step
from .stitching import scatter_update
from .trajectories import Trajectory
from .windows import Window, _pose_rows
from .world import World


# -- autoregressive sampler ---------------------------------------------------


@dataclass(frozen=True)
class ArConfig:
    history_frames: int = 4
    guidance_scale: float = 4.0
    stabilization: float = 0.02     # history noise level as a fraction of K
    frames_per_step: int = 4
    retrieval_enabled: bool = False
    retrieval_threshold: float = 0.5
    max_retrieved: int = 3
    context_length: int = 8

    def __post_init__(self):
        slots = self.history_frames + self.frames_per_step
        if self.retrieval_enabled:
            slots += self.max_retrieved
        if slots > self.context_length:
            raise ConfigurationError(
                f"history + generated + retrieved = {slots} exceeds context "
                f"{self.context_length}"
            )
        if not 0 <= self.stabilization < 1:
            raise ConfigurationError("stabilization must lie in [0, 1)")


class Memory:
    """Append-only store of generated frames with their poses."""

    def __init__(self):
        self.frames: list[int] = []
        self.values: list[np.ndarray] = []
        self.coords: list[float] = []
        self.poses: list[np.ndarray] = []

    def append(self, frame: int, value: np.ndarray, coord: float, pose: np.ndarray):
        self.frames.append(int(frame))
        self.values.append(np.array(value))
        self.coords.append(float(coord))
        self.poses.append(np.array(pose))

    def __len__(self):
        return len(self.frames)


def retrieve(memory: Memory, query_coords, world: World, threshold: float,
             max_n: int = 3, exclude: set | None = None) -> list[int]:
    """Indices into ``memory`` of frames whose footprint overlap with any
    query pose strictly exceeds ``threshold``, best first, at most ``max_n``."""
    exclude = exclude or set()
    scored = []
    for i, (frame, coord) in enumerate(zip(memory.frames, memory.coords)):
        if frame in exclude:
            continue
        overlap = max(world.fov_overlap(coord, q) for q in np.atleast_1d(query_coords))
        if overlap > threshold:
            scored.append((-overlap, frame, i))
    scored.sort()
    return [i for _, _, i in scored[:max_n]]


def _inner_ddim(denoiser, noise_schedule, inp: WindowInput, target, levels,
                eps_fn) -> np.ndarray:
    """Deterministic denoising of the target slots from levels[0] to clean.

    Non-target slots keep their values and levels throughout; the final step
    returns the clean-sample prediction for the targets.
    """
    values = np.array(inp.values)
    slot_levels = np.array(inp.noise_levels)
    for s in range(levels.size - 1):
        level, level_prev = int(levels[s]), int(levels[s + 1])
        slot_levels[target] = level
        cur = inp.replace(values=values, noise_levels=slot_levels)
        eps_hat = eps_fn(cur, s)
        if s == levels.size - 2:
            upd = predict_clean(noise_schedule, values[..., target, :],
                                eps_hat[..., target, :],
                                slot_levels[target])
        else:
            upd = ddim_step(noise_schedule, values[..., target, :],
                            eps_hat[..., target, :], slot_levels[target],
                            level_prev, 0.0, 0.0)
        values = np.array(values)
        values[..., target, :] = upd
    return values


def ar_sample(denoiser, traj: Trajectory, noise_schedule: NoiseSchedule,
              cfg: ArConfig, world: World, seed: int) -> np.ndarray:
    """History-guided sliding-window generation of the full sequence.

    Each step conditions on the latest history frames re-noised to the
    stabilization level at the left end of the window and, when retrieval is
    enabled, up to ``max_retrieved`` spatially overlapping generated frames
    at the right end (deficit padded with pure noise); new frames are
    denoised with a deterministic inner pass under joint history/camera
    guidance.
    """
    num_frames = traj.num_frames
    frame_dim = denoiser.frame_dim
    levels = noise_schedule.inference_levels
    max_level = noise_schedule.max_level
    k_stab = int(round(cfg.stabilization * noise_schedule.num_levels))
    out = np.zeros((num_frames, frame_dim))
    mem = Memory()
    poses_all = traj.pose_array()

    # Bootstrap: one full-window generation with no history.
    boot = min(cfg.context_length, num_frames)
    boot_idx = np.arange(boot)
    inp = WindowInput(
        values=rng.normal((boot, frame_dim), seed, rng.TARGET_INIT, 0),
        noise_levels=np.full(boot, max_level),
        poses=poses_all[boot_idx], coords=traj.scene_coords[boot_idx],
        null_mask=np.zeros(boot, dtype=bool), target_mask=np.ones(boot, dtype=bool),
    )
    vals = _inner_ddim(denoiser, noise_schedule, inp, inp.target_mask, levels,
                       lambda cur, s: denoiser.eps(cur))
    if not np.all(np.isfinite(vals)):
        raise NumericFailure(step=0, chunk=0)
    out[boot_idx] = vals
    for f in boot_idx:
        mem.append(f, out[f], traj.scene_coords[f], poses_all[f])

    start = boot
    ar_step = 1
    while start < num_frames:
        n_new = min(cfg.frames_per_step, num_frames - start)
        new_idx = np.arange(start, start + n_new)
        hist_idx = np.arange(start - cfg.history_frames, start)

        slots = [*hist_idx, *new_idx]
        retrieved: list[int] = []
        n_pad = 0
        if cfg.retrieval_enabled:
            exclude = set(int(f) for f in hist_idx) | set(int(f) for f in new_idx)
            picks = retrieve(mem, traj.scene_coords[new_idx], world,
                             cfg.retrieval_threshold, cfg.max_retrieved, exclude)
            retrieved = [mem.frames[i] for i in picks]
            n_pad = cfg.max_retrieved - len(retrieved)
            slots += retrieved
        span = len(slots) + n_pad
        values = np.empty((span, frame_dim))
        slot_levels = np.empty(span, dtype=np.int64)
        null_mask = np.zeros(span, dtype=bool)
        target = np.zeros(span, dtype=bool)
        poses = np.zeros((span, 4))
        coords = np.zeros(span)

        stab_noise = rng.normal((len(hist_idx) + len(retrieved), frame_dim),
                                seed, rng.STABILIZE, ar_step)
        conditioned = [*hist_idx, *retrieved]
        for j, f in enumerate(slots):
            poses[j] = poses_all[f]
            coords[j] = traj.scene_coords[f]
        for j, f in enumerate(hist_idx):
            values[j] = forward_noise(noise_schedule, out[f], k_stab, stab_noise[j])
            slot_levels[j] = k_stab
        t0 = len(hist_idx)
        values[t0:t0 + n_new] = rng.normal((n_new, frame_dim), seed, rng.TARGET_INIT, ar_step)
        slot_levels[t0:t0 + n_new] = max_level
        target[t0:t0 + n_new] = True
        r0 = t0 + n_new
        for j, f in enumerate(retrieved):
            values[r0 + j] = forward_noise(noise_schedule, out[f], k_stab,
                                           stab_noise[len(hist_idx) + j])
            slot_levels[r0 + j] = k_stab
        if n_pad:
            p0 = r0 + len(retrieved)
            values[p0:] = rng.normal((n_pad, frame_dim), seed, rng.PADDING, ar_step)
            slot_levels[p0:] = max_level
            null_mask[p0:] = True

        history_mask = ~target
        inp = WindowInput(values=values, noise_levels=slot_levels, poses=poses,
                          coords=coords, null_mask=null_mask, target_mask=target)

        def eps_fn(cur, s, _step=ar_step, _hist=history_mask, _n=int((~target).sum())):
            fresh = rng.normal((_n, frame_dim), seed, rng.GUIDANCE, _step, s)
            return history_guided_eps(denoiser, cur, _hist, cfg.guidance_scale,
                                      fresh, max_level)

        vals = _inner_ddim(denoiser, noise_schedule, inp, target, levels, eps_fn)
        new_vals = vals[..., target, :]
        if not np.all(np.isfinite(new_vals)):
            raise NumericFailure(step=ar_step, chunk=int(start // max(n_new, 1)))
        out[new_idx] = new_vals
        for f in new_idx:
            mem.append(f, out[f], traj.scene_coords[f], poses_all[f])
        start += n_new
        ar_step += 1
    return out


# -- synchronization sampler ----------------------------------------------------


@dataclass(frozen=True)
class StochSyncConfig:
    level_start: int = 900
    level_stop: int = 270
    outer_steps: int = 25
    window_size: int = 8
    window_offset: int = 4
    inner_steps_start: int = 50
    inner_steps_end: int = 1
    guidance_scale: float = 4.0

    def __post_init__(self):
        if not 0 <= self.level_stop < self.level_start:
            raise ConfigurationError("need level_stop < level_start")
        if self.window_offset <= 0 or self.window_size <= 0:
            raise ConfigurationError("window size/offset must be positive")
        if self.inner_steps_end < 1 or self.inner_steps_start < self.inner_steps_end:
            raise ConfigurationError("inner step counts must decrease to >= 1")


def _trajectory_loops(traj: Trajectory) -> int:
    if not traj.cyclic:
        return 0
    coords = traj.scene_coords
    step = (coords[-1] - coords[0]) / max(traj.num_frames - 1, 1)
    return int(round((coords[-1] - coords[0] + step) / traj.period))


def _make_window(index, slots, num_frames, traj):
    slots = np.asarray(slots, dtype=int)
    real = (slots >= 0) & (slots < num_frames)
    poses, coords = _pose_rows(traj, slots)
    return Window(index=index, kind="temporal", slots=slots, target_mask=real,
                  poses=poses, coords=coords, target_chunk=-1)


def stochsync_window_sets(traj: Trajectory, cfg: StochSyncConfig,
                          loop_closing: bool) -> list[list[Window]]:
    """Alternating sets of non-overlapping context windows.

    The base set tiles the sequence; the offset set is shifted by
    ``window_offset`` with boundary windows padded by pure noise, or wrapped
    around the loop for single-loop trajectories. Two-loop trajectories add
    a third set pairing corresponding frames of the two loops.
    """
    n = traj.num_frames
    size, off = cfg.window_size, cfg.window_offset
    if n % size:
        raise ConfigurationError(f"{n} frames not tileable by windows of {size}")
    loops = _trajectory_loops(traj) if loop_closing else 0
    idx = 0
    sets: list[list[Window]] = []

    base = []
    for s0 in range(0, n, size):
        base.append(_make_window(idx, np.arange(s0, s0 + size), n, traj))
        idx += 1
    sets.append(base)

    offset = []
    if loops >= 1:
        # Wrap-around window joins the sequence ends.
        starts = list(range(off, n - size + 1, size))
        wrap = np.concatenate([np.arange(n - off, n), np.arange(0, size - off)])
        for s0 in starts:
            offset.append(_make_window(idx, np.arange(s0, s0 + size), n, traj))
            idx += 1
        offset.append(_make_window(idx, wrap, n, traj))
        idx += 1
    else:
        offset.append(_make_window(idx, np.arange(off - size, off), n, traj))
        idx += 1
        for s0 in range(off, n - size + 1, size):
            offset.append(_make_window(idx, np.arange(s0, s0 + size), n, traj))
            idx += 1
        offset.append(_make_window(idx, np.arange(n - off, n - off + size), n, traj))
        idx += 1
    sets.append(offset)

    if loops >= 2:
        half = n // 2
        cross = []
        for s0 in range(0, half, size - off):
            slots = np.concatenate([np.arange(s0, s0 + size - off),
                                    np.arange(s0 + half, s0 + half + size - off)])
            cross.append(_make_window(idx, slots, n, traj))
            idx += 1
        sets.append(cross)
    return sets


def stochsync_sample(denoiser, traj: Trajectory, noise_schedule: NoiseSchedule,
                     cfg: StochSyncConfig, seed: int,
                     loop_closing: bool = False) -> np.ndarray:
    """Synchronization sampling: per outer level, each window of the active
    set computes a multi-step clean estimate (camera-guided, deterministic),
    the stitched clean sequence is re-noised to the next level with maximum
    stochasticity, and the last outer step's clean pass is returned."""
    num_frames = traj.num_frames
    frame_dim = denoiser.frame_dim
    max_level = noise_schedule.max_level
    if cfg.level_start > max_level:
        raise ConfigurationError("level_start beyond the schedule")
    sets = stochsync_window_sets(traj, cfg, loop_closing)
    for group in sets:
        for w in group:
            if w.num_slots > denoiser.context_length:
                raise CapacityError("synchronization window exceeds denoiser context")
    outer = np.round(np.linspace(cfg.level_start, cfg.level_stop, cfg.outer_steps)).astype(int)
    inner_counts = np.round(np.linspace(cfg.inner_steps_start, cfg.inner_steps_end,
                                        cfg.outer_steps)).astype(int)
    z = rng.normal((num_frames, frame_dim), seed, rng.INIT)
    for i, level in enumerate(outer):
        group = sets[i % len(sets)]
        inner_levels = np.round(np.linspace(level, 0, inner_counts[i] + 1)).astype(int)
        clean_chunks = []
        for w in group:
            real = w.target_mask
            values = np.empty((w.num_slots, frame_dim))
            values[real] = z[w.slots[real]]
            slot_levels = np.full(w.num_slots, int(level), dtype=np.int64)
            if (~real).any():
                values[~real] = rng.normal((int((~real).sum()), frame_dim),
                                           seed, rng.PADDING, i, w.index)
                slot_levels[~real] = max_level
            inp = WindowInput(values=values, noise_levels=slot_levels, poses=w.poses,
                              coords=w.coords, null_mask=~real, target_mask=real)
            vals = _inner_ddim(
                denoiser, noise_schedule, inp, real, inner_levels,
                lambda cur, s: pose_cfg_eps(denoiser, cur, cfg.guidance_scale, max_level),
            )
            chunk = vals[real]
            if not np.all(np.isfinite(chunk)):
                raise NumericFailure(step=i, chunk=w.index)
            clean_chunks.append(chunk)
        clean_seq = scatter_update(np.zeros_like(z), group, clean_chunks)
        if i + 1 < outer.size:
            fresh = rng.normal((num_frames, frame_dim), seed, rng.RENOISE, i)
            z = forward_noise(noise_schedule, clean_seq, int(outer[i + 1]), fresh)
        else:
            z = clean_seq
    return z
