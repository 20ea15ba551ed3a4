"""Sequence chunking, context windows, and the per-step window schedule.

The target sequence is cut into disjoint chunks shorter than the denoiser
context. Each chunk owns one temporal window (chunk plus a few overlap
frames from its temporal neighbors) and, where the trajectory revisits
scene regions, spatial windows that condition the chunk on temporally
distant but spatially close frames. At every denoising step each chunk
cycles through its windows, so over a full run it is conditioned on all of
its neighbors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ConfigurationError, ScheduleError
from .trajectories import Trajectory
from .world import World


@dataclass(frozen=True)
class ChunkPlan:
    """T = num_frames / chunk_size disjoint chunks covering the sequence."""

    chunk_size: int
    num_chunks: int

    @property
    def num_frames(self) -> int:
        return self.chunk_size * self.num_chunks

    def frames(self, chunk: int) -> np.ndarray:
        start = chunk * self.chunk_size
        return np.arange(start, start + self.chunk_size)

    def chunk_of(self, frame: int) -> int:
        return int(frame) // self.chunk_size


def partition(num_frames: int, chunk_size: int = 4) -> ChunkPlan:
    if chunk_size <= 0 or num_frames <= 0 or num_frames % chunk_size:
        raise ConfigurationError(
            f"{num_frames} frames cannot be cut into whole chunks of {chunk_size}"
        )
    return ChunkPlan(chunk_size=chunk_size, num_chunks=num_frames // chunk_size)


@dataclass(frozen=True)
class Window:
    """One context window: ordered global timesteps plus per-slot conditioning.

    Virtual slot indices (< 0 or >= num_frames) mark pure-noise padding and
    only appear in boundary temporal windows; they are never targets.
    """

    index: int
    kind: str                    # "temporal" | "spatial"
    slots: np.ndarray            # (L,) global timesteps
    target_mask: np.ndarray      # (L,) bool
    poses: np.ndarray            # (L, 4) [x, y, z, yaw]
    coords: np.ndarray           # (L,) scene coordinates
    target_chunk: int
    neighbor_chunk: int | None = None
    overridden: np.ndarray | None = None  # (L,) bool, replacement conditioning

    @property
    def num_slots(self) -> int:
        return int(self.slots.size)

    def virtual_mask(self, num_frames: int) -> np.ndarray:
        return (self.slots < 0) | (self.slots >= num_frames)


@dataclass(frozen=True)
class WindowSchedule:
    """All windows plus, per chunk, the cyclic list the sampler draws from."""

    windows: tuple
    per_chunk: tuple             # per chunk: tuple of window indices
    plan: ChunkPlan
    num_frames: int

    def validate(self):
        targeted = np.zeros(self.plan.num_chunks, dtype=bool)
        for t, ids in enumerate(self.per_chunk):
            if not ids:
                raise ScheduleError(f"chunk {t} has no context window")
            for i in ids:
                if self.windows[i].target_chunk != t:
                    raise ScheduleError(f"window {i} listed under the wrong chunk")
            targeted[t] = True
        if not targeted.all():
            raise ScheduleError("some chunk is never a target")


def cyclic_pick(schedule: WindowSchedule, chunk: int, step: int) -> Window:
    """Window used for ``chunk`` at denoising step ``step``: W[t][step mod |W[t]|]."""
    ids = schedule.per_chunk[chunk]
    if not ids:
        raise ScheduleError(f"chunk {chunk} has no context window")
    return schedule.windows[ids[step % len(ids)]]


def _pose_rows(traj: Trajectory, frames) -> tuple[np.ndarray, np.ndarray]:
    """Poses and coords at global frame indices, duplicating endpoints for
    virtual padding slots."""
    n = traj.num_frames
    clamped = np.clip(frames, 0, n - 1)
    poses = np.column_stack([traj.positions[clamped], traj.yaws[clamped]])
    coords = traj.scene_coords[clamped].astype(np.float64)
    return poses, coords


def temporal_windows(plan: ChunkPlan, traj: Trajectory, overlap: int = 2,
                     context_length: int = 8) -> list[Window]:
    """One window per chunk: the chunk plus ``overlap`` frames on each side.

    Boundary windows keep their shape by using virtual padding slots whose
    poses duplicate the trajectory endpoints.
    """
    size = plan.chunk_size + 2 * overlap
    if size > context_length:
        raise CapacityError(f"window of {size} slots exceeds context length {context_length}")
    if traj.num_frames != plan.num_frames:
        raise ConfigurationError("trajectory length disagrees with the chunk plan")
    out = []
    for t in range(plan.num_chunks):
        slots = np.arange(t * plan.chunk_size - overlap, (t + 1) * plan.chunk_size + overlap)
        target = np.zeros(size, dtype=bool)
        target[overlap:overlap + plan.chunk_size] = True
        poses, coords = _pose_rows(traj, slots)
        out.append(Window(index=-1, kind="temporal", slots=slots, target_mask=target,
                          poses=poses, coords=coords, target_chunk=t))
    return out


def fov_overlap(world: World, coord_i: float, coord_j: float) -> float:
    """Fraction of frame i's view rays whose scene sample lies inside frame
    j's footprint."""
    return world.fov_overlap(coord_i, coord_j)


def chunk_pair_overlap(world: World, traj: Trajectory, chunk_a: int, chunk_b: int,
                       plan: ChunkPlan) -> float:
    """Mean pairwise footprint overlap between two chunks' frames."""
    ca = traj.scene_coords[plan.frames(chunk_a)]
    cb = traj.scene_coords[plan.frames(chunk_b)]
    return float(np.mean([[world.fov_overlap(a, b) for b in cb] for a in ca]))


def _cyclic_dist(a, b, period):
    d = np.abs(a - b)
    if period is None:
        return d
    d = d % period
    return np.minimum(d, period - d)


def _match_flank(traj: Trajectory, plan: ChunkPlan, target_chunk: int,
                 desired: float, taken: set) -> int:
    """Frame whose scene coordinate best matches ``desired``, preferring
    temporally distant frames; target-chunk frames are excluded."""
    coords = traj.scene_coords
    period = traj.period if traj.cyclic else None
    dist = _cyclic_dist(coords, desired, period)
    excluded = np.zeros(traj.num_frames, dtype=bool)
    excluded[plan.frames(target_chunk)] = True
    for f in taken:
        excluded[f] = True
    dist = np.where(excluded, np.inf, dist)
    best = dist.min()
    candidates = np.flatnonzero(dist <= best + 1e-9)
    gaps = np.abs(candidates // plan.chunk_size - target_chunk)
    order = np.lexsort((candidates, -gaps))
    return int(candidates[order[0]])


def spatial_windows(world: World, traj: Trajectory, plan: ChunkPlan,
                    threshold: float = 0.5, min_gap: int = 3, overlap: int = 2,
                    context_length: int = 8) -> list[Window]:
    """Loop-closing windows for chunk pairs that view the same scene region.

    For every ordered chunk pair with temporal gap >= ``min_gap`` and mean
    pairwise footprint overlap >= ``threshold``, the target chunk is flanked
    by the frames that view the scene positions just before and after it,
    drawn from the temporally distant revisit (mirroring the temporal
    layout). Conditioning poses come from the trajectory, with seam
    overrides applied where defined.
    """
    if not 0 < threshold <= 1:
        raise ConfigurationError("threshold must lie in (0, 1]")
    size = plan.chunk_size + 2 * overlap
    if size > context_length:
        raise CapacityError(f"window of {size} slots exceeds context length {context_length}")
    pairs = []
    for ta in range(plan.num_chunks):
        for tb in range(plan.num_chunks):
            if abs(ta - tb) < min_gap:
                continue
            if chunk_pair_overlap(world, traj, ta, tb, plan) >= threshold:
                pairs.append((ta, tb))

    coords_all = traj.scene_coords
    cmin, cmax = coords_all.min(), coords_all.max()
    out = []
    for ta, tb in pairs:
        frames_t = plan.frames(ta)
        c_first = coords_all[frames_t[0]]
        c_last = coords_all[frames_t[-1]]
        step = (c_last - c_first) / max(plan.chunk_size - 1, 1)
        desired_left = [c_first + step * (j - overlap) for j in range(overlap)]
        desired_right = [c_last + step * (j + 1) for j in range(overlap)]

        slots = np.empty(size, dtype=int)
        poses = np.empty((size, 4))
        coords = np.empty(size)
        overridden = np.zeros(size, dtype=bool)
        target = np.zeros(size, dtype=bool)
        target[overlap:overlap + plan.chunk_size] = True
        slots[overlap:overlap + plan.chunk_size] = frames_t
        poses[target], coords[target] = _pose_rows(traj, frames_t)

        taken = set(int(f) for f in frames_t)
        ov = traj.conditioning_overrides
        for side, desireds, base in (("backward", desired_left, 0),
                                     ("forward", desired_right, overlap + plan.chunk_size)):
            for j, dc in enumerate(desireds):
                i = base + j
                crosses_seam = traj.cyclic and not cmin - 1e-9 <= dc <= cmax + 1e-9
                frame = _match_flank(traj, plan, ta, dc, taken)
                taken.add(frame)
                slots[i] = frame
                if ov is not None and crosses_seam:
                    seg = ov.forward if side == "forward" else ov.backward
                    pos, yaw, coord = seg[j]
                    poses[i] = [*pos, yaw]
                    coords[i] = coord
                    overridden[i] = True
                else:
                    p, c = _pose_rows(traj, np.array([frame]))
                    poses[i], coords[i] = p[0], c[0]
        out.append(Window(index=-1, kind="spatial", slots=slots, target_mask=target,
                          poses=poses, coords=coords, target_chunk=ta, neighbor_chunk=tb,
                          overridden=overridden))
    return out


def compile_windows(world: World, traj: Trajectory, plan: ChunkPlan, overlap: int = 2,
                    context_length: int = 8, loop_closing: bool = True,
                    threshold: float = 0.5, min_gap: int = 3) -> WindowSchedule:
    """Full window schedule: temporal windows plus, when loop closing is on,
    the spatial windows; per chunk, temporal first then spatial ordered by
    neighbor chunk."""
    temporal = temporal_windows(plan, traj, overlap, context_length)
    spatial = (spatial_windows(world, traj, plan, threshold, min_gap, overlap, context_length)
               if loop_closing else [])
    windows = []
    for w in temporal + spatial:
        windows.append(Window(index=len(windows), kind=w.kind, slots=w.slots,
                              target_mask=w.target_mask, poses=w.poses, coords=w.coords,
                              target_chunk=w.target_chunk, neighbor_chunk=w.neighbor_chunk,
                              overridden=w.overridden))
    per_chunk = []
    for t in range(plan.num_chunks):
        mine = [w for w in windows if w.target_chunk == t]
        mine.sort(key=lambda w: (w.kind != "temporal", w.neighbor_chunk or 0))
        per_chunk.append(tuple(w.index for w in mine))
    ws = WindowSchedule(windows=tuple(windows), per_chunk=tuple(per_chunk),
                        plan=plan, num_frames=traj.num_frames)
    ws.validate()
    return ws


def schedule_to_json(schedule: WindowSchedule) -> dict:
    """Window schedule as a JSON document (slot arrays, masks, poses)."""
    return {
        "num_frames": schedule.num_frames,
        "chunk_size": schedule.plan.chunk_size,
        "num_chunks": schedule.plan.num_chunks,
        "per_chunk": [list(ids) for ids in schedule.per_chunk],
        "windows": [
            {
                "index": w.index,
                "kind": w.kind,
                "target_chunk": w.target_chunk,
                "neighbor_chunk": w.neighbor_chunk,
                "slots": [int(s) for s in w.slots],
                "target_mask": [bool(m) for m in w.target_mask],
                "poses": [[float(v) for v in row] for row in w.poses],
                "coords": [float(c) for c in w.coords],
                "overridden": [bool(o) for o in (w.overridden if w.overridden is not None
                                                 else np.zeros(w.num_slots, dtype=bool))],
            }
            for w in schedule.windows
        ],
    }
