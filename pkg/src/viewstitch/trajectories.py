"""Benchmark camera trajectories over a shared 1-D scene coordinate.

Each generator emits full 3-D poses (position, yaw) for planning plus the
scalar scene coordinate the frame observes in the analytic world: yaw for
panoramas, arc length along the path for everything else. Coordinates
advance by exactly one world grid step per frame (panoramas use the grid
the world chooses), so consecutive frames share exact scene samples and the
consistency metrics compare values rather than interpolations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class Pose:
    """Camera pose: world position, heading, and field of view (radians)."""

    position: tuple[float, float, float]
    yaw: float
    fov: float


@dataclass(frozen=True)
class SeamOverride:
    """Replacement conditioning segment for loop-closing windows that cross
    the trajectory seam.

    ``forward`` replaces wrapped slots just past the last frame (lowest
    original indices), ``backward`` the slots just before frame 0 (highest
    original indices). Each entry is (position, yaw, scene_coord).
    """

    forward: tuple[tuple[tuple[float, float, float], float, float], ...]
    backward: tuple[tuple[tuple[float, float, float], float, float], ...]


@dataclass(frozen=True)
class Trajectory:
    name: str
    positions: np.ndarray       # (T, 3)
    yaws: np.ndarray            # (T,)
    fov: float                  # radians, constant across the trajectory
    scene_coords: np.ndarray    # (T,) world scene coordinate per frame
    cyclic: bool                # scene coordinate wraps with the given period
    period: float | None
    conditioning_overrides: SeamOverride | None = None

    def __post_init__(self):
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=np.float64))
        object.__setattr__(self, "yaws", np.asarray(self.yaws, dtype=np.float64))
        object.__setattr__(self, "scene_coords", np.asarray(self.scene_coords, dtype=np.float64))

    @property
    def num_frames(self) -> int:
        return int(self.scene_coords.size)

    def pose(self, frame: int) -> Pose:
        return Pose(tuple(self.positions[frame]), float(self.yaws[frame]), self.fov)

    def pose_array(self) -> np.ndarray:
        """Poses as (T, 4) rows of [x, y, z, yaw]."""
        return np.column_stack([self.positions, self.yaws])


BENCHMARK_NAMES = (
    "panorama_1loop",
    "panorama_2loop",
    "circle_1loop",
    "circle_2loop",
    "straight_line",
    "stairs",
    "staircase_circuit",
    "impossible_staircase",
    "forward_orbit_backward",
)

# Default field of view used when a panorama world has not fixed one yet;
# worlds override fov to match their grid (see world.world_for_trajectory).
_DEFAULT_FOV = 2 * math.pi * 8 / 96


def _panorama(num_frames, loops):
    yaw = loops * 2 * math.pi * np.arange(num_frames) / num_frames
    positions = np.zeros((num_frames, 3))
    return Trajectory(
        name=f"panorama_{loops}loop",
        positions=positions,
        yaws=yaw,
        fov=_DEFAULT_FOV,
        scene_coords=yaw,
        cyclic=True,
        period=2 * math.pi,
    )


def _circle(num_frames, loops):
    # Arc length advances one unit per frame; the loop period is T/loops.
    period = num_frames / loops
    radius = period / (2 * math.pi)
    theta = 2 * math.pi * loops * np.arange(num_frames) / num_frames
    positions = np.column_stack([radius * np.cos(theta), radius * np.sin(theta), np.zeros(num_frames)])
    yaws = theta + math.pi / 2  # tangent heading
    return Trajectory(
        name=f"circle_{loops}loop",
        positions=positions,
        yaws=yaws,
        fov=_DEFAULT_FOV,
        scene_coords=np.arange(num_frames, dtype=np.float64),
        cyclic=True,
        period=period,
    )


def _straight_line(num_frames):
    coords = np.arange(num_frames, dtype=np.float64)
    positions = np.column_stack([coords, np.zeros(num_frames), np.zeros(num_frames)])
    return Trajectory(
        name="straight_line",
        positions=positions,
        yaws=np.zeros(num_frames),
        fov=_DEFAULT_FOV,
        scene_coords=coords,
        cyclic=False,
        period=None,
    )


def _stairs(num_frames, turns=2.0, rise=0.05):
    # Helix: circular floor-plan motion plus steady climb. Never revisits.
    theta = 2 * math.pi * turns * np.arange(num_frames) / num_frames
    radius = num_frames / (2 * math.pi * turns)
    positions = np.column_stack(
        [radius * np.cos(theta), radius * np.sin(theta), rise * np.arange(num_frames)]
    )
    return Trajectory(
        name="stairs",
        positions=positions,
        yaws=theta + math.pi / 2,
        fov=_DEFAULT_FOV,
        scene_coords=np.arange(num_frames, dtype=np.float64),
        cyclic=False,
        period=None,
    )


def _rectangle_path(num_frames):
    """Positions and headings tracing a closed rectangle, one unit per frame."""
    if num_frames % 4:
        raise ConfigurationError("circuit trajectories need a frame count divisible by 4")
    side = num_frames // 4
    xy = np.zeros((num_frames, 2))
    yaw = np.zeros(num_frames)
    corners = [(0.0, 0.0), (side, 0.0), (side, side), (0.0, side)]
    headings = [0.0, math.pi / 2, math.pi, 3 * math.pi / 2]
    for leg in range(4):
        sl = slice(leg * side, (leg + 1) * side)
        t = np.arange(side, dtype=np.float64)
        cx, cy = corners[leg]
        h = headings[leg]
        xy[sl, 0] = cx + np.cos(h) * t
        xy[sl, 1] = cy + np.sin(h) * t
        yaw[sl] = h
    return xy, yaw


def _staircase_circuit(num_frames, rise=0.05):
    # Four stair flights closing a rectangle: up, down, up, down.
    xy, yaw = _rectangle_path(num_frames)
    side = num_frames // 4
    z = np.zeros(num_frames)
    for leg in range(4):
        sl = slice(leg * side, (leg + 1) * side)
        t = np.arange(side, dtype=np.float64)
        base = 0.0 if leg % 2 == 0 else rise * side
        z[sl] = base + (rise if leg % 2 == 0 else -rise) * t
    positions = np.column_stack([xy, z])
    return Trajectory(
        name="staircase_circuit",
        positions=positions,
        yaws=yaw,
        fov=_DEFAULT_FOV,
        scene_coords=np.arange(num_frames, dtype=np.float64),
        cyclic=True,
        period=float(num_frames),
    )


def _impossible_staircase(num_frames, rise=0.05):
    # Same floor plan as the circuit but every flight ascends, so the two
    # trajectory end points differ in height. Loop-closing windows that cross
    # the seam get replacement conditioning poses on the straight line
    # between the last and first pose, bridging the height gap continuously.
    xy, yaw = _rectangle_path(num_frames)
    z = rise * np.arange(num_frames, dtype=np.float64)
    positions = np.column_stack([xy, z])
    coords = np.arange(num_frames, dtype=np.float64)

    p_end = positions[-1]
    p_start = positions[0]
    yaw_end, yaw_start = yaw[-1], yaw[0]

    def _bridge(fracs, coord_base):
        out = []
        for f, c in zip(fracs, coord_base):
            pos = tuple((1 - f) * p_end + f * p_start)
            y = (1 - f) * yaw_end + f * yaw_start
            out.append((pos, float(y), float(c)))
        return tuple(out)

    # Two wrapped slots on each side of the seam share the same two bridge
    # stations; coordinates sit inside the one-step gap between the last
    # frame (coord T-1) and frame 0 (coord T = 0 mod period). Entries are
    # ordered by the slot's desired coordinate.
    stations = [num_frames - 1 + 1 / 3, num_frames - 1 + 2 / 3]
    forward = _bridge([1 / 3, 2 / 3], stations)
    backward = _bridge([1 / 3, 2 / 3], stations)
    return Trajectory(
        name="impossible_staircase",
        positions=positions,
        yaws=yaw,
        fov=_DEFAULT_FOV,
        scene_coords=coords,
        cyclic=True,
        period=float(num_frames),
        conditioning_overrides=SeamOverride(forward=forward, backward=backward),
    )


def _forward_orbit_backward(num_frames, orbit_fraction=0.2):
    # Collinear forward and backward segments joined by a 180-degree orbit.
    # The scene coordinate is the position along the line, so the backward
    # segment revisits the forward segment's coordinates in reverse.
    orbit = int(round(num_frames * orbit_fraction / 4)) * 4
    straight = (num_frames - orbit) // 2
    if straight < 4 or orbit < 4 or straight + straight + orbit != num_frames:
        raise ConfigurationError("frame count incompatible with forward/orbit/backward split")
    coords = np.empty(num_frames)
    yaws = np.empty(num_frames)
    coords[:straight] = np.arange(straight)
    yaws[:straight] = 0.0
    far = float(straight)
    coords[straight:straight + orbit] = far
    yaws[straight:straight + orbit] = math.pi * np.arange(orbit) / orbit
    coords[straight + orbit:] = np.arange(straight - 1, -1, -1)
    yaws[straight + orbit:] = math.pi
    orbit_radius = 1.0
    positions = np.column_stack([coords, np.zeros(num_frames), np.zeros(num_frames)])
    # Offset the orbit arc sideways so the 3-D path is physical; the scene
    # coordinate (line position) is what the analytic world consumes.
    th = math.pi * np.arange(orbit) / orbit
    positions[straight:straight + orbit, 1] = orbit_radius * np.sin(th)
    return Trajectory(
        name="forward_orbit_backward",
        positions=positions,
        yaws=yaws,
        fov=_DEFAULT_FOV,
        scene_coords=coords,
        cyclic=False,
        period=None,
    )


_GENERATORS = {
    "panorama_1loop": lambda n, **kw: _panorama(n, 1),
    "panorama_2loop": lambda n, **kw: _panorama(n, 2),
    "circle_1loop": lambda n, **kw: _circle(n, 1),
    "circle_2loop": lambda n, **kw: _circle(n, 2),
    "straight_line": lambda n, **kw: _straight_line(n),
    "stairs": lambda n, **kw: _stairs(n, **kw),
    "staircase_circuit": lambda n, **kw: _staircase_circuit(n, **kw),
    "impossible_staircase": lambda n, **kw: _impossible_staircase(n, **kw),
    "forward_orbit_backward": lambda n, **kw: _forward_orbit_backward(n, **kw),
}


def generate_trajectory(name: str, num_frames: int, chunk_size: int = 4, **params) -> Trajectory:
    """Build a benchmark trajectory with ``num_frames`` poses.

    ``num_frames`` must be divisible by ``chunk_size`` so the sequence
    partitions into whole chunks.
    """
    if name not in _GENERATORS:
        raise ConfigurationError(f"unknown trajectory {name!r}; known: {', '.join(BENCHMARK_NAMES)}")
    if num_frames <= 0 or num_frames % chunk_size:
        raise ConfigurationError(
            f"frame count {num_frames} not divisible by chunk size {chunk_size}"
        )
    traj = _GENERATORS[name](num_frames, **params)
    if name.startswith("circle_2") and num_frames % 2:
        raise ConfigurationError("circle_2loop needs an even frame count")
    return traj


def trajectory_to_json(traj: Trajectory) -> dict:
    """JSON document with poses as [x, y, z, yaw] rows."""
    doc = {
        "name": traj.name,
        "fov": traj.fov,
        "cyclic": traj.cyclic,
        "period": traj.period,
        "poses": [
            [float(x), float(y), float(z), float(w)]
            for (x, y, z), w in zip(traj.positions, traj.yaws)
        ],
        "scene_coords": [float(c) for c in traj.scene_coords],
    }
    if traj.conditioning_overrides is not None:
        ov = traj.conditioning_overrides
        doc["conditioning_overrides"] = {
            side: [[*pos, yaw, coord] for pos, yaw, coord in seg]
            for side, seg in (("forward", ov.forward), ("backward", ov.backward))
        }
    return doc
