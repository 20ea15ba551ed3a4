"""Closed-form linear-Gaussian scene worlds and their exact denoisers.

A world is a stationary Gaussian field over a 1-D grid (circular for loop
trajectories, a segment otherwise). A camera pose maps to a scene coordinate
and renders D rays through a sparse interpolation matrix; a whole trajectory
is therefore a linear observation of one scene draw, which makes the
posterior-mean denoiser, frame covariances, and consistency metrics exact.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import rng
from .errors import CapacityError, ConfigurationError, InputError, NumericGuardError
from .guidance import WindowInput
from .trajectories import Trajectory

JITTERS = (1e-8, 1e-7, 1e-6)


@dataclass(eq=False)
class World:
    """Stationary Gaussian scene on a grid with pose-dependent ray rendering.

    grid_size: number of scene samples M.
    rays_per_frame: rays D rendered per frame; ray spacing is one grid step,
        so a frame's footprint spans D grid steps.
    length_scale: kernel correlation length in grid steps (unit variance).
    spacing: world units per grid step (scene_coord / spacing = grid position).
    cyclic: wrap the grid into a ring of period grid_size * spacing.
    origin: world coordinate of grid index 0 (open worlds only).
    """

    grid_size: int
    rays_per_frame: int = 8
    length_scale: float = 6.0
    spacing: float = 1.0
    cyclic: bool = False
    origin: float = 0.0
    _caches: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if self.grid_size < 2 * self.rays_per_frame:
            raise ConfigurationError("grid too small for the frame footprint")
        if self.length_scale <= 0 or self.spacing <= 0:
            raise ConfigurationError("length_scale and spacing must be positive")

    @property
    def footprint(self) -> float:
        """Footprint width in world units (field of view for angle worlds)."""
        return self.rays_per_frame * self.spacing

    @property
    def period(self) -> float | None:
        return self.grid_size * self.spacing if self.cyclic else None

    # -- scene covariance ---------------------------------------------------

    def scene_covariance(self) -> np.ndarray:
        """Stationary unit-variance kernel matrix over the grid."""
        cached = self._caches.get("cov")
        if cached is not None:
            return cached
        idx = np.arange(self.grid_size, dtype=np.float64)
        d = np.abs(idx[:, None] - idx[None, :])
        if self.cyclic:
            # Periodic kernel: u ~ d for small separations, smooth wrap.
            u = (self.grid_size / np.pi) * np.sin(np.pi * d / self.grid_size)
        else:
            u = d
        cov = np.exp(-(u**2) / (2 * self.length_scale**2))
        with self._lock:
            self._caches.setdefault("cov", cov)
        return self._caches["cov"]

    def _scene_factor(self) -> np.ndarray:
        cached = self._caches.get("chol")
        if cached is not None:
            return cached
        cov = self.scene_covariance()
        for j in JITTERS:
            try:
                f = np.linalg.cholesky(cov + j * np.eye(self.grid_size))
                break
            except np.linalg.LinAlgError:
                f = None
        if f is None:
            raise NumericGuardError("scene covariance not positive definite within jitter budget")
        with self._lock:
            self._caches.setdefault("chol", f)
        return self._caches["chol"]

    # -- rendering ------------------------------------------------------------

    def grid_position(self, coord: float) -> float:
        g = (float(coord) - self.origin) / self.spacing
        return g % self.grid_size if self.cyclic else g

    def ray_positions(self, coord: float) -> np.ndarray:
        """Grid positions of the D rays spanning the footprint at ``coord``."""
        g = self.grid_position(coord)
        return g - self.rays_per_frame / 2 + np.arange(self.rays_per_frame)

    def render_map(self, coord: float) -> np.ndarray:
        """(D, M) interpolation matrix; rows sum to 1 with <= 2 nonzeros.

        Poses aligned with the grid produce exact 0/1 selection rows.
        """
        pos = self.ray_positions(coord)
        a = np.zeros((self.rays_per_frame, self.grid_size))
        rounded = np.round(pos)
        snap = np.abs(pos - rounded) < 1e-9
        lo = np.where(snap, rounded, np.floor(pos)).astype(int)
        w = np.where(snap, 0.0, pos - np.floor(pos))
        hi = lo + 1
        if self.cyclic:
            lo %= self.grid_size
            hi %= self.grid_size
        else:
            if lo.min() < 0 or np.any((hi > self.grid_size - 1) & (w > 0)):
                raise InputError(f"footprint at coord {coord} falls outside the open grid")
            hi = np.minimum(hi, self.grid_size - 1)
        rows = np.arange(self.rays_per_frame)
        a[rows, lo] = 1 - w
        a[rows, hi] += w
        return a

    def frame_grid_indices(self, coord: float) -> np.ndarray | None:
        """Grid indices viewed by the frame, or None when not sample-aligned."""
        pos = self.ray_positions(coord)
        rounded = np.round(pos)
        if np.max(np.abs(pos - rounded)) > 1e-9:
            return None
        idx = rounded.astype(int)
        if self.cyclic:
            return idx % self.grid_size
        if idx.min() < 0 or idx.max() >= self.grid_size:
            return None
        return idx

    def fov_overlap(self, coord_i: float, coord_j: float) -> float:
        """Fraction of frame i's rays whose scene sample lies in frame j's footprint."""
        gi = self.grid_position(coord_i)
        gj = self.grid_position(coord_j)
        delta = gi - gj
        if self.cyclic:
            delta = (delta + self.grid_size / 2) % self.grid_size - self.grid_size / 2
        offsets = -self.rays_per_frame / 2 + np.arange(self.rays_per_frame) + delta
        half = self.rays_per_frame / 2
        inside = (offsets >= -half) & (offsets < half)
        return float(np.mean(inside))

    def stack_render(self, coords) -> np.ndarray:
        """Stacked render maps for a list of coordinates: (n*D, M)."""
        return np.vstack([self.render_map(c) for c in np.atleast_1d(coords)])

    def stationary_frame_cov(self) -> np.ndarray:
        """Per-frame marginal covariance C0 = A S A^T, pose independent for
        aligned interior footprints by stationarity."""
        cached = self._caches.get("c0")
        if cached is not None:
            return cached
        ref = self.origin + self.footprint  # interior, grid aligned
        a = self.render_map(ref)
        c0 = a @ self.scene_covariance() @ a.T
        with self._lock:
            self._caches.setdefault("c0", c0)
        return self._caches["c0"]


def sample_scene(world: World, seed: int) -> np.ndarray:
    """Draw one scene s ~ N(0, S) from the keyed stream."""
    z = rng.normal(world.grid_size, seed, rng.SCENE)
    return world._scene_factor() @ z


def ground_truth_video(world: World, traj: Trajectory, seed: int) -> np.ndarray:
    """Render a scene draw along the trajectory: (T, D) frame values."""
    s = sample_scene(world, seed)
    return np.stack([world.render_map(c) @ s for c in traj.scene_coords])


def sequence_render(world: World, traj: Trajectory) -> np.ndarray:
    """(T*D, M) observation matrix of the whole trajectory."""
    return world.stack_render(traj.scene_coords)


def sequence_covariance(world: World, traj: Trajectory) -> np.ndarray:
    """Analytic prior covariance of the flattened ground-truth video."""
    a = sequence_render(world, traj)
    return a @ world.scene_covariance() @ a.T


def world_for_trajectory(
    traj: Trajectory,
    rays_per_frame: int = 8,
    grid_size: int | None = None,
    length_scale: float = 6.0,
) -> World:
    """Build a world whose grid aligns with the trajectory's frame steps.

    Cyclic trajectories get a ring grid whose size is a multiple of the
    frame count (96 when that divides evenly, mirroring the panorama
    default); open trajectories get a segment with footprint margins
    (at least 256 samples, the corridor default).
    """
    n = traj.num_frames
    if traj.cyclic:
        step = float(traj.scene_coords[1] - traj.scene_coords[0]) if n > 1 else traj.period
        base = traj.period / step
        if abs(base - round(base)) > 1e-9:
            raise ConfigurationError("trajectory step does not divide the loop period")
        base = int(round(base))
        if grid_size is None:
            # One grid step per frame step keeps revisit detection sharp;
            # scale up only when the loop is too short for the footprint.
            mult = max(1, -(-2 * rays_per_frame // base))
            grid_size = mult * base
        if grid_size % base:
            raise ConfigurationError(
                f"grid size {grid_size} must be a multiple of {base} frame steps per loop"
            )
        spacing = traj.period / grid_size
        return World(grid_size=grid_size, rays_per_frame=rays_per_frame,
                     length_scale=length_scale, spacing=spacing, cyclic=True)
    span = float(traj.scene_coords.max() - traj.scene_coords.min())
    pad = 2 * rays_per_frame
    needed = int(np.ceil(span)) + 2 * pad + 1
    if grid_size is None:
        grid_size = max(256, needed)
    elif grid_size < needed:
        raise ConfigurationError(f"grid size {grid_size} too small; need {needed}")
    origin = float(traj.scene_coords.min()) - pad
    return World(grid_size=grid_size, rays_per_frame=rays_per_frame,
                 length_scale=length_scale, spacing=1.0, cyclic=False, origin=origin)


# -- exact denoisers ----------------------------------------------------------


def _solve_spd(mat: np.ndarray):
    """Cholesky factor with jitter escalation."""
    for j in JITTERS:
        try:
            return scipy.linalg.cho_factor(mat + j * np.eye(mat.shape[0]), lower=True)
        except scipy.linalg.LinAlgError:
            continue
    raise NumericGuardError("linear system not positive definite within jitter budget")


class OracleDenoiser:
    """Exact noise predictor for a world: the posterior-mean denoiser.

    Slot geometry is content-determined: every slot is a linear-Gaussian
    observation of the one scene at its coordinate, weighted by its noise
    level, and the posterior mean is computed jointly. Maximum-level slots
    are effectively uninformative, so guidance branches that replace
    neighbors with pure noise lose exactly the neighbor information while
    kept slots retain their content-implied coupling; this keeps the
    conditional branch sharper than the null branch on target slots and
    guidance stable at every scale. Calls are pure and thread-safe;
    factorizations are cached per (coords, levels) pattern.
    """

    def __init__(self, world: World, noise_schedule, context_length: int = 8, cache_size: int = 8192):
        self.world = world
        self.schedule = noise_schedule
        self.context_length = context_length
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size
        self._lock = threading.Lock()

    @property
    def frame_dim(self) -> int:
        return self.world.rays_per_frame

    # joint posterior pieces for pose-conditioned slots
    def _joint(self, coords: tuple, levels: tuple):
        key = ("joint", coords, levels)
        with self._lock:
            if key in self._cache:
                self._cache.move_to_end(key)
                return self._cache[key]
        a_stack = self.world.stack_render(np.array(coords))
        prior = a_stack @ self.world.scene_covariance() @ a_stack.T
        d = self.world.rays_per_frame
        ab = self.schedule.alpha_bar[np.asarray(levels)]
        a_vec = np.repeat(np.sqrt(ab), d)
        s2_vec = np.repeat(1 - ab, d)
        gram = (a_vec[:, None] * prior * a_vec[None, :]) + np.diag(s2_vec)
        factor = _solve_spd(gram)
        entry = (factor, prior, a_vec, np.sqrt(s2_vec))
        with self._lock:
            self._cache[key] = entry
            if len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return entry

    def _stationary(self, level: int):
        key = ("null", int(level))
        with self._lock:
            if key in self._cache:
                self._cache.move_to_end(key)
                return self._cache[key]
        c0 = self.world.stationary_frame_cov()
        ab = float(self.schedule.alpha_bar[level])
        factor = _solve_spd(ab * c0 + (1 - ab) * np.eye(c0.shape[0]))
        entry = (factor, c0, np.sqrt(ab), np.sqrt(1 - ab))
        with self._lock:
            self._cache[key] = entry
            if len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return entry

    def eps(self, inp: WindowInput) -> np.ndarray:
        """Per-slot noise prediction; deterministic function of the input."""
        inp.validate()
        if inp.num_slots > self.context_length:
            raise CapacityError(
                f"{inp.num_slots} slots exceed context length {self.context_length}"
            )
        values = np.asarray(inp.values, dtype=np.float64)
        d = values.shape[-1]
        if d != self.world.rays_per_frame:
            raise InputError("frame dimension does not match the world's rays_per_frame")
        lead = values.shape[:-2]
        coords = tuple(round(float(c), 9) for c in inp.coords)
        levels = tuple(int(l) for l in inp.noise_levels)
        factor, prior, a_vec, s_vec = self._joint(coords, levels)
        n = inp.num_slots * d
        y = values.reshape(-1, n)
        u = scipy.linalg.cho_solve(factor, y.T).T
        x_hat = (a_vec * u) @ prior  # prior symmetric
        eps = (y - a_vec * x_hat) / s_vec
        return eps.reshape(*lead, inp.num_slots, d)

    def stationary_eps(self, inp: WindowInput) -> np.ndarray:
        """Pose-free baseline prediction: independent stationary marginal per
        slot, no cross-slot coupling."""
        inp.validate()
        values = np.asarray(inp.values, dtype=np.float64)
        d = values.shape[-1]
        lead = values.shape[:-2]
        out = np.empty_like(values)
        for level in np.unique(inp.noise_levels):
            sel = np.flatnonzero(inp.noise_levels == level)
            factor, c0, a, s = self._stationary(int(level))
            y = values[..., sel, :].reshape(-1, d)
            u = scipy.linalg.cho_solve(factor, y.T).T
            x_hat = a * (u @ c0)
            eps = (y - a * x_hat) / s
            out[..., sel, :] = eps.reshape(*lead, sel.size, d)
        return out


def oracle_eps(world: World, noise_schedule, inp: WindowInput) -> np.ndarray:
    """Joint posterior-mean noise prediction; requires pose conditioning on
    every slot."""
    if np.any(inp.null_mask):
        raise InputError("oracle_eps requires pose conditioning on all slots")
    return OracleDenoiser(world, noise_schedule, context_length=inp.num_slots).eps(inp)


def null_oracle_eps(world: World, noise_schedule, inp: WindowInput) -> np.ndarray:
    """Pose-free noise prediction: independent stationary marginal per slot,
    identical for every pose by translation equivariance. Conditioning is
    ignored entirely."""
    den = OracleDenoiser(world, noise_schedule, context_length=inp.num_slots)
    return den.stationary_eps(inp)


def conditional_moments(world: World, noise_schedule, inp: WindowInput):
    """Posterior mean and covariance of the window frames given the noisy
    observations (pose-conditioned slots only). For tests and diagnostics."""
    if np.any(inp.null_mask):
        raise InputError("conditional_moments requires pose conditioning on all slots")
    d = world.rays_per_frame
    a_stack = world.stack_render(inp.coords)
    prior = a_stack @ world.scene_covariance() @ a_stack.T
    ab = noise_schedule.alpha_bar[np.asarray(inp.noise_levels)]
    a_vec = np.repeat(np.sqrt(ab), d)
    s2_vec = np.repeat(1 - ab, d)
    gram = (a_vec[:, None] * prior * a_vec[None, :]) + np.diag(s2_vec)
    factor = _solve_spd(gram)
    y = np.asarray(inp.values, dtype=np.float64).reshape(-1)
    u = scipy.linalg.cho_solve(factor, y)
    mean = prior @ (a_vec * u)
    gain = scipy.linalg.cho_solve(factor, (a_vec[:, None] * prior))
    cov = prior - (prior * a_vec[None, :]) @ gain
    return mean.reshape(inp.num_slots, d), cov
