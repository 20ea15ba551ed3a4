"""Exact consistency metrics against the analytic world.

Frames that share scene grid samples can be compared exactly: the
frame-to-frame metric averages squared disagreement over shared samples of
consecutive frames, the long-range metric does the same over temporally
distant but spatially overlapping pairs, and both are exactly zero on any
ground-truth rendering. High-frequency energy tracks oversmoothing, and the
covariance error measures distributional fidelity against the analytic
prior.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .trajectories import Trajectory
from .world import World


@dataclass
class MetricReport:
    f2fc: float
    lrc: float | None                 # None when no qualifying pairs exist
    hf_energy: float
    cov_error: float | None = None
    f2fc_pairs: list = field(default_factory=list)   # (frame_i, frame_j, msd)
    lrc_pairs: list = field(default_factory=list)


def _shared_sample_msd(video, gi, gj, i, j):
    """Mean squared difference over grid samples viewed by both frames."""
    shared, ia, ib = np.intersect1d(gi, gj, return_indices=True)
    if shared.size == 0:
        return None
    d = video[i, ia] - video[j, ib]
    return float(np.mean(d * d))


def _grid_index_table(world: World, traj: Trajectory):
    return [world.frame_grid_indices(c) for c in traj.scene_coords]


def f2fc_proxy(video: np.ndarray, traj: Trajectory, world: World,
               pairs_out: list | None = None) -> float:
    """Squared disagreement on shared scene samples, averaged over every
    pair of consecutive frames. Exactly zero for ground-truth renderings."""
    video = np.asarray(video)
    if video.shape != (traj.num_frames, world.rays_per_frame):
        raise InputError(f"video shape {video.shape} disagrees with the trajectory/world")
    table = _grid_index_table(world, traj)
    vals = []
    for i in range(traj.num_frames - 1):
        gi, gj = table[i], table[i + 1]
        if gi is None or gj is None:
            warnings.warn(f"frames {i},{i + 1} not sample aligned; pair skipped")
            continue
        msd = _shared_sample_msd(video, gi, gj, i, i + 1)
        if msd is None:
            warnings.warn(f"frames {i},{i + 1} share no scene samples; pair skipped")
            continue
        vals.append(msd)
        if pairs_out is not None:
            pairs_out.append((i, i + 1, msd))
    if not vals:
        raise InputError("no consecutive frame pair shares scene samples")
    return float(np.mean(vals))


def lrc_proxy(video: np.ndarray, traj: Trajectory, world: World,
              threshold: float = 0.5, min_gap: int = 12,
              pairs_out: list | None = None) -> float | None:
    """Same shared-sample discrepancy over frame pairs with temporal gap
    >= ``min_gap`` and footprint overlap >= ``threshold``; None when no pair
    qualifies (trajectories without revisits)."""
    video = np.asarray(video)
    table = _grid_index_table(world, traj)
    coords = traj.scene_coords
    vals = []
    n = traj.num_frames
    for i in range(n):
        for j in range(i + min_gap, n):
            if world.fov_overlap(coords[i], coords[j]) < threshold:
                continue
            gi, gj = table[i], table[j]
            if gi is None or gj is None:
                continue
            msd = _shared_sample_msd(video, gi, gj, i, j)
            if msd is None:
                continue
            vals.append(msd)
            if pairs_out is not None:
                pairs_out.append((i, j, msd))
    if not vals:
        return None
    return float(np.mean(vals))


def hf_energy(video: np.ndarray) -> float:
    """Mean squared within-frame first difference; drops under oversmoothing."""
    video = np.asarray(video)
    if video.ndim != 2 or video.shape[1] < 2:
        raise InputError("need (frames, rays) values with at least 2 rays")
    d = np.diff(video, axis=1)
    return float(np.mean(d * d))


def cov_error(samples: np.ndarray, analytic_cov: np.ndarray) -> float:
    """Relative Frobenius error of the sample covariance versus the analytic
    covariance. Samples are rows, flattened."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] < 2:
        raise InputError("need at least 2 flattened samples")
    mu = samples.mean(axis=0)
    centered = samples - mu
    sample_cov = centered.T @ centered / (samples.shape[0] - 1)
    return float(np.linalg.norm(sample_cov - analytic_cov, "fro")
                 / np.linalg.norm(analytic_cov, "fro"))


def compute_report(video: np.ndarray, traj: Trajectory, world: World,
                   lrc_threshold: float = 0.5, lrc_min_gap: int = 12) -> MetricReport:
    """All per-video metrics in one pass."""
    f2fc_pairs: list = []
    lrc_pairs: list = []
    f2fc = f2fc_proxy(video, traj, world, pairs_out=f2fc_pairs)
    lrc = lrc_proxy(video, traj, world, lrc_threshold, lrc_min_gap, pairs_out=lrc_pairs)
    return MetricReport(f2fc=f2fc, lrc=lrc, hf_energy=hf_energy(video),
                        f2fc_pairs=f2fc_pairs, lrc_pairs=lrc_pairs)
