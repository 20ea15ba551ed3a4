"""Denoiser call contract and guidance compositions.

A denoiser consumes one context window at a time: per-slot values, per-slot
noise levels, and per-slot conditioning (a camera pose or the null
condition) and returns a noise estimate per slot. Guidance builds a steered
estimate from a small number of denoiser calls with modified inputs; all
compositions here are affine in the branch outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace as _dc_replace
from typing import Protocol

import numpy as np

from .errors import ConfigurationError, InputError


@dataclass(frozen=True)
class Conditioning:
    """Per-slot conditioning: a pose (with its scene coordinate) or null."""

    pose: tuple[float, float, float, float] | None = None  # [x, y, z, yaw]
    coord: float = 0.0

    @property
    def is_null(self) -> bool:
        return self.pose is None


NULL = Conditioning()


@dataclass(frozen=True)
class WindowInput:
    """One context window as handed to a denoiser.

    values: (..., L, D) frame values, optionally with leading sample axes.
    noise_levels: (L,) level index per slot.
    poses: (L, 4) rows of [x, y, z, yaw]; ignored where null_mask is set.
    coords: (L,) scene coordinate per slot (what the analytic world reads).
    null_mask: (L,) True where the slot carries the null condition.
    target_mask: (L,) True on the slots written back by the sampler.
    """

    values: np.ndarray
    noise_levels: np.ndarray
    poses: np.ndarray
    coords: np.ndarray
    null_mask: np.ndarray
    target_mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "noise_levels", np.asarray(self.noise_levels, dtype=np.int64))
        object.__setattr__(self, "poses", np.asarray(self.poses, dtype=np.float64))
        object.__setattr__(self, "coords", np.asarray(self.coords, dtype=np.float64))
        object.__setattr__(self, "null_mask", np.asarray(self.null_mask, dtype=bool))
        object.__setattr__(self, "target_mask", np.asarray(self.target_mask, dtype=bool))

    @property
    def num_slots(self) -> int:
        return int(self.noise_levels.size)

    def validate(self):
        l = self.num_slots
        if self.values.ndim < 2 or self.values.shape[-2] != l:
            raise InputError(f"values shape {self.values.shape} disagrees with {l} slots")
        for name in ("noise_levels", "coords", "null_mask", "target_mask"):
            if getattr(self, name).shape != (l,):
                raise InputError(f"{name} must have shape ({l},)")
        if self.poses.shape != (l, 4):
            raise InputError(f"poses must have shape ({l}, 4)")

    def replace(self, **kw) -> "WindowInput":
        return _dc_replace(self, **kw)

    def conditioning(self) -> list[Conditioning]:
        """Per-slot tagged view of the conditioning arrays."""
        return [
            NULL if self.null_mask[i] else Conditioning(tuple(self.poses[i]), float(self.coords[i]))
            for i in range(self.num_slots)
        ]


class Denoiser(Protocol):
    """Stateless per-window noise predictor with a bounded context length."""

    context_length: int
    frame_dim: int

    def eps(self, inp: WindowInput) -> np.ndarray: ...


@dataclass(frozen=True)
class GuidanceConfig:
    """Guidance scales. ``merged`` uses the single scale gamma; ``two_term``
    separates the camera-adherence scale gamma1 from the neighbor-consistency
    scale gamma2."""

    gamma: float = 1.0
    gamma1: float | None = None
    gamma2: float | None = None
    mode: str = "merged"

    def __post_init__(self):
        if self.mode not in ("merged", "two_term"):
            raise ConfigurationError(f"unknown guidance mode {self.mode!r}")
        if self.mode == "merged" and self.gamma < 0:
            raise ConfigurationError("gamma must be >= 0")
        if self.mode == "two_term":
            if self.gamma1 is None or self.gamma2 is None:
                raise ConfigurationError("two_term mode needs gamma1 and gamma2")
            if self.gamma1 < 0 or self.gamma2 < 0:
                raise ConfigurationError("gamma1/gamma2 must be >= 0")


def null_variant(inp: WindowInput, keep_mask, fresh_noise, max_level: int) -> WindowInput:
    """Unconditioned variant of a window.

    Slots outside ``keep_mask`` become fresh pure noise at the maximum level;
    every slot's conditioning becomes null; kept slots keep their values and
    levels. Idempotent on conditioning and never alters kept values.
    """
    keep = np.asarray(keep_mask, dtype=bool)
    if keep.shape != (inp.num_slots,):
        raise InputError("keep_mask length disagrees with the window")
    values = np.array(inp.values, copy=True)
    levels = np.array(inp.noise_levels, copy=True)
    drop = np.flatnonzero(~keep)
    if drop.size:
        fresh = np.asarray(fresh_noise, dtype=np.float64)
        if fresh.shape[-2:] != (drop.size, values.shape[-1]):
            raise InputError(
                f"fresh_noise must cover {drop.size} dropped slots of width {values.shape[-1]}"
            )
        values[..., drop, :] = fresh
        levels[drop] = max_level
    return inp.replace(values=values, noise_levels=levels,
                       null_mask=np.ones(inp.num_slots, dtype=bool))


def noised_neighbors_variant(inp: WindowInput, keep_mask, fresh_noise, max_level: int) -> WindowInput:
    """Like :func:`null_variant` but pose conditioning is kept on every slot;
    only the values and levels outside ``keep_mask`` are replaced."""
    out = null_variant(inp, keep_mask, fresh_noise, max_level)
    return out.replace(null_mask=np.array(inp.null_mask, copy=True))


def _contiguous(mask: np.ndarray) -> bool:
    on = np.flatnonzero(mask)
    return on.size > 0 and on[-1] - on[0] + 1 == on.size


def guided_eps(denoiser: Denoiser, inp: WindowInput, cfg: GuidanceConfig,
               fresh_noise, max_level: int) -> np.ndarray:
    """Guided noise prediction that strengthens conditioning on the target
    chunk's neighbors and camera poses.

    merged:   (1 + g) * eps(full) - g * eps(target-only, all null)
    two_term: (1 + g1 + g2) * eps(full) - g1 * eps(values kept, null poses)
              - g2 * eps(neighbors noised, poses kept)

    The same ``fresh_noise`` is reused by every branch that replaces
    neighbor values, so guided sampling stays reproducible.
    """
    if not _contiguous(inp.target_mask):
        raise InputError("guidance requires a contiguous target chunk")
    if cfg.mode == "merged":
        if cfg.gamma == 0:
            return denoiser.eps(inp)
        eps_full = denoiser.eps(inp)
        eps_null = denoiser.eps(null_variant(inp, inp.target_mask, fresh_noise, max_level))
        return (1 + cfg.gamma) * eps_full - cfg.gamma * eps_null
    eps_full = denoiser.eps(inp)
    keep_all = np.ones(inp.num_slots, dtype=bool)
    eps_uncond_pose = denoiser.eps(null_variant(inp, keep_all, fresh_noise, max_level))
    eps_target_only = denoiser.eps(
        noised_neighbors_variant(inp, inp.target_mask, fresh_noise, max_level)
    )
    g1, g2 = cfg.gamma1, cfg.gamma2
    return (1 + g1 + g2) * eps_full - g1 * eps_uncond_pose - g2 * eps_target_only


def history_guided_eps(denoiser: Denoiser, inp: WindowInput, history_mask,
                       gamma_h: float, fresh_noise, max_level: int) -> np.ndarray:
    """Joint guidance on history frames and camera conditioning.

    The negative branch drops history and poses together: every non-target
    slot becomes pure noise and all conditioning goes null.
    """
    history = np.asarray(history_mask, dtype=bool)
    if np.any(history & inp.target_mask):
        raise InputError("history slots cannot be target slots")
    if gamma_h == 0:
        return denoiser.eps(inp)
    eps_cond = denoiser.eps(inp)
    eps_uncond = denoiser.eps(null_variant(inp, inp.target_mask, fresh_noise, max_level))
    return (1 + gamma_h) * eps_cond - gamma_h * eps_uncond


def pose_cfg_eps(denoiser: Denoiser, inp: WindowInput, scale: float,
                 max_level: int) -> np.ndarray:
    """Camera-only classifier-free guidance in the baseline convention,
    where scale 1 means no guidance: scale*eps(cond) - (scale-1)*eps(pose-null).

    The negative branch keeps every slot's values and levels and only drops
    the pose conditioning.
    """
    if scale == 1:
        return denoiser.eps(inp)
    eps_cond = denoiser.eps(inp)
    keep_all = np.ones(inp.num_slots, dtype=bool)
    empty = np.zeros(inp.values.shape[:-2] + (0, inp.values.shape[-1]))
    eps_uncond = denoiser.eps(null_variant(inp, keep_all, empty, max_level))
    return scale * eps_cond - (scale - 1) * eps_uncond
