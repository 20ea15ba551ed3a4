"""Noise schedules, forward noising, and the stochastic denoising update.

``alpha_bar`` is the cumulative signal fraction: a frame at level ``k`` is
``sqrt(alpha_bar[k]) * x0 + sqrt(1 - alpha_bar[k]) * eps``. Level ``K-1`` is
pure noise and level 0 is effectively clean — alpha_bar is clamped inside
``[ALPHA_CLAMP, 1 - ALPHA_CLAMP]`` so the noise decomposition stays well
defined everywhere and clean-sample prediction never divides by zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InputError, NumericGuardError

ALPHA_CLAMP = 1e-5

SCHEDULE_KINDS = ("cosine", "linear_alpha")


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal levels plus the subset used at sampling time.

    alpha_bar: (K,) strictly decreasing in k, values in (0, 1).
    inference_levels: (S,) level indices ordered as visited while sampling,
        from pure noise (K-1) down to effectively clean (0).
    """

    alpha_bar: np.ndarray
    inference_levels: np.ndarray

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        levels = np.asarray(self.inference_levels, dtype=np.int64)
        object.__setattr__(self, "alpha_bar", ab)
        object.__setattr__(self, "inference_levels", levels)
        if ab.ndim != 1 or ab.size < 2:
            raise ConfigurationError("alpha_bar must be a 1-d array with K >= 2")
        if not np.all(np.diff(ab) < 0):
            raise ConfigurationError("alpha_bar must be strictly decreasing")
        if ab[0] < 1 - 1e-4 or ab[-1] > 1e-4:
            raise ConfigurationError("alpha_bar endpoints outside clamped range")
        if levels.ndim != 1 or levels.size < 2:
            raise ConfigurationError("inference_levels must hold at least 2 levels")
        if levels[0] != ab.size - 1:
            raise ConfigurationError("inference must start at the pure-noise level K-1")
        if np.any(levels < 0) or np.any(levels >= ab.size):
            raise ConfigurationError("inference level out of range")
        if not np.all(np.diff(levels) < 0):
            raise ConfigurationError("inference_levels must be strictly decreasing in k")

    @property
    def num_levels(self) -> int:
        return int(self.alpha_bar.size)

    @property
    def max_level(self) -> int:
        return self.num_levels - 1

    @property
    def num_inference_steps(self) -> int:
        return int(self.inference_levels.size)


@dataclass(frozen=True)
class StochasticityConfig:
    """Stochasticity level eta in [0, 1]; 1 removes the predicted-noise term."""

    eta: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigurationError(f"eta must lie in [0, 1], got {self.eta}")


def build_schedule(num_levels: int, kind: str = "cosine", num_inference_steps: int = 50) -> NoiseSchedule:
    """Construct a clamped alpha_bar ladder and a linearly spaced inference subset."""
    if num_levels < 2:
        raise ConfigurationError(f"need at least 2 noise levels, got {num_levels}")
    if not 2 <= num_inference_steps <= num_levels:
        raise ConfigurationError(
            f"inference steps must lie in [2, {num_levels}], got {num_inference_steps}"
        )
    k = np.arange(num_levels, dtype=np.float64)
    if kind == "cosine":
        s = 0.008
        f = np.cos((k / (num_levels - 1) + s) / (1 + s) * math.pi / 2) ** 2
        ab = f / f[0]
    elif kind == "linear_alpha":
        ab = np.linspace(1.0, 0.0, num_levels)
    else:
        raise ConfigurationError(f"unknown schedule kind {kind!r}")
    ab = np.clip(ab, ALPHA_CLAMP, 1 - ALPHA_CLAMP)
    # Clamping can flatten the extreme entries; restore strict monotonicity
    # with a negligible tilt so downstream level comparisons stay strict.
    tilt = np.linspace(0.0, 1e-12 * num_levels, num_levels)
    ab = ab - tilt
    levels = np.round(np.linspace(num_levels - 1, 0, num_inference_steps)).astype(np.int64)
    return NoiseSchedule(alpha_bar=ab, inference_levels=levels)


def _level_alpha(schedule: NoiseSchedule, level) -> np.ndarray:
    ab = schedule.alpha_bar[np.asarray(level)]
    # Per-slot level vectors index the second-to-last value axis.
    return ab[..., None] if np.ndim(ab) else ab


def forward_noise(schedule: NoiseSchedule, x0, level, eps) -> np.ndarray:
    """Noise clean values to ``level``: sqrt(ab)*x0 + sqrt(1-ab)*eps."""
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if x0.shape != eps.shape:
        raise InputError(f"x0 shape {x0.shape} != eps shape {eps.shape}")
    ab = _level_alpha(schedule, level)
    return np.sqrt(ab) * x0 + np.sqrt(1 - ab) * eps


def predict_clean(schedule: NoiseSchedule, xk, eps_hat, level) -> np.ndarray:
    """Invert forward noising given a noise estimate.

    Exact inverse of :func:`forward_noise` when ``eps_hat`` equals the noise
    that produced ``xk``.
    """
    xk = np.asarray(xk, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    ab = _level_alpha(schedule, level)
    if np.any(ab < ALPHA_CLAMP * 0.5):
        raise NumericGuardError("alpha_bar below clamp floor in predict_clean")
    return (xk - np.sqrt(1 - ab) * eps_hat) / np.sqrt(ab)


def sigma_level(cfg: StochasticityConfig, schedule: NoiseSchedule, level_prev) -> float:
    """Injected-noise scale for a step landing on ``level_prev``.

    eta = 1 gives the maximum value sqrt(1 - alpha_bar[level_prev]), at which
    the predicted-noise term of the denoising update vanishes entirely.
    """
    ab_prev = schedule.alpha_bar[np.asarray(level_prev)]
    return cfg.eta * np.sqrt(1 - ab_prev)


def ddim_step(schedule: NoiseSchedule, xk, eps_hat, level, level_prev, sigma, noise) -> np.ndarray:
    """One denoising update from ``level`` to the less-noisy ``level_prev``.

    sqrt(ab')*x0_hat + sqrt(1 - ab' - sigma^2)*eps_hat + sigma*noise, where
    x0_hat is the clean-sample prediction at ``level``. ``sigma`` trades the
    predicted-noise term against fresh randomness.
    """
    ab_prev = _level_alpha(schedule, level_prev)
    ab = _level_alpha(schedule, level)
    if not np.all(ab_prev > ab):
        raise ConfigurationError("level_prev must be strictly less noisy than level")
    sigma = np.asarray(sigma, dtype=np.float64)
    radicand = 1 - ab_prev - sigma**2
    if np.any(radicand < -1e-9):
        raise ConfigurationError("sigma^2 exceeds 1 - alpha_bar[level_prev]")
    radicand = np.maximum(radicand, 0.0)
    x0_hat = predict_clean(schedule, xk, eps_hat, level)
    noise = np.asarray(noise, dtype=np.float64)
    return np.sqrt(ab_prev) * x0_hat + np.sqrt(radicand) * np.asarray(eps_hat) + sigma * noise
