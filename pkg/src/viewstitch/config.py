"""Run configuration documents: schema validation and execution.

A run config is a JSON object selecting a sampler, a benchmark trajectory,
the world and schedule parameters, and the sampler knobs. Validation is
strict: unknown keys anywhere in the document are rejected before anything
runs, so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

import copy
import hashlib
import json
import time
from pathlib import Path

import numpy as np

from .artifacts import write_pgm, write_sequence
from .baselines import ArConfig, StochSyncConfig
from .errors import ConfigurationError
from .experiments import (LOOP_TRAJECTORIES, SAMPLERS, ExperimentGrid, Setup,
                          build_setup, run_sampler)
from .metrics import compute_report
from .trajectories import BENCHMARK_NAMES, trajectory_to_json
from .windows import schedule_to_json

_DEFAULTS = {
    "sampler": "gvs",
    "seed": 0,
    "trajectory": {"name": "panorama_1loop", "frames": 120, "params": {}},
    "world": {"rays_per_frame": 8, "grid_size": None, "length_scale": 6.0},
    "schedule": {"kind": "cosine", "levels": 1000, "steps": 50},
    "sampling": {
        "eta": 0.9, "gamma": 1.0, "guidance_mode": "merged",
        "gamma1": None, "gamma2": None, "chunk_size": 4, "overlap": 2,
        "execution": "parallel", "loop_closing": None,
        "spatial_threshold": 0.5, "spatial_min_gap": 3,
    },
    "ar": {
        "history_frames": 4, "guidance_scale": 4.0, "stabilization": 0.02,
        "frames_per_step": 4, "retrieval_enabled": False,
        "retrieval_threshold": 0.5, "max_retrieved": 3,
    },
    "stochsync": {
        "level_start": 900, "level_stop": 270, "outer_steps": 25,
        "window_size": 8, "window_offset": 4, "inner_steps_start": 50,
        "inner_steps_end": 1, "guidance_scale": 4.0,
    },
    "metrics": {"lrc_threshold": 0.5, "lrc_min_gap": 12},
    "output": {"prefix": "run"},
}


def _merge(defaults, given, path=""):
    if not isinstance(given, dict):
        raise ConfigurationError(f"{path or 'config'} must be an object")
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigurationError(f"unknown config key {here!r}")
        if isinstance(defaults[key], dict) and key != "params":
            out[key] = _merge(defaults[key], value, here)
        else:
            out[key] = copy.deepcopy(value)
    return out


def validate_config(config: dict) -> dict:
    """Fill defaults and reject unknown keys; returns the normalized config."""
    cfg = _merge(_DEFAULTS, config)
    if cfg["sampler"] not in SAMPLERS:
        raise ConfigurationError(f"sampler must be one of {SAMPLERS}")
    if cfg["trajectory"]["name"] not in BENCHMARK_NAMES:
        raise ConfigurationError(f"unknown trajectory {cfg['trajectory']['name']!r}")
    return cfg


def config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def setup_from_config(cfg: dict) -> Setup:
    t, w, s, smp = cfg["trajectory"], cfg["world"], cfg["schedule"], cfg["sampling"]
    return build_setup(
        trajectory=t["name"], frames=int(t["frames"]),
        chunk_size=int(smp["chunk_size"]), overlap=int(smp["overlap"]),
        rays_per_frame=int(w["rays_per_frame"]), grid_size=w["grid_size"],
        length_scale=float(w["length_scale"]), schedule_kind=s["kind"],
        levels=int(s["levels"]), steps=int(s["steps"]),
        spatial_threshold=float(smp["spatial_threshold"]),
        spatial_min_gap=int(smp["spatial_min_gap"]),
        traj_params=t.get("params") or {},
    )


def run_from_config(config: dict, output_dir, seed: int | None = None,
                    sampler: str | None = None, jobs: int = 1) -> dict:
    """Execute a validated run config; writes the sequence dump, sidecar,
    metadata (config echo, wall time, per-step norms), and metric report.
    Returns the output paths."""
    cfg = validate_config(config)
    if seed is not None:
        cfg["seed"] = int(seed)
    if sampler is not None:
        cfg["sampler"] = sampler
        cfg = validate_config(cfg)
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prefix = cfg["output"]["prefix"]

    setup = setup_from_config(cfg)
    smp = cfg["sampling"]
    ar_cfg = ArConfig(**cfg["ar"])
    ss_cfg = StochSyncConfig(**cfg["stochsync"])
    trace: list = []
    t0 = time.perf_counter()
    video = run_sampler(
        setup, sampler=cfg["sampler"], eta=float(smp["eta"]), gamma=float(smp["gamma"]),
        guidance_mode=smp["guidance_mode"], gamma1=smp["gamma1"], gamma2=smp["gamma2"],
        loop_closing=smp["loop_closing"], seed=int(cfg["seed"]),
        execution=smp["execution"], jobs=jobs, ar=ar_cfg, stochsync=ss_cfg, trace=trace,
    )
    wall_ms = (time.perf_counter() - t0) * 1e3
    report = compute_report(video, setup.traj, setup.world,
                            float(cfg["metrics"]["lrc_threshold"]),
                            int(cfg["metrics"]["lrc_min_gap"]))

    seq_path = out_dir / f"{prefix}.bin"
    sidecar_path = out_dir / f"{prefix}.json"
    write_sequence(seq_path, sidecar_path, video, config_hash(cfg))
    meta_path = out_dir / f"{prefix}.meta.json"
    meta = {"config": cfg, "wall_ms": wall_ms, "per_step_norms": trace}
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True))
    metrics_path = out_dir / f"{prefix}.metrics.json"
    metrics_path.write_text(json.dumps(
        {"f2fc": report.f2fc, "lrc": report.lrc, "hf_energy": report.hf_energy},
        indent=2, sort_keys=True))
    return {"sequence": seq_path, "sidecar": sidecar_path, "metadata": meta_path,
            "metrics": metrics_path, "report": report, "video": video}


def dump_schedule_from_config(config: dict, output_dir) -> Path:
    """Write the trajectory and full window schedule as one JSON document."""
    cfg = validate_config(config)
    setup = setup_from_config(cfg)
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "trajectory": trajectory_to_json(setup.traj),
        "schedule": schedule_to_json(setup.windows_loop),
        "schedule_without_loop_closing": schedule_to_json(setup.windows_plain),
    }
    path = out_dir / f"{cfg['output']['prefix']}.schedule.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True))
    return path


_GRID_DEFAULTS = {
    "samplers": ["gvs"], "trajectories": ["straight_line"], "frames": 120,
    "etas": [0.9], "gammas": [1.0], "loop_closing": [True],
    "seeds": list(range(20)), "chunk_size": 4, "overlap": 2,
    "rays_per_frame": 8, "length_scale": 6.0, "schedule_kind": "cosine",
    "levels": 1000, "steps": 50, "lrc_threshold": 0.5, "lrc_min_gap": 12,
}


def grid_from_config(config: dict) -> ExperimentGrid:
    cfg = _merge(_GRID_DEFAULTS, config)
    return ExperimentGrid(
        samplers=tuple(cfg["samplers"]), trajectories=tuple(cfg["trajectories"]),
        frames=int(cfg["frames"]), etas=tuple(cfg["etas"]), gammas=tuple(cfg["gammas"]),
        loop_closing=tuple(bool(b) for b in cfg["loop_closing"]),
        seeds=tuple(int(s) for s in cfg["seeds"]), chunk_size=int(cfg["chunk_size"]),
        overlap=int(cfg["overlap"]), rays_per_frame=int(cfg["rays_per_frame"]),
        length_scale=float(cfg["length_scale"]), schedule_kind=cfg["schedule_kind"],
        levels=int(cfg["levels"]), steps=int(cfg["steps"]),
        lrc_threshold=float(cfg["lrc_threshold"]), lrc_min_gap=int(cfg["lrc_min_gap"]),
    )
