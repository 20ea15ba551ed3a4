"""Sequence dumps and waterfall rendering.

Sequences are stored as little-endian 32-bit floats with a JSON sidecar
carrying the shape and a config hash, so any language can cross-check a
run. The waterfall render is a binary PGM image, one row per frame.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import InputError


def write_sequence(seq_path, sidecar_path, video: np.ndarray, config_hash: str = ""):
    video = np.asarray(video)
    if video.ndim != 2:
        raise InputError("sequence dumps hold one (frames, rays) video")
    Path(seq_path).write_bytes(video.astype("<f4").tobytes(order="C"))
    sidecar = {
        "frames": int(video.shape[0]),
        "rays": int(video.shape[1]),
        "dtype": "<f4",
        "order": "C",
        "config_sha256": config_hash,
    }
    Path(sidecar_path).write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def read_sequence(seq_path, sidecar_path) -> np.ndarray:
    sidecar = json.loads(Path(sidecar_path).read_text())
    raw = np.frombuffer(Path(seq_path).read_bytes(), dtype=sidecar["dtype"])
    return raw.reshape(sidecar["frames"], sidecar["rays"]).astype(np.float64)


def write_pgm(path, video: np.ndarray):
    """Grayscale waterfall (time rows x ray columns), min/max normalized."""
    video = np.asarray(video, dtype=np.float64)
    if video.ndim != 2:
        raise InputError("waterfall rendering needs a (frames, rays) video")
    lo, hi = float(video.min()), float(video.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    pixels = np.round((video - lo) * scale).astype(np.uint8)
    header = f"P5\n{video.shape[1]} {video.shape[0]}\n255\n".encode()
    Path(path).write_bytes(header + pixels.tobytes(order="C"))
