"""Parametric synthetic action videos written as pixmap sequences.

Each video shows one smoothly textured disc over a faintly textured static
background. The class fixes the motion:

* ``oscillate``: vertical sinusoidal bobbing
* ``translate``: constant horizontal drift (left or right)
* ``rotate``: counter-clockwise spin about the disc centre (negative
  vorticity in image axes, where y points down)

Texture, colours, size, speed and phase are drawn per video from the same
distributions for every class, so only motion separates the classes unless
``color_context`` tints each class differently.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import DatasetManifest, VideoRecord, write_manifest
from .io import write_pnm

MOTIONS = ("oscillate", "translate", "rotate")


@dataclass
class SynthSpec:
    classes: tuple[str, ...] = MOTIONS
    videos_per_class: int = 10
    frames: int = 40
    width: int = 64
    height: int = 48
    groups: int = 5  # actors; each performs every class videos_per_class / groups times
    color_context: bool = False
    depth: bool = False
    noise: float = 1.5  # gray levels
    seed: int = 0

    def __post_init__(self):
        self.classes = tuple(self.classes)
        bad = set(self.classes) - set(MOTIONS)
        if bad:
            raise ValueError(f"unknown motion classes {sorted(bad)}")
        if self.frames < 2 or self.videos_per_class < 1 or self.groups < 1:
            raise ValueError("need frames >= 2, videos_per_class >= 1, groups >= 1")
        if min(self.width, self.height) < 20:
            raise ValueError("frames must be at least 20 x 20 pixels")


@dataclass
class _Texture:
    freqs: np.ndarray  # (k, 2) spatial frequencies, rad/px
    phases: np.ndarray  # (k,)
    weights: np.ndarray  # (k, 3) per-channel amplitudes
    base: np.ndarray  # (3,)

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        arg = x[..., None] * self.freqs[:, 0] + y[..., None] * self.freqs[:, 1] + self.phases
        return self.base + np.sin(arg) @ self.weights


def _texture(rng: np.random.Generator, k: int, fmin: float, fmax: float, amp: float, base) -> _Texture:
    ang = rng.uniform(0, np.pi, k)
    mag = rng.uniform(fmin, fmax, k)
    freqs = np.stack([mag * np.cos(ang), mag * np.sin(ang)], axis=1)
    weights = rng.uniform(0.3, 1.0, (k, 3)) * amp / np.sqrt(k)
    return _Texture(freqs, rng.uniform(0, 2 * np.pi, k), weights, np.asarray(base, dtype=float))


@dataclass
class _Video:
    motion: str
    texture: _Texture
    background: _Texture
    radius: float
    center: np.ndarray
    params: dict = field(default_factory=dict)


def _sample_video(rng: np.random.Generator, motion: str, spec: SynthSpec, tint: np.ndarray | None) -> _Video:
    base = rng.uniform(90, 170, 3)
    if tint is not None:
        base = tint
    tex = _texture(rng, 6, 0.15, 0.45, 70.0, base)
    bg = _texture(rng, 4, 0.05, 0.2, 12.0, rng.uniform(40, 80, 3))
    W, H = spec.width, spec.height
    radius = rng.uniform(0.1875, 0.25) * min(W, H)  # 9-12 px at 48 rows
    T = spec.frames
    params: dict = {}
    if motion == "oscillate":
        params["amp"] = rng.uniform(2.5, 4.0)
        params["period"] = rng.uniform(16.0, 24.0)
        params["phase"] = rng.uniform(0, 2 * np.pi)
        cx = rng.uniform(radius + 4, W - radius - 4)
        cy = H / 2 + rng.uniform(-2, 2)
    elif motion == "translate":
        speed = rng.uniform(0.5, 0.75) * rng.choice([-1.0, 1.0])
        params["speed"] = speed
        travel = abs(speed) * (T - 1)
        lo = radius + 2
        hi = max(lo, W - radius - 2 - travel)
        start = rng.uniform(lo, hi)
        cx = start if speed > 0 else W - start
        cy = H / 2 + rng.uniform(-3, 3)
    else:
        params["omega"] = rng.uniform(0.04, 0.07)
        cx = W / 2 + rng.uniform(-6, 6)
        cy = H / 2 + rng.uniform(-3, 3)
    return _Video(motion, tex, bg, radius, np.array([cx, cy]), params)


def _pose(v: _Video, t: int) -> tuple[np.ndarray, float]:
    """Disc centre and rotation angle at frame t."""
    c = v.center.copy()
    theta = 0.0
    if v.motion == "oscillate":
        p = v.params
        c[1] += p["amp"] * np.sin(2 * np.pi * t / p["period"] + p["phase"])
    elif v.motion == "translate":
        c[0] += v.params["speed"] * t
    else:
        theta = v.params["omega"] * t
    return c, theta


def render_frame(v: _Video, t: int, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Float RGB frame (0-255, before noise) and the disc's soft coverage."""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    c, theta = _pose(v, t)
    dx, dy = xs - c[0], ys - c[1]
    # object coordinates: rotate back by theta (counter-clockwise on screen, y pointing down)
    cos, sin = np.cos(theta), np.sin(theta)
    ox = cos * dx - sin * dy
    oy = sin * dx + cos * dy
    r = np.hypot(dx, dy)
    cover = 1.0 / (1.0 + np.exp((r - v.radius) / 0.8))
    obj = v.texture(ox, oy)
    bg = v.background(xs, ys)
    img = bg * (1 - cover[..., None]) + obj * cover[..., None]
    return img, cover


def generate(spec: SynthSpec, out_dir: str | os.PathLike) -> DatasetManifest:
    """Write every video as ``<out>/<video_id>/frame_NNNN.ppm`` plus ``manifest.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    out = out.resolve()
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    rng = np.random.default_rng(spec.seed)
    tints = None
    if spec.color_context:
        palette = rng.uniform(60, 200, (len(spec.classes), 3))
        tints = dict(zip(spec.classes, palette))
    records = []
    for ci, motion in enumerate(spec.classes):
        for k in range(spec.videos_per_class):
            vid = f"{motion}_{k:03d}"
            group = f"g{k % spec.groups}"
            v = _sample_video(rng, motion, spec, None if tints is None else tints[motion])
            vdir = out / vid
            vdir.mkdir(exist_ok=True)
            ddir = None
            if spec.depth:
                ddir = out / f"{vid}_depth"
                ddir.mkdir(exist_ok=True)
                far = rng.uniform(2800, 3200)
                near = rng.uniform(1100, 1500)
            for t in range(spec.frames):
                img, cover = render_frame(v, t, spec.width, spec.height)
                img = img + rng.normal(0, spec.noise, img.shape)
                write_pnm(vdir / f"frame_{t:04d}.ppm", np.clip(np.round(img), 0, 255).astype(np.uint8))
                if ddir is not None:
                    depth = far * (1 - cover) + near * cover + rng.normal(0, 5, cover.shape)
                    write_pnm(ddir / f"depth_{t:04d}.pgm", np.clip(np.round(depth), 0, 65535).astype(np.uint16))
            records.append(VideoRecord(vid, motion, group, vdir, ddir, spec.frames))
    manifest = DatasetManifest(list(spec.classes), records, out)
    write_manifest(out / "manifest.csv", manifest)
    return manifest
