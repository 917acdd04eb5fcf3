"""Dense optical flow (Horn-Schunck) and flow derivatives."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

# Weighted neighbourhood average used by the Horn-Schunck update.
_AVG_KERNEL = np.array(
    [[1 / 12, 1 / 6, 1 / 12], [1 / 6, 0.0, 1 / 6], [1 / 12, 1 / 6, 1 / 12]]
)


@dataclass(frozen=True)
class FlowParams:
    alpha: float = 15.0
    max_iterations: int = 200
    tolerance: float = 1e-4


@dataclass
class FlowField:
    u: np.ndarray
    v: np.ndarray
    iterations: int = 0
    converged: bool = True

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise ValueError(f"u and v must be equal 2-D arrays, got {self.u.shape} and {self.v.shape}")

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    def scaled(self, factor: float) -> "FlowField":
        return FlowField(factor * self.u, factor * self.v, self.iterations, self.converged)


@dataclass
class FlowDerivatives:
    du_dx: np.ndarray
    du_dy: np.ndarray
    dv_dx: np.ndarray
    dv_dy: np.ndarray
    du_dt: np.ndarray
    dv_dt: np.ndarray

    def gradient_tensor(self) -> np.ndarray:
        """Per-pixel 2x2 tensor ``[[du/dx, du/dy], [dv/dx, dv/dy]]``, shape (H, W, 2, 2)."""
        return np.stack(
            [np.stack([self.du_dx, self.du_dy], -1), np.stack([self.dv_dx, self.dv_dy], -1)],
            axis=-2,
        )


def spatial_gradient(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences in the interior, one-sided at the borders.

    Returns ``(d/dx, d/dy)`` where x runs along columns.
    """
    img = np.asarray(img, dtype=np.float64)
    if min(img.shape) < 2:
        raise ValueError(f"need at least 2 pixels per axis, got {img.shape}")
    dy, dx = np.gradient(img)
    return dx, dy


def estimate_flow(prev: np.ndarray, nxt: np.ndarray, params: FlowParams | None = None) -> FlowField:
    """Horn-Schunck flow from ``prev`` to ``nxt``.

    Frames are 2-D grayscale arrays (any intensity scale; the default
    smoothness weight assumes 0-255). Iteration stops once the mean absolute
    update of (u, v) drops below ``params.tolerance``; if that never happens
    the last iterate is returned with ``converged=False``.
    """
    params = params or FlowParams()
    i1 = np.asarray(prev, dtype=np.float64)
    i2 = np.asarray(nxt, dtype=np.float64)
    if i1.shape != i2.shape:
        raise ValueError(f"frame shapes differ: {i1.shape} vs {i2.shape}")
    if i1.ndim != 2 or min(i1.shape) < 3:
        raise ValueError(f"frames must be 2-D and at least 3x3, got {i1.shape}")
    if not (np.all(np.isfinite(i1)) and np.all(np.isfinite(i2))):
        raise ValueError("frames contain non-finite values")

    # brightness derivatives averaged over both frames
    gx1, gy1 = spatial_gradient(i1)
    gx2, gy2 = spatial_gradient(i2)
    ix = 0.5 * (gx1 + gx2)
    iy = 0.5 * (gy1 + gy2)
    it = i2 - i1

    u = np.zeros_like(i1)
    v = np.zeros_like(i1)
    denom = params.alpha**2 + ix**2 + iy**2
    converged = False
    n = 0
    for n in range(1, params.max_iterations + 1):
        u_avg = ndimage.convolve(u, _AVG_KERNEL, mode="nearest")
        v_avg = ndimage.convolve(v, _AVG_KERNEL, mode="nearest")
        t = (ix * u_avg + iy * v_avg + it) / denom
        u_new = u_avg - ix * t
        v_new = v_avg - iy * t
        change = 0.5 * (np.mean(np.abs(u_new - u)) + np.mean(np.abs(v_new - v)))
        u, v = u_new, v_new
        if change < params.tolerance:
            converged = True
            break
    return FlowField(u, v, iterations=n, converged=converged)


def flow_derivatives(flows: Sequence[FlowField], index: int) -> FlowDerivatives:
    """Spatial and temporal derivatives of ``flows[index]``.

    Temporal derivatives are forward differences ``flows[index+1] - flows[index]``,
    falling back to a backward difference at the last field.
    """
    if len(flows) < 2:
        raise ValueError("temporal flow derivatives need at least 2 flow fields")
    if not -len(flows) <= index < len(flows):
        raise IndexError(f"flow index {index} out of range for {len(flows)} fields")
    index %= len(flows)
    f = flows[index]
    du_dx, du_dy = spatial_gradient(f.u)
    dv_dx, dv_dy = spatial_gradient(f.v)
    if index + 1 < len(flows):
        a, b = f, flows[index + 1]
    else:
        a, b = flows[index - 1], f
    return FlowDerivatives(du_dx, du_dy, dv_dx, dv_dy, b.u - a.u, b.v - a.v)


def dump_flow(flow: FlowField, prefix: str | os.PathLike) -> None:
    """Write u and v as 8-bit PGMs plus a sidecar with the affine scale.

    Pixel value p maps back to flow as ``offset + p * scale``.
    """
    from .io import write_pnm

    prefix = os.fspath(prefix)
    lines = ["# component offset scale"]
    for name, comp in (("u", flow.u), ("v", flow.v)):
        lo, hi = float(comp.min()), float(comp.max())
        scale = (hi - lo) / 255.0 if hi > lo else 1.0
        pix = np.round((comp - lo) / scale).astype(np.uint8)
        write_pnm(f"{prefix}_{name}.pgm", pix)
        lines.append(f"{name} {lo!r} {scale!r}")
    with open(f"{prefix}_scale.txt", "w") as fh:
        fh.write("\n".join(lines) + "\n")
