"""Per-pixel appearance, motion and kinematic features."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .flow import FlowField, FlowParams, estimate_flow, flow_derivatives, spatial_gradient

KINEMATIC_NAMES = ("div", "vort", "tau2_G", "tau3_G", "tau2_S", "tau3_S", "tau3_R")
GESTURE_KINEMATICS = ("div", "vort", "tau2_G", "tau3_G")

INTENSITY_NAMES = ("R", "G", "B")
GRADIENT_NAMES = ("Ix", "Iy", "Ixx", "Iyy")
MOTION_NAMES = ("It", "u", "v", "ut", "vt")
POSITION_NAMES = ("x", "y", "t")

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class FeatureSetMask:
    """Which feature blocks go into the per-pixel vector.

    ``tau2`` selects the second-invariant formula: ``"sum"`` is
    ``(tr(G)^2 + tr(G^2)) / 2``, ``"standard"`` is ``(tr(G)^2 - tr(G^2)) / 2``.
    """

    include_intensity: bool = True
    include_gradients: bool = True
    include_basic_motion: bool = True
    include_kinematic: bool = True
    include_position: bool = False
    kinematic_terms: tuple[str, ...] = KINEMATIC_NAMES
    tau2: str = "sum"

    def __post_init__(self):
        bad = set(self.kinematic_terms) - set(KINEMATIC_NAMES)
        if bad:
            raise ValueError(f"unknown kinematic terms {sorted(bad)}")
        # keep canonical order whatever the caller passed
        object.__setattr__(
            self, "kinematic_terms", tuple(k for k in KINEMATIC_NAMES if k in self.kinematic_terms)
        )
        if self.tau2 not in ("sum", "standard"):
            raise ValueError(f"tau2 must be 'sum' or 'standard', got {self.tau2!r}")

    @property
    def names(self) -> tuple[str, ...]:
        out: list[str] = []
        if self.include_intensity:
            out += INTENSITY_NAMES
        if self.include_gradients:
            out += GRADIENT_NAMES
        if self.include_basic_motion:
            out += MOTION_NAMES
        if self.include_kinematic:
            out += self.kinematic_terms
        if self.include_position:
            out += POSITION_NAMES
        return tuple(out)

    @property
    def d(self) -> int:
        return len(self.names)

    @property
    def needs_motion(self) -> bool:
        return self.include_basic_motion or (self.include_kinematic and bool(self.kinematic_terms))

    @classmethod
    def preset(cls, name: str) -> "FeatureSetMask":
        """Named masks: ``AMF``/``full`` (19), ``MF``/``motion`` (12), ``AF``/``appearance`` (7), ``gesture`` (16)."""
        key = name.strip().lower()
        if key in ("amf", "full", "all"):
            return cls()
        if key in ("mf", "motion"):
            return cls(include_intensity=False, include_gradients=False)
        if key in ("af", "appearance"):
            return cls(include_basic_motion=False, include_kinematic=False)
        if key == "gesture":
            return cls(
                include_intensity=False,
                include_position=True,
                kinematic_terms=GESTURE_KINEMATICS,
            )
        raise ValueError(f"unknown feature preset {name!r}")


@dataclass
class FeatureStack:
    samples: np.ndarray  # (n, d)
    mask: FeatureSetMask
    frame_counts: np.ndarray = field(default=None)  # samples contributed by each frame

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ValueError("samples must be (n, d)")
        if self.frame_counts is None:
            self.frame_counts = np.array([self.samples.shape[0]])
        self.frame_counts = np.asarray(self.frame_counts, dtype=np.int64)
        if self.frame_counts.sum() != self.samples.shape[0]:
            raise ValueError("frame_counts do not add up to the sample count")

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]


def to_gray(frame: np.ndarray) -> np.ndarray:
    """Luma of an (H, W, 3) frame, or the frame itself if already 2-D (same scale as input)."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim == 2:
        return frame
    return frame @ _LUMA


def second_derivative(img: np.ndarray, axis: int) -> np.ndarray:
    """``[1, -2, 1]`` stencil along ``axis``; border pixels take the one-sided stencil."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape[axis] < 3:
        raise ValueError("second derivative needs at least 3 pixels along the axis")
    a = np.moveaxis(img, axis, 0)
    out = np.empty_like(a)
    out[1:-1] = a[:-2] - 2 * a[1:-1] + a[2:]
    out[0] = out[1]
    out[-1] = out[-2]
    return np.moveaxis(out, 0, axis)


def appearance_features(frame: np.ndarray, intensity: bool = True) -> tuple[np.ndarray | None, np.ndarray]:
    """Colour (f_i) and grayscale-derivative (f_g) features of one 0-255 frame.

    Returns ``(f_i, f_g)`` with shapes (H, W, 3) and (H, W, 4); ``f_i`` is
    None when ``intensity`` is False.
    """
    frame = np.asarray(frame, dtype=np.float64)
    if intensity and (frame.ndim != 3 or frame.shape[2] != 3):
        raise ValueError("intensity features need a 3-channel frame")
    gray = to_gray(frame) / 255.0
    ix, iy = spatial_gradient(gray)
    f_g = np.stack([ix, iy, second_derivative(gray, 1), second_derivative(gray, 0)], axis=-1)
    f_i = frame / 255.0 if intensity else None
    return f_i, f_g


def _flow_index(k: int, n_flows: int) -> int:
    return min(k, n_flows - 1)


def basic_motion_features(gray: np.ndarray, flows: Sequence[FlowField], index: int) -> np.ndarray:
    """``[dI/dt, u, v, du/dt, dv/dt]`` per pixel, shape (H, W, 5).

    ``gray`` is a (T, H, W) stack in [0, 1]; ``flows[k]`` is the flow from
    frame k to k+1. Forward differences, backward at the last frame.
    """
    gray = np.asarray(gray, dtype=np.float64)
    T = gray.shape[0]
    if T < 2:
        raise ValueError("motion features need at least 2 frames")
    if len(flows) != T - 1:
        raise ValueError(f"expected {T - 1} flow fields for {T} frames, got {len(flows)}")
    if index + 1 < T:
        it = gray[index + 1] - gray[index]
    else:
        it = gray[index] - gray[index - 1]
    j = _flow_index(index, len(flows))
    f = flows[j]
    if len(flows) >= 2:
        der = flow_derivatives(flows, j)
        ut, vt = der.du_dt, der.dv_dt
    else:
        # a single flow field has no temporal neighbour
        ut = vt = np.zeros_like(f.u)
    return np.stack([it, f.u, f.v, ut, vt], axis=-1)


def divergence_vorticity(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g = np.asarray(g, dtype=np.float64)
    return g[..., 0, 0] + g[..., 1, 1], g[..., 1, 0] - g[..., 0, 1]


def tensor_invariants(m: np.ndarray, tau2: str = "sum") -> tuple[np.ndarray, np.ndarray]:
    """Second and third invariants of 2x2 matrices (batched over leading axes)."""
    m = np.asarray(m, dtype=np.float64)
    a, b, c, d = m[..., 0, 0], m[..., 0, 1], m[..., 1, 0], m[..., 1, 1]
    tr = a + d
    tr_sq = a * a + 2 * b * c + d * d  # tr(M @ M)
    if tau2 == "sum":
        t2 = 0.5 * (tr * tr + tr_sq)
    elif tau2 == "standard":
        t2 = 0.5 * (tr * tr - tr_sq)
    else:
        raise ValueError(f"unknown tau2 convention {tau2!r}")
    return t2, -(a * d - b * c)


def strain_rotation(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric (strain-rate) and antisymmetric (rotation-rate) parts of G."""
    g = np.asarray(g, dtype=np.float64)
    gt = np.swapaxes(g, -1, -2)
    s = 0.5 * (g + gt)
    # R = G - S keeps S + R == G bit-for-bit
    return s, g - s


def kinematic_vector(g: np.ndarray, tau2: str = "sum") -> np.ndarray:
    """The seven kinematic features, ordered as ``KINEMATIC_NAMES``; shape (..., 7)."""
    g = np.asarray(g, dtype=np.float64)
    div, vort = divergence_vorticity(g)
    t2g, t3g = tensor_invariants(g, tau2)
    s, r = strain_rotation(g)
    t2s, t3s = tensor_invariants(s, tau2)
    _, t3r = tensor_invariants(r, tau2)
    return np.stack([div, vort, t2g, t3g, t2s, t3s, t3r], axis=-1)


def depth_mask(depth: np.ndarray, threshold: float, shape: tuple[int, int] | None = None) -> np.ndarray:
    """True where the depth reading is nearer than ``threshold``."""
    depth = np.asarray(depth)
    if shape is not None and depth.shape[-2:] != tuple(shape[-2:]):
        raise ValueError(f"depth shape {depth.shape} not aligned with frame shape {shape}")
    return depth < threshold


def compute_flows(frames: np.ndarray, params: FlowParams | None = None) -> list[FlowField]:
    """Flow between every pair of consecutive frames, on the 0-255 gray scale."""
    gray = [to_gray(f) for f in frames]
    return [estimate_flow(gray[k], gray[k + 1], params) for k in range(len(gray) - 1)]


def assemble_stack(
    frames: np.ndarray,
    flows: Sequence[FlowField] | None,
    mask: FeatureSetMask,
    validity: np.ndarray | None = None,
    start: int = 0,
    stop: int | None = None,
) -> FeatureStack:
    """Stack per-pixel feature vectors of frames ``start:stop`` into a sample matrix.

    ``frames`` is the whole (T, H, W[, 3]) 0-255 sequence so that frames at
    a window edge still see their temporal neighbours. ``flows`` holds
    ``T - 1`` fields (computed with default parameters when None and
    motion features are requested). ``validity`` is an (H, W) or (T, H, W)
    boolean map; pixels where it is False are dropped.
    """
    frames = np.asarray(frames)
    if frames.shape[0] == 0:
        raise ValueError("empty clip")
    if mask.d == 0:
        raise ValueError("feature mask selects no features")
    T = frames.shape[0]
    stop = T if stop is None else stop
    if not 0 <= start < stop <= T:
        raise ValueError(f"bad frame window [{start}, {stop}) for {T} frames")
    H, W = frames.shape[1:3]

    gray = None
    if mask.needs_motion:
        if T < 2:
            raise ValueError("motion features need a clip of at least 2 frames")
        if flows is None:
            flows = compute_flows(frames)
        gray = np.stack([to_gray(f) for f in frames]) / 255.0

    if validity is not None:
        validity = np.asarray(validity, dtype=bool)
        if validity.shape[-2:] != (H, W):
            raise ValueError(f"validity shape {validity.shape} does not match frames {(H, W)}")
        if validity.ndim == 3 and validity.shape[0] != T:
            raise ValueError("per-frame validity needs one map per frame")

    ys, xs = np.mgrid[0:H, 0:W].astype(np.float64)
    xs /= max(W - 1, 1)
    ys /= max(H - 1, 1)
    clip_len = stop - start
    kin_idx = [KINEMATIC_NAMES.index(k) for k in mask.kinematic_terms]

    blocks_per_frame = []
    counts = []
    for k in range(start, stop):
        parts = []
        if mask.include_intensity or mask.include_gradients:
            f_i, f_g = appearance_features(frames[k], intensity=mask.include_intensity)
            if mask.include_intensity:
                parts.append(f_i)
            if mask.include_gradients:
                parts.append(f_g)
        if mask.include_basic_motion:
            parts.append(basic_motion_features(gray, flows, k))
        if mask.include_kinematic and kin_idx:
            j = _flow_index(k, len(flows))
            f = flows[j]
            du_dx, du_dy = spatial_gradient(f.u)
            dv_dx, dv_dy = spatial_gradient(f.v)
            g = np.stack([np.stack([du_dx, du_dy], -1), np.stack([dv_dx, dv_dy], -1)], axis=-2)
            parts.append(kinematic_vector(g, mask.tau2)[..., kin_idx])
        if mask.include_position:
            t = (k - start) / max(clip_len - 1, 1)
            parts.append(np.stack([xs, ys, np.full_like(xs, t)], axis=-1))
        feat = np.concatenate(parts, axis=-1).reshape(H * W, -1)
        if validity is not None:
            keep = (validity[k] if validity.ndim == 3 else validity).reshape(-1)
            feat = feat[keep]
        blocks_per_frame.append(feat)
        counts.append(feat.shape[0])

    samples = np.concatenate(blocks_per_frame, axis=0)
    if not np.all(np.isfinite(samples)):
        raise ValueError("non-finite feature values")
    return FeatureStack(samples, mask, np.array(counts))
