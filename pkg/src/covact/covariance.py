"""Clip covariance descriptors: direct and integral-statistics computation."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .features import FeatureStack


@dataclass
class CovarianceDescriptor:
    matrix: np.ndarray
    n: int
    label: str = ""
    video_id: str = ""
    clip_id: int = 0
    group: str = ""
    reg: float = 0.0  # ridge added by regularize(), 0 for raw estimates

    @property
    def d(self) -> int:
        return self.matrix.shape[0]


def _check_samples(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("samples must be an (n, d) array")
    if x.shape[0] < 2:
        raise ValueError(f"covariance needs at least 2 samples, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain non-finite values")
    return x


def _samples(stack) -> np.ndarray:
    return stack.samples if isinstance(stack, FeatureStack) else stack


def covariance_direct(stack: FeatureStack | np.ndarray) -> CovarianceDescriptor:
    """Unbiased sample covariance by the two-pass (centre, then multiply) route."""
    x = _check_samples(_samples(stack))
    centred = x - x.mean(axis=0)
    c = centred.T @ centred / (x.shape[0] - 1)
    c = 0.5 * (c + c.T)
    return CovarianceDescriptor(c, x.shape[0])


class IntegralStats:
    """Prefix sums of samples and outer products over consecutive blocks.

    Blocks are typically frames, so the covariance of any run of frames
    comes from two prefix lookups. Sums are taken about ``shift`` (the
    first sample) to keep the second-moment subtraction well conditioned
    when features carry a large common offset.
    """

    def __init__(self, samples: np.ndarray, block_counts: np.ndarray | None = None):
        x = _check_samples(samples)
        counts = np.array([x.shape[0]]) if block_counts is None else np.asarray(block_counts, dtype=np.int64)
        if counts.sum() != x.shape[0]:
            raise ValueError("block counts do not add up to the sample count")
        d = x.shape[1]
        self.shift = x[0].copy()
        nb = len(counts)
        self.counts = np.zeros(nb + 1, dtype=np.int64)
        self.sums = np.zeros((nb + 1, d))
        self.outer = np.zeros((nb + 1, d, d))
        pos = 0
        for b, cnt in enumerate(counts):
            blk = x[pos : pos + cnt] - self.shift
            pos += cnt
            self.counts[b + 1] = self.counts[b] + cnt
            self.sums[b + 1] = self.sums[b] + blk.sum(axis=0)
            self.outer[b + 1] = self.outer[b] + blk.T @ blk

    @classmethod
    def from_stack(cls, stack: FeatureStack) -> "IntegralStats":
        return cls(stack.samples, stack.frame_counts)

    @property
    def n_blocks(self) -> int:
        return len(self.counts) - 1

    def totals(self, start: int = 0, stop: int | None = None) -> tuple[int, np.ndarray, np.ndarray]:
        """Unshifted ``(n, sum f, sum f f^T)`` over blocks ``start:stop``."""
        n, s1, s2 = self._window(start, stop)
        mu = self.shift
        sum_f = s1 + n * mu
        sum_ff = s2 + np.outer(s1, mu) + np.outer(mu, s1) + n * np.outer(mu, mu)
        return n, sum_f, sum_ff

    def _window(self, start, stop):
        stop = self.n_blocks if stop is None else stop
        if not 0 <= start < stop <= self.n_blocks:
            raise ValueError(f"bad block window [{start}, {stop})")
        n = int(self.counts[stop] - self.counts[start])
        return n, self.sums[stop] - self.sums[start], self.outer[stop] - self.outer[start]

    def covariance(self, start: int = 0, stop: int | None = None) -> np.ndarray:
        n, s1, s2 = self._window(start, stop)
        if n < 2:
            raise ValueError(f"covariance needs at least 2 samples, got {n}")
        m = s1 / n
        c = (s2 - n * np.outer(m, m)) / (n - 1)
        return 0.5 * (c + c.T)


def covariance_integral(stack: FeatureStack | np.ndarray) -> CovarianceDescriptor:
    """Covariance from accumulated first and second moments, ``(S2 - n mu mu^T) / (n - 1)``."""
    if isinstance(stack, FeatureStack):
        stats = IntegralStats.from_stack(stack)
    else:
        stats = IntegralStats(stack)
    c = stats.covariance()
    return CovarianceDescriptor(c, int(stats.counts[-1]))


def default_reg(c: np.ndarray, scale: float = 1e-5, floor: float = 1e-8) -> float:
    d = c.shape[0]
    return max(scale * float(np.trace(c)) / d, floor)


def regularize(
    desc: CovarianceDescriptor | np.ndarray,
    eps: float | None = None,
    scale: float = 1e-5,
    floor: float = 1e-8,
    sym_tol: float = 1e-10,
):
    """Add ``eps * I`` (scale-relative default) so the matrix is strictly PD.

    Accepts a descriptor (returns a descriptor) or a bare matrix (returns a matrix).
    """
    c = desc.matrix if isinstance(desc, CovarianceDescriptor) else np.asarray(desc, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError("covariance must be square")
    asym = np.max(np.abs(c - c.T)) if c.size else 0.0
    if asym > sym_tol * max(1.0, np.max(np.abs(c))):
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    if eps is None:
        eps = default_reg(c, scale, floor)
    out = 0.5 * (c + c.T) + eps * np.eye(c.shape[0])
    if isinstance(desc, CovarianceDescriptor):
        return replace(desc, matrix=out, reg=desc.reg + eps)
    return out


def clip_windows(n_frames: int, clip_length: int = 20) -> list[tuple[int, int]]:
    """Non-overlapping ``[start, stop)`` frame windows; a short tail is kept if it has 2+ frames."""
    if clip_length < 2:
        raise ValueError("clip length must be at least 2")
    out = []
    for start in range(0, n_frames, clip_length):
        stop = min(start + clip_length, n_frames)
        if stop - start >= 2:
            out.append((start, stop))
    return out
