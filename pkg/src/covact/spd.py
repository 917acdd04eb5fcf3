"""Linear algebra on symmetric positive-definite matrices.

All spectral functions go through ``numpy.linalg.eigh`` (LAPACK's
symmetric divide-and-conquer driver).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg as sla


class NotPositiveDefiniteError(ValueError):
    pass


def _check_sym(a: np.ndarray, tol: float = 1e-10, what: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{what} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if a.size and np.max(np.abs(a - a.T)) > tol * scale:
        raise ValueError(f"{what} is not symmetric")
    return 0.5 * (a + a.T)


def sym_function(a: np.ndarray, fn, require_pd: bool = False) -> np.ndarray:
    """Apply a scalar function to the spectrum of a symmetric matrix."""
    a = _check_sym(a)
    w, v = np.linalg.eigh(a)
    if require_pd and (w.size and w[0] <= 0):
        raise NotPositiveDefiniteError(f"matrix is not positive definite (min eigenvalue {w[0]:.3g})")
    out = (v * fn(w)) @ v.T
    return 0.5 * (out + out.T)


def matrix_log(c: np.ndarray) -> np.ndarray:
    """Principal logarithm of an SPD matrix. Regularize singular covariances first."""
    return sym_function(c, np.log, require_pd=True)


def matrix_exp(l: np.ndarray) -> np.ndarray:
    return sym_function(l, np.exp)


def inv_sqrt(q: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """``Q^{-1/2}`` with eigenvalues clamped below at ``floor``."""
    q = _check_sym(q)
    w, v = np.linalg.eigh(q)
    if w.size and w[-1] <= 0:
        raise NotPositiveDefiniteError("matrix has no positive eigenvalue")
    if floor <= 0 and w[0] <= 0:
        raise NotPositiveDefiniteError(f"matrix is not positive definite (min eigenvalue {w[0]:.3g})")
    w = np.maximum(w, floor) if floor > 0 else w
    out = (v / np.sqrt(w)) @ v.T
    return 0.5 * (out + out.T)


def sqrtm_spd(q: np.ndarray) -> np.ndarray:
    return sym_function(q, np.sqrt, require_pd=True)


def vector_length(d: int) -> int:
    return d * (d + 1) // 2


def dim_from_length(length: int) -> int:
    d = int(round((np.sqrt(8 * length + 1) - 1) / 2))
    if vector_length(d) != length:
        raise ValueError(f"{length} is not a triangular number")
    return d


def vectorize(l: np.ndarray, weighted: bool = True) -> np.ndarray:
    """Row-major upper triangle; off-diagonals scaled by sqrt(2) when ``weighted``.

    With the weighting, ``vectorize(A) @ vectorize(B) == trace(A @ B)`` for
    symmetric A and B.
    """
    l = _check_sym(l)
    iu = np.triu_indices(l.shape[0])
    v = l[iu].copy()
    if weighted:
        v[iu[0] != iu[1]] *= np.sqrt(2.0)
    return v


def unvectorize(v: np.ndarray, weighted: bool = True) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    d = dim_from_length(v.shape[0])
    iu = np.triu_indices(d)
    vals = v.copy()
    if weighted:
        vals[iu[0] != iu[1]] /= np.sqrt(2.0)
    out = np.zeros((d, d))
    out[iu] = vals
    out[(iu[1], iu[0])] = vals
    return out


@dataclass
class LogDescriptor:
    v: np.ndarray
    label: str = ""
    video_id: str = ""
    clip_id: int = 0
    group: str = ""

    @property
    def d(self) -> int:
        return dim_from_length(len(self.v))


def log_descriptor(desc, weighted: bool = True) -> LogDescriptor:
    """Log-Euclidean vector of a (regularized) covariance descriptor."""
    v = vectorize(matrix_log(desc.matrix), weighted)
    return LogDescriptor(v, desc.label, desc.video_id, desc.clip_id, desc.group)


def logdet_divergence(q_hat: np.ndarray, q: np.ndarray) -> float:
    """Burg divergence ``tr(Q_hat Q^-1) - log det(Q_hat Q^-1) - d``, via Cholesky factors."""
    q_hat = _check_sym(q_hat, what="first argument")
    q = _check_sym(q, what="second argument")
    if q_hat.shape != q.shape:
        raise ValueError(f"shape mismatch {q_hat.shape} vs {q.shape}")
    try:
        lq = np.linalg.cholesky(q)
        lh = np.linalg.cholesky(q_hat)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("divergence arguments must be positive definite") from exc
    # tr(Q_hat Q^-1) = ||L_q^-1 L_h||_F^2
    z = sla.solve_triangular(lq, lh, lower=True)
    tr = float(np.sum(z * z))
    logdet = 2.0 * (np.sum(np.log(np.diag(lh))) - np.sum(np.log(np.diag(lq))))
    return tr - logdet - q.shape[0]


@dataclass
class WhitenedAtom:
    matrix: np.ndarray
    trace: float


def whiten(q: np.ndarray, atoms: Sequence[np.ndarray], floor: float = 0.0) -> list[WhitenedAtom]:
    """Congruence ``Q^{-1/2} D Q^{-1/2}`` of each atom against the query."""
    w = inv_sqrt(q, floor)
    d = w.shape[0]
    out = []
    for a in atoms:
        a = np.asarray(a, dtype=np.float64)
        if a.shape != (d, d):
            raise ValueError(f"atom shape {a.shape} does not match query {(d, d)}")
        m = w @ a @ w
        m = 0.5 * (m + m.T)
        out.append(WhitenedAtom(m, float(np.trace(m))))
    return out
