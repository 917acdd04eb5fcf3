"""Batch orthogonal matching pursuit over a labelled descriptor dictionary."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg as sla

from .spd import LogDescriptor


@dataclass(frozen=True)
class VectorDictionary:
    """Unit-norm atoms as columns, with labels and the precomputed Gram matrix."""

    atoms: np.ndarray  # (m, p)
    labels: np.ndarray  # (p,)
    norms: np.ndarray  # original atom norms
    gram: np.ndarray  # (p, p)

    @property
    def size(self) -> int:
        return self.atoms.shape[1]

    @property
    def dim(self) -> int:
        return self.atoms.shape[0]

    @property
    def classes(self) -> list:
        return sorted(set(self.labels.tolist()))


@dataclass
class SparseCode:
    support: list[int]
    coefficients: np.ndarray  # on the support, against unit-norm atoms, in the query's scale
    residual_norm: float
    query_norm: float
    residual_history: list[float] = field(default_factory=list)
    per_class_residual: dict = field(default_factory=dict)
    singular: bool = False  # stopped early on a degenerate support system

    def dense(self, p: int) -> np.ndarray:
        x = np.zeros(p)
        x[self.support] = self.coefficients
        return x


def build_dictionary(descriptors: Sequence[LogDescriptor] | np.ndarray, labels: Sequence | None = None) -> VectorDictionary:
    """Stack descriptors as normalized columns. Labels come from the descriptors unless given."""
    if isinstance(descriptors, np.ndarray):
        mat = np.asarray(descriptors, dtype=np.float64)
        if mat.ndim != 2:
            raise ValueError("descriptor matrix must be (p, m)")
        if labels is None:
            raise ValueError("labels required for a bare descriptor matrix")
    else:
        if len(descriptors) == 0:
            raise ValueError("cannot build a dictionary from zero descriptors")
        lengths = {len(d.v) for d in descriptors}
        if len(lengths) != 1:
            raise ValueError(f"inconsistent descriptor lengths {sorted(lengths)}")
        mat = np.stack([d.v for d in descriptors])
        if labels is None:
            labels = [d.label for d in descriptors]
    if mat.shape[0] == 0:
        raise ValueError("cannot build a dictionary from zero descriptors")
    if len(labels) != mat.shape[0]:
        raise ValueError("one label per descriptor required")
    norms = np.linalg.norm(mat, axis=1)
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        bad = int(np.flatnonzero((norms == 0) | ~np.isfinite(norms))[0])
        raise ValueError(f"descriptor {bad} has zero or non-finite norm")
    atoms = (mat / norms[:, None]).T
    gram = atoms.T @ atoms
    gram = 0.5 * (gram + gram.T)
    for a in (atoms, gram, norms):
        a.setflags(write=False)
    lab = np.asarray(list(labels), dtype=object)
    lab.setflags(write=False)
    return VectorDictionary(atoms, lab, norms, gram)


def _omp_one(dic: VectorDictionary, y: np.ndarray, alpha0: np.ndarray, P: int, tol: float) -> SparseCode:
    ynorm = float(np.linalg.norm(y))
    support: list[int] = []
    gamma = np.zeros(0)
    chol = np.zeros((0, 0))
    alpha = alpha0.copy()
    res_norm = ynorm
    history = [ynorm]
    singular = False
    while len(support) < P and res_norm > tol * ynorm:
        score = np.abs(alpha)
        score[support] = -1.0
        j = int(np.argmax(score))  # first maximum: lowest index wins ties
        if score[j] <= 1e-14 * max(ynorm, 1e-300):
            break
        if support:
            w = sla.solve_triangular(chol, dic.gram[support, j], lower=True)
            diag = dic.gram[j, j] - w @ w
            if diag <= 1e-12:
                singular = True
                break
            k = len(support)
            new = np.zeros((k + 1, k + 1))
            new[:k, :k] = chol
            new[k, :k] = w
            new[k, k] = np.sqrt(diag)
            chol = new
        else:
            chol = np.array([[np.sqrt(dic.gram[j, j])]])
        support.append(j)
        gamma = sla.cho_solve((chol, True), alpha0[support])
        alpha = alpha0 - dic.gram[:, support] @ gamma
        r = y - dic.atoms[:, support] @ gamma
        res_norm = float(np.linalg.norm(r))
        history.append(res_norm)
    return SparseCode(support, gamma, res_norm, ynorm, history, singular=singular)


def batch_omp(dic: VectorDictionary, queries, P: int = 10, tol: float = 1e-6, with_class_residuals: bool = True) -> list[SparseCode]:
    """Code each query with at most ``P`` atoms.

    Correlations are updated through the Gram matrix and the support system
    is solved by a progressively grown Cholesky factor, so the dictionary is
    touched once per batch (for ``A^T Y``). Iteration stops at ``P`` atoms or
    when the residual falls to ``tol * ||y||``.
    """
    Y = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if Y.shape[1] != dic.dim:
        raise ValueError(f"query length {Y.shape[1]} does not match dictionary dimension {dic.dim}")
    if not 1 <= P <= dic.size:
        raise ValueError(f"sparsity P={P} must lie in [1, {dic.size}]")
    alpha0 = Y @ dic.atoms  # (q, p)
    codes = []
    for y, a0 in zip(Y, alpha0):
        code = _omp_one(dic, y, a0, P, tol)
        if with_class_residuals:
            code.per_class_residual = class_residuals(dic, y, code)
        codes.append(code)
    return codes


def class_residuals(dic: VectorDictionary, query: np.ndarray, code: SparseCode) -> dict:
    """``||y - A x_c||`` where ``x_c`` keeps only the support coefficients labelled c."""
    y = np.asarray(query, dtype=np.float64)
    out = {}
    sup = np.asarray(code.support, dtype=int)
    sup_labels = dic.labels[sup] if len(sup) else np.array([], dtype=object)
    for c in dic.classes:
        sel = sup_labels == c
        if not np.any(sel):
            out[c] = float(np.linalg.norm(y))
            continue
        recon = dic.atoms[:, sup[sel]] @ code.coefficients[sel]
        out[c] = float(np.linalg.norm(y - recon))
    return out


def omp_classify(dic: VectorDictionary, query: np.ndarray, P: int = 10, tol: float = 1e-6) -> tuple:
    """Label with the smallest class-restricted residual, plus that residual."""
    code = batch_omp(dic, query[None, :], min(P, dic.size), tol)[0]
    res = code.per_class_residual
    label = min(res, key=lambda c: (res[c], str(c)))
    return label, res[label], code
