"""Tensor sparse coding of SPD descriptors by determinant maximization.

Given whitened atoms ``D_i`` (the query whitened to the identity), solve

    min_x  sum_i x_i (tr D_i + delta) - log det(M(x)),   M(x) = sum_i x_i D_i
    s.t.   x >= 0,  M(x) <= I

(``M(x) > 0`` is implied by the log-det term). The solver follows the
central path of the log barrier ``-mu (sum log x_i + log det(I - M))``
with damped Newton steps and a backtracking (Armijo) line search on the
barriered objective. The objective is recorded at the end of each barrier
stage; those centred points lie on the central path, along which the
objective cannot increase as the barrier weight shrinks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg as sla

from .covariance import CovarianceDescriptor, default_reg
from .spd import NotPositiveDefiniteError, WhitenedAtom, logdet_divergence, whiten


@dataclass(frozen=True)
class SolverOptions:
    mu0: float = 1.0
    mu_factor: float = 0.1
    gap_tol: float = 1e-10  # stop once the barrier duality-gap bound mu * (p + d) is below this
    newton_tol: float = 1e-18  # half squared Newton decrement
    max_newton: int = 60  # per barrier stage
    max_iterations: int = 1000  # total Newton steps
    armijo: float = 1e-4
    backtrack: float = 0.5
    support_tol: float = 1e-4  # coefficient counted significant above this fraction of max(x)


@dataclass
class MaxdetSolution:
    x: np.ndarray
    objective: float
    iterations: int
    converged: bool
    stationarity: float  # KKT residual with the barrier multiplier estimate; diagnostic only
    positive_definite: bool
    below_identity: bool
    max_eigenvalue: float
    min_eigenvalue: float
    history: list[float] = field(default_factory=list)  # objective at each barrier-stage centre
    barrier_history: list[list[float]] = field(default_factory=list)  # barriered objective per Newton step
    support_tol: float = 1e-4

    @property
    def feasible(self) -> bool:
        return bool(np.all(self.x >= 0) and self.positive_definite and self.below_identity)

    def support(self) -> np.ndarray:
        if self.x.size == 0 or self.x.max() <= 0:
            return np.zeros(0, dtype=int)
        return np.flatnonzero(self.x > self.support_tol * self.x.max())


def _as_stack(atoms) -> np.ndarray:
    if isinstance(atoms, np.ndarray) and atoms.ndim == 3:
        return np.asarray(atoms, dtype=np.float64)
    mats = [a.matrix if isinstance(a, WhitenedAtom) else np.asarray(a, dtype=np.float64) for a in atoms]
    if not mats:
        raise ValueError("no atoms")
    shapes = {m.shape for m in mats}
    if len(shapes) != 1:
        raise ValueError(f"atoms have mixed shapes {sorted(shapes)}")
    return np.stack(mats)


def _congruence(chol: np.ndarray, D: np.ndarray) -> np.ndarray:
    """``L^{-1} D_i L^{-T}`` for every atom, with ``chol`` the lower factor L."""
    p, d, _ = D.shape

    def solve_all(stack):
        # L^{-1} applied to each (d, d) slice of a (p, d, d) stack
        cols = sla.solve_triangular(chol, stack.transpose(1, 0, 2).reshape(d, p * d), lower=True)
        return cols.reshape(d, p, d).transpose(1, 0, 2)

    left = solve_all(D)
    return solve_all(left.transpose(0, 2, 1))


class _Problem:
    def __init__(self, D: np.ndarray, delta: float):
        self.D = D
        self.p, self.d, _ = D.shape
        self.traces = np.einsum("ijj->i", D)
        self.c = self.traces + delta
        self.eye = np.eye(self.d)

    def lmi(self, x):
        return np.tensordot(x, self.D, axes=1)

    def factors(self, x):
        """Cholesky factors of M and I - M, or None when x is outside the barrier domain."""
        if np.any(x <= 0):
            return None
        m = self.lmi(x)
        try:
            lm = np.linalg.cholesky(m)
            ln = np.linalg.cholesky(self.eye - m)
        except np.linalg.LinAlgError:
            return None
        return lm, ln

    def objective(self, x, lm) -> float:
        return float(self.c @ x - 2.0 * np.sum(np.log(np.diag(lm))))

    def barrier(self, x, ln) -> float:
        return float(np.sum(np.log(x)) + 2.0 * np.sum(np.log(np.diag(ln))))


def maxdet_solve(atoms, delta: float = 1e-3, opts: SolverOptions | None = None) -> MaxdetSolution:
    """Minimize the sparse log-det program over nonnegative coefficients.

    ``atoms`` are whitened atoms (``WhitenedAtom`` or bare (d, d) arrays,
    or a (p, d, d) stack). Returns the final iterate even when the
    iteration budget runs out, with ``converged=False``.
    """
    opts = opts or SolverOptions()
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    D = _as_stack(atoms)
    if not np.all(np.isfinite(D)):
        raise ValueError("atoms contain non-finite entries")
    prob = _Problem(D, delta)
    p, d = prob.p, prob.d

    lam_max = max(float(np.linalg.eigvalsh(a)[-1]) for a in D)
    if lam_max <= 0:
        raise ValueError("atoms have no positive eigenvalue; feasible region is empty")
    x = np.full(p, 0.5 / (p * lam_max))
    fac = prob.factors(x)
    if fac is None:
        raise ValueError("sum of atoms is singular; feasible region has empty interior")

    mu = opts.mu0
    f = prob.objective(x, fac[0])
    history: list[float] = []
    barrier_history: list[list[float]] = []
    total = 0
    stage_done = False
    while True:
        stage_done = False
        stage = [f - mu * prob.barrier(x, fac[1])]
        barrier_history.append(stage)
        for _ in range(opts.max_newton):
            if total >= opts.max_iterations:
                break
            lm, ln = fac
            bm = _congruence(lm, D)
            bn = _congruence(ln, D)
            gm = np.einsum("ijj->i", bm)
            gn = np.einsum("ijj->i", bn)
            grad = prob.c - gm - mu / x + mu * gn
            hess = np.einsum("ijk,ljk->il", bm, bm) + mu * (
                np.einsum("ijk,ljk->il", bn, bn) + np.diag(1.0 / x**2)
            )
            try:
                step = -sla.cho_solve(sla.cho_factor(hess, lower=True), grad)
            except (np.linalg.LinAlgError, ValueError):
                step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
            dec = -float(grad @ step)
            if dec / 2 <= opts.newton_tol:
                stage_done = True
                break
            phi = f - mu * prob.barrier(x, ln)
            t = 1.0
            # largest step keeping x > 0
            neg = step < 0
            if np.any(neg):
                t = min(1.0, 0.99 * float(np.min(-x[neg] / step[neg])))
            accepted = False
            while t > 1e-14:
                xn = x + t * step
                fn_fac = prob.factors(xn)
                if fn_fac is not None:
                    fn = prob.objective(xn, fn_fac[0])
                    phin = fn - mu * prob.barrier(xn, fn_fac[1])
                    if phin <= phi - opts.armijo * t * dec:
                        accepted = True
                        break
                t *= opts.backtrack
            total += 1
            if not accepted:
                stage_done = True  # no productive step at this barrier weight
                break
            x, fac, f = xn, fn_fac, fn
            stage.append(phin)
        history.append(f)
        if total >= opts.max_iterations or mu * (p + d) <= opts.gap_tol:
            break
        mu *= opts.mu_factor

    lm, ln = fac
    m = prob.lmi(x)
    eig = np.linalg.eigvalsh(m)
    gm = np.einsum("ijj->i", _congruence(lm, D))
    gn = np.einsum("ijj->i", _congruence(ln, D))
    # Lagrangian gradient with mu (I - M)^{-1} as the multiplier estimate for M <= I
    grad_l = prob.c - gm + mu * gn
    stat = float(np.max(np.abs(x - np.maximum(0.0, x - grad_l))))
    # centred at the last stage, so the duality gap is at most mu * (p + d)
    converged = bool(stage_done and mu * (p + d) <= opts.gap_tol)
    return MaxdetSolution(
        x=x,
        objective=f,
        iterations=total,
        converged=converged,
        stationarity=stat,
        positive_definite=bool(eig[0] > 0),
        below_identity=bool(eig[-1] <= 1 + 1e-8),
        max_eigenvalue=float(eig[-1]),
        min_eigenvalue=float(eig[0]),
        history=history,
        barrier_history=barrier_history,
        support_tol=opts.support_tol,
    )


def maxdet_objective(atoms, x: np.ndarray, delta: float) -> float:
    """Objective at ``x`` (``inf`` outside ``M(x) > 0``); ignores the ``M <= I`` constraint."""
    D = _as_stack(atoms)
    x = np.asarray(x, dtype=np.float64)
    m = np.tensordot(x, D, axes=1)
    sign, logdet = np.linalg.slogdet(m)
    if sign <= 0:
        return np.inf
    return float(x @ np.einsum("ijj->i", D) - logdet + delta * np.sum(np.abs(x)))


@dataclass(frozen=True)
class TensorDictionary:
    atoms: np.ndarray  # (p, d, d)
    labels: np.ndarray

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @property
    def d(self) -> int:
        return self.atoms.shape[1]

    @property
    def classes(self) -> list:
        return sorted(set(self.labels.tolist()))


def build_tensor_dictionary(descriptors: Sequence[CovarianceDescriptor] | np.ndarray, labels: Sequence | None = None) -> TensorDictionary:
    """Stack SPD atoms; raises if any atom is not positive definite."""
    if isinstance(descriptors, np.ndarray):
        atoms = np.asarray(descriptors, dtype=np.float64)
        if labels is None:
            raise ValueError("labels required for a bare atom stack")
    else:
        if len(descriptors) == 0:
            raise ValueError("cannot build a dictionary from zero descriptors")
        ds = {c.d for c in descriptors}
        if len(ds) != 1:
            raise ValueError(f"descriptors have mixed dimensions {sorted(ds)}")
        atoms = np.stack([c.matrix for c in descriptors])
        if labels is None:
            labels = [c.label for c in descriptors]
    if atoms.ndim != 3 or atoms.shape[1] != atoms.shape[2] or atoms.shape[0] == 0:
        raise ValueError("atoms must be a nonempty (p, d, d) stack")
    if len(labels) != atoms.shape[0]:
        raise ValueError("one label per atom required")
    for i, a in enumerate(atoms):
        try:
            np.linalg.cholesky(0.5 * (a + a.T))
        except np.linalg.LinAlgError:
            raise NotPositiveDefiniteError(f"atom {i} is not positive definite") from None
    atoms = 0.5 * (atoms + atoms.transpose(0, 2, 1))
    atoms.setflags(write=False)
    lab = np.asarray(list(labels), dtype=object)
    lab.setflags(write=False)
    return TensorDictionary(atoms, lab)


def tsc_classify_clip(q, dic: TensorDictionary, delta: float = 1e-3, opts: SolverOptions | None = None, floor: float = 0.0):
    """Code a query covariance over the dictionary and score each class.

    Each class is scored by the Burg divergence between the query and the
    reconstruction from that class's atoms alone; classes with no
    significant coefficient score ``inf``. Returns ``(label, scores, solution)``.
    """
    qm = q.matrix if isinstance(q, CovarianceDescriptor) else np.asarray(q, dtype=np.float64)
    if qm.shape != (dic.d, dic.d):
        raise ValueError(f"query dimension {qm.shape} does not match dictionary d={dic.d}")
    white = whiten(qm, dic.atoms, floor)
    sol = maxdet_solve(white, delta, opts)
    # interior-point iterates are strictly positive; coefficients outside the
    # significant support are numerically zero
    significant = np.zeros(dic.size, dtype=bool)
    significant[sol.support()] = True
    scores = {}
    for c in dic.classes:
        sel = dic.labels == c
        if not np.any(significant[sel]):
            scores[c] = np.inf
            continue
        recon = np.tensordot(sol.x[sel], dic.atoms[sel], axes=1)
        try:
            scores[c] = logdet_divergence(recon, qm)
        except NotPositiveDefiniteError:
            scores[c] = logdet_divergence(recon + default_reg(qm) * np.eye(dic.d), qm)
    label = min(scores, key=lambda c: (scores[c], str(c)))
    return label, scores, sol
