"""Dense SPD primitives and the cached-state machinery shared by all solvers.

The solver state carries the iterate Q, a maintained inverse, and the cached
vectors y_i = Q^{-1} x_i. All per-iteration operations here cost O(np + p^2);
the dense gradient and the state refresh are the only O(np^2) / O(p^3) paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dataset import Dataset
from .errors import DenominatorNonPositive, NumericalBreakdown, PositiveDefinitenessLost


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def cholesky_or_raise(a: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise PositiveDefinitenessLost(str(exc)) from exc


def logdet_spd(a: np.ndarray) -> float:
    """log det of an SPD matrix via Cholesky; overflow-safe for large p."""
    chol = cholesky_or_raise(a)
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def spd_inverse(a: np.ndarray) -> np.ndarray:
    """Symmetric inverse of an SPD matrix (Cholesky-validated)."""
    chol = cholesky_or_raise(a)
    inv_chol = np.linalg.inv(chol)
    return inv_chol.T @ inv_chol


def spd_sqrt(a: np.ndarray) -> np.ndarray:
    """Symmetric square root via eigendecomposition. O(p^3)."""
    vals, vecs = np.linalg.eigh(symmetrize(a))
    if vals[0] <= 0:
        raise PositiveDefinitenessLost(f"eigenvalue {vals[0]} <= 0 in spd_sqrt")
    return symmetrize((vecs * np.sqrt(vals)) @ vecs.T)


@dataclass
class SolverState:
    """Mutable iterate: Q, its maintained inverse, and cached y_i = Q^{-1} x_i.

    Single-owner mutable; never share a state across threads.
    """

    q: np.ndarray
    q_inv: np.ndarray
    y: np.ndarray
    data: Dataset
    t: int = 0
    refresh_interval: int = 50

    @classmethod
    def initialize(cls, data: Dataset, q0: Optional[np.ndarray] = None,
                   refresh_interval: int = 50) -> "SolverState":
        """Build a consistent state from Q0 (default: the identity)."""
        if q0 is None:
            q = np.eye(data.p)
            q_inv = np.eye(data.p)
        else:
            q = symmetrize(np.asarray(q0, dtype=np.float64))
            q_inv = spd_inverse(q)
        y = q_inv @ data.points
        return cls(q=q, q_inv=q_inv, y=y, data=data,
                   refresh_interval=refresh_interval)


def point_weights(state: SolverState) -> np.ndarray:
    """The n inner products w_i = x_i^T y_i = x_i^T Q^{-1} x_i."""
    w = np.einsum("ij,ij->j", state.data.points, state.y)
    if np.any(w <= 0.0) or not np.all(np.isfinite(w)):
        raise NumericalBreakdown("some x_i^T Q^{-1} x_i is not strictly positive")
    return w


def _chunked_sum(terms: np.ndarray, chunk: int = 1024) -> float:
    """Fixed-chunk tree reduction; deterministic, may differ from the
    sequential order by <= 1e-12 on realistic magnitudes."""
    if terms.size <= chunk:
        return float(np.add.reduce(terms))
    partials = [np.add.reduce(terms[i:i + chunk]) for i in range(0, terms.size, chunk)]
    return _chunked_sum(np.asarray(partials), chunk)


def objective_value(state: SolverState, reduction: str = "sequential") -> float:
    """f(Q) = (p/n) * sum_i log(x_i^T Q^{-1} x_i) + log det Q."""
    w = point_weights(state)
    terms = np.log(w)
    if reduction == "sequential":
        total = float(np.add.reduce(terms))
    elif reduction == "chunked":
        total = _chunked_sum(terms)
    else:
        raise ValueError(f"unknown reduction {reduction!r}")
    p, n = state.data.p, state.data.n
    return (p / n) * total + logdet_spd(state.q)


def gradient_dense(state: SolverState) -> np.ndarray:
    """Full gradient matrix -(p/n) sum_i y_i y_i^T / w_i + Q^{-1}.

    O(np^2); intended for tests, diagnostics, and small p.
    """
    w = point_weights(state)
    p, n = state.data.p, state.data.n
    scaled = state.y / w
    grad = -(p / n) * (scaled @ state.y.T) + state.q_inv
    return symmetrize(grad)


def gradient_matvec(state: SolverState, v: np.ndarray) -> np.ndarray:
    """grad f(Q) @ v in O(np + p^2) using the cached y_i."""
    w = point_weights(state)
    p, n = state.data.p, state.data.n
    s = state.y.T @ v
    return -(p / n) * (state.y @ (s / w)) + state.q_inv @ v


def rank_one_inverse_update(q_inv: np.ndarray, v: np.ndarray,
                            mu: float, gamma: float) -> np.ndarray:
    """Sherman-Morrison inverse of (1-mu) Q + mu v v^T given Q^{-1}."""
    if mu >= 1.0:
        raise DenominatorNonPositive(f"mu = {mu} >= 1")
    qiv = q_inv @ v
    denom = 1.0 + gamma * float(v @ qiv)
    if denom <= 0.0:
        raise DenominatorNonPositive(f"1 + gamma v^T Q^{{-1}} v = {denom} <= 0")
    out = (q_inv - (gamma / denom) * np.outer(qiv, qiv)) / (1.0 - mu)
    return symmetrize(out)


def update_cached_y(state: SolverState, v: np.ndarray,
                    mu: float, gamma: float) -> None:
    """Rank-one update of all cached y_i, in place. O(np + p^2).

    Must run while state.q_inv is still the PRE-update inverse.
    """
    if mu >= 1.0:
        raise DenominatorNonPositive(f"mu = {mu} >= 1")
    qiv = state.q_inv @ v
    denom = 1.0 + gamma * float(v @ qiv)
    if denom <= 0.0:
        raise DenominatorNonPositive(f"1 + gamma v^T Q^{{-1}} v = {denom} <= 0")
    s = state.y.T @ v
    state.y -= (gamma / denom) * np.outer(qiv, s)
    state.y /= (1.0 - mu)


def refresh_state(state: SolverState) -> None:
    """Recompute q_inv and y from q; restores the maintenance invariants."""
    state.q = symmetrize(state.q)
    state.q_inv = spd_inverse(state.q)
    state.y = state.q_inv @ state.data.points
