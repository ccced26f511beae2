"""Frank-Wolfe variants and the fixed-point baseline for the TME problem.

All FW variants share the same closed-form step-size and rank-one state
update; they differ only in the direction oracle. The fixed-point iteration
is the classical O(np^2 + p^3) per-iteration baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from . import linalg, oracle
from .dataset import Dataset, check_necessary_conditions
from .errors import (
    AssumptionCheckFailed,
    Converged,
    DenominatorNonPositive,
    IterationFailure,
    NotDescent,
    NumericalBreakdown,
    PositiveDefinitenessLost,
)
from .linalg import SolverState
from .oracle import Direction, EigConfig

VARIANTS = ("fw", "afw", "gafw", "fpi")


@dataclass(frozen=True)
class SolveConfig:
    """Solver knobs: variant, oracle slack, budgets, stopping tolerance."""

    variant: str = "gafw"
    beta: float = 0.5
    max_iters: Optional[int] = None
    tol_residual: float = 1e-6
    eig: EigConfig = field(default_factory=EigConfig)
    refresh_interval: int = 50
    record_trace: bool = True
    residual_mode: str = "exact"  # 'exact' | 'estimate'
    max_cost_units: Optional[float] = None
    check_assumptions: bool = True
    # Reuse the previous iteration's extreme eigenvectors as power-method
    # starts; the gradient changes by a rank-one correction per step, so this
    # cuts the oracle's matvec count by an order of magnitude.
    warm_start: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.tol_residual <= 0:
            raise ValueError("tol_residual must be positive")
        if self.residual_mode not in ("exact", "estimate"):
            raise ValueError(f"unknown residual_mode {self.residual_mode!r}")
        if self.eig.beta != self.beta:
            object.__setattr__(self, "eig", replace(self.eig, beta=self.beta))

    def iteration_budget(self, p: int) -> int:
        if self.max_iters is not None:
            return self.max_iters
        return 10 * p * math.ceil(math.log(1.0 / self.tol_residual))


@dataclass(frozen=True)
class TraceRow:
    """Per-iteration diagnostics recorded after the update at iteration t."""

    t: int
    objective: float
    residual_spectral: float
    residual_min_eig: float
    l_t: float
    mu_t: float
    cost_units: float
    oracle_matvecs: int = 0
    fallback: bool = False


@dataclass(frozen=True)
class SolveResult:
    q_final: np.ndarray
    iters: int
    converged: bool
    trace: List[TraceRow]
    oracle_stats: int  # total power-method matvecs across all iterations
    objective0: float
    objective_final: float
    variant: str


def step_size(d: Direction):
    """(mu, gamma) from the Rayleigh data: mu = -a / (b^2 - a), gamma = -a / b^2."""
    a, b = d.rayleigh_grad, d.rayleigh_inv
    if a == 0.0:
        return 0.0, 0.0
    denom = b * b - a
    if denom <= 0.0:
        raise DenominatorNonPositive(f"(v^T Q^{{-1}} v)^2 - v^T grad v = {denom} <= 0")
    return -a / denom, -a / (b * b)


def residual_matrix(state: SolverState) -> np.ndarray:
    """M = Q - (p/n) sum_i x_i x_i^T / (x_i^T Q^{-1} x_i). O(np^2)."""
    w = linalg.point_weights(state)
    p, n = state.data.p, state.data.n
    x = state.data.points
    m = state.q - (p / n) * ((x / w) @ x.T)
    return linalg.symmetrize(m)


def tme_residual_spectral(state: SolverState) -> float:
    """Spectral norm of the TME residual matrix (dense eigendecomposition)."""
    vals = np.linalg.eigvalsh(residual_matrix(state))
    return float(np.max(np.abs(vals)))


def tme_residual_min_eig(state: SolverState) -> float:
    """Smallest eigenvalue of the TME residual matrix; <= 0, with equality
    only at the estimator itself."""
    vals = np.linalg.eigvalsh(residual_matrix(state))
    return float(vals[0])


def tme_residual_estimate(state: SolverState, power_iters: int = 12,
                          seed: int = 0) -> float:
    """Approximate spectral norm of the residual in O(np * power_iters),
    via power iterations on M^2 with a matrix-free M. Flagged approximate:
    a lower bound up to power-method slack."""
    w = linalg.point_weights(state)
    p, n = state.data.p, state.data.n
    x = state.data.points

    def m_apply(v):
        return state.q @ v - (p / n) * (x @ ((x.T @ v) / w))

    rng = np.random.default_rng(seed)
    u = rng.standard_normal(p)
    u /= np.linalg.norm(u)
    lam = 0.0
    for _ in range(power_iters):
        z = m_apply(m_apply(u))
        nz = np.linalg.norm(z)
        if nz == 0.0:
            return 0.0
        lam_next = float(u @ z)
        u = z / nz
        if abs(lam_next - lam) <= 1e-3 * abs(lam_next):
            lam = lam_next
            break
        lam = lam_next
    return math.sqrt(max(lam, 0.0))


def _direction(state: SolverState, cfg: SolveConfig,
               sqrt_q: Optional[np.ndarray],
               warm: Optional[oracle.WarmStart] = None):
    """Dispatch to the configured oracle; FW falls back to AFW on NotDescent."""
    if cfg.variant == "afw":
        return oracle.afw_direction(state, cfg.eig, warm=warm), False
    if cfg.variant == "gafw":
        if sqrt_q is None:
            sqrt_q = linalg.spd_sqrt(state.q)
        return oracle.gafw_direction(state, sqrt_q, cfg.eig, warm=warm), False
    try:
        return oracle.fw_direction(state, cfg.eig, warm=warm), False
    except NotDescent:
        return oracle.afw_direction(state, cfg.eig, warm=warm), True


def _row_residuals(state: SolverState, cfg: SolveConfig):
    if cfg.residual_mode == "exact":
        vals = np.linalg.eigvalsh(residual_matrix(state))
        return float(np.max(np.abs(vals))), float(vals[0])
    return tme_residual_estimate(state), float("nan")


def iterate_once(state: SolverState, cfg: SolveConfig,
                 sqrt_cache: Optional[np.ndarray] = None,
                 warm: Optional[oracle.WarmStart] = None) -> TraceRow:
    """One FW step: oracle, step-size, rank-one updates, periodic refresh.

    Raises Converged if the oracle certifies a vanishing gradient.
    """
    d, fallback = _direction(state, cfg, sqrt_cache, warm=warm)
    mu, gamma = step_size(d)
    # The cached-y update must see the pre-update inverse.
    linalg.update_cached_y(state, d.v, mu, gamma)
    state.q_inv = linalg.rank_one_inverse_update(state.q_inv, d.v, mu, gamma)
    state.q = linalg.symmetrize((1.0 - mu) * state.q + mu * np.outer(d.v, d.v))
    state.t += 1
    if state.refresh_interval > 0 and state.t % state.refresh_interval == 0:
        linalg.refresh_state(state)
    res_spec, res_min = _row_residuals(state, cfg)
    p, n = state.data.p, state.data.n
    cost = 1.0 + float(d.matvecs)
    if cfg.variant == "gafw":
        cost += p * p / n  # O(p^3) matrix square root, normalized by np
    return TraceRow(t=state.t, objective=linalg.objective_value(state),
                    residual_spectral=res_spec, residual_min_eig=res_min,
                    l_t=d.l_t, mu_t=mu, cost_units=cost,
                    oracle_matvecs=d.matvecs, fallback=fallback)


def _check_data(data: Dataset, enforce: bool):
    report = check_necessary_conditions(data)
    if enforce and not report.solvable:
        raise AssumptionCheckFailed(
            f"necessary conditions failed: rank_full={report.rank_full}, "
            f"n_gt_p={report.n_gt_p}")


def solve(data: Dataset, cfg: SolveConfig,
          q0: Optional[np.ndarray] = None,
          row_hook: Optional[Callable[[np.ndarray], None]] = None) -> SolveResult:
    """Run the configured FW variant (or FPI) until the TME residual drops
    below tol_residual or the iteration/cost budget runs out.

    The stopping test uses the cheap residual estimate, confirmed by one
    exact dense evaluation before declaring convergence. `row_hook`, if
    given, is called with the current iterate after every recorded iteration.
    Numerical breakdown mid-run raises IterationFailure carrying the trace
    accumulated so far and the last valid iterate.
    """
    if cfg.variant == "fpi":
        return fpi_solve(data, max_iters=cfg.iteration_budget(data.p),
                         tol_residual=cfg.tol_residual, q0=q0,
                         check_assumptions=cfg.check_assumptions,
                         record_trace=cfg.record_trace, row_hook=row_hook)
    _check_data(data, cfg.check_assumptions)
    if q0 is not None:
        q0 = np.asarray(q0, dtype=np.float64)
        q0 = q0 * (data.p / np.trace(q0))
    state = SolverState.initialize(data, q0=q0,
                                   refresh_interval=cfg.refresh_interval)
    objective0 = linalg.objective_value(state)
    trace: List[TraceRow] = []
    total_matvecs = 0
    total_cost = 0.0
    converged = False
    budget = cfg.iteration_budget(data.p)
    sqrt_q = None
    warm = oracle.WarmStart() if cfg.warm_start else None
    last_row: Optional[TraceRow] = None
    try:
        while state.t < budget:
            # Previous row's residual describes the current state, so reuse it.
            if last_row is None:
                res, res_is_exact = tme_residual_estimate(state), False
            else:
                res = last_row.residual_spectral
                res_is_exact = cfg.residual_mode == "exact"
            if res <= cfg.tol_residual and (
                    res_is_exact or tme_residual_spectral(state) <= cfg.tol_residual):
                converged = True
                break
            if cfg.variant == "gafw":
                sqrt_q = linalg.spd_sqrt(state.q)
            try:
                row = iterate_once(state, cfg, sqrt_cache=sqrt_q, warm=warm)
            except Converged:
                converged = True
                break
            last_row = row
            total_matvecs += row.oracle_matvecs
            total_cost += row.cost_units
            if cfg.record_trace:
                trace.append(row)
            if row_hook is not None:
                row_hook(state.q)
            if cfg.max_cost_units is not None and total_cost >= cfg.max_cost_units:
                break
    except (PositiveDefinitenessLost, NumericalBreakdown,
            DenominatorNonPositive) as exc:
        obj_last = trace[-1].objective if trace else objective0
        raise IterationFailure(exc, trace, state.q.copy(), obj_last) from exc
    if not converged and tme_residual_spectral(state) <= cfg.tol_residual:
        converged = True
    return SolveResult(q_final=state.q.copy(), iters=state.t,
                       converged=converged, trace=trace,
                       oracle_stats=total_matvecs, objective0=objective0,
                       objective_final=linalg.objective_value(state),
                       variant=cfg.variant)


def _eigh_inverse(q: np.ndarray):
    """(q_inv, logdet) via eigendecomposition; tolerates extreme conditioning
    (matching the classical implementations) but raises on eigenvalues <= 0."""
    vals, vecs = np.linalg.eigh(q)
    if vals[0] <= 0.0:
        raise PositiveDefinitenessLost(f"eigenvalue {vals[0]} <= 0 in FPI iterate")
    q_inv = linalg.symmetrize((vecs / vals) @ vecs.T)
    return q_inv, float(np.sum(np.log(vals)))


def fpi_solve(data: Dataset, max_iters: int = 250,
              tol_residual: float = 1e-6,
              q0: Optional[np.ndarray] = None,
              check_assumptions: bool = True,
              record_trace: bool = True,
              row_hook: Optional[Callable[[SolverState], None]] = None) -> SolveResult:
    """Classical fixed-point iteration Q <- (p/n) sum_i x_i x_i^T / (x_i^T Q^{-1} x_i),
    trace-normalized to p on return. O(np^2 + p^3) per iteration.

    Internally each iterate is rescaled to trace p. The FPI map is exactly
    scale-equivariant, so this never changes the returned (normalized)
    estimate; it only keeps magnitudes representable when the raw scale
    drifts geometrically.
    """
    _check_data(data, check_assumptions)
    p, n = data.p, data.n
    x = data.points
    if q0 is None:
        q = np.eye(p)
    else:
        q = linalg.symmetrize(np.asarray(q0, dtype=np.float64))
        q = q * (p / np.trace(q))
    trace: List[TraceRow] = []
    converged = False
    objective0 = math.nan
    objective = math.nan
    t = 0
    q_last_good = q
    try:
        while True:
            q_inv, logdet = _eigh_inverse(q)
            w = np.einsum("ij,ij->j", x, q_inv @ x)
            if np.any(w <= 0.0) or not np.all(np.isfinite(w)):
                raise NumericalBreakdown("non-positive x_i^T Q^{-1} x_i in FPI")
            objective = (p / n) * float(np.add.reduce(np.log(w))) + logdet
            q_last_good = q
            if t == 0:
                objective0 = objective
            fp_image = linalg.symmetrize((p / n) * ((x / w) @ x.T))
            vals = np.linalg.eigvalsh(q - fp_image)
            res_spec = float(np.max(np.abs(vals)))
            res_min = float(vals[0])
            if t > 0 and record_trace:
                trace.append(TraceRow(
                    t=t, objective=objective, residual_spectral=res_spec,
                    residual_min_eig=res_min, l_t=float("nan"),
                    mu_t=float("nan"), cost_units=float(p)))
            if t > 0 and row_hook is not None:
                row_hook(q)
            if res_spec <= tol_residual:
                converged = True
                break
            if t >= max_iters:
                break
            q = fp_image * (p / np.trace(fp_image))
            t += 1
    except (PositiveDefinitenessLost, NumericalBreakdown) as exc:
        raise IterationFailure(exc, trace, q_last_good, objective) from exc
    return SolveResult(q_final=q, iters=t, converged=converged,
                       trace=trace, oracle_stats=0, objective0=objective0,
                       objective_final=objective, variant="fpi")
