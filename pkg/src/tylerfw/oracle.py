"""Randomized direction oracles for the three Frank-Wolfe variants.

Each oracle returns a vector v with ||v|| = sqrt(p) satisfying a Rayleigh
certificate against an extreme eigenvalue of the (implicit) gradient, found
with power iterations on shifted PSD operators. No dense gradient matrix is
ever formed: every operator application costs O(np + p^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import linalg
from .errors import Converged, NotDescent, ZeroOperator
from .linalg import SolverState

DIRECTION_KINDS = ("fw", "afw", "gafw")


@dataclass(frozen=True)
class Direction:
    """Oracle output: v (norm sqrt(p)) plus its Rayleigh data.

    rayleigh_grad = v^T grad f(Q) v, rayleigh_inv = v^T Q^{-1} v (> 1 always,
    since Tr(Q) = p forces lambda_max(Q) < p). matvecs counts the gradient
    applications the oracle spent, for cost accounting.
    """

    v: np.ndarray
    rayleigh_grad: float
    rayleigh_inv: float
    kind: str
    matvecs: int = 0

    @property
    def l_t(self) -> float:
        return self.rayleigh_grad / self.rayleigh_inv


@dataclass(frozen=True)
class EigConfig:
    """Oracle parameters: slack beta in [0,1), power budget, seed.

    max_power_iters defaults to 8 * ceil(log(p / delta)) at call time.
    stop_rtol enables early exit once the Rayleigh estimate stagnates; set
    to 0 to always exhaust the budget.
    """

    beta: float = 0.5
    max_power_iters: Optional[int] = None
    rng_seed: int = 0
    delta: float = 1e-6
    stop_rtol: float = 1e-4

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must lie in [0, 1)")

    @property
    def beta_tilde(self) -> float:
        # Largest value with (1 - 3b) / (1 - b) >= 1 - beta.
        return self.beta / (3.0 - self.beta)

    def budget(self, p: int) -> int:
        if self.max_power_iters is not None:
            return self.max_power_iters
        return 8 * math.ceil(math.log(p / self.delta))


def power_method(apply: Callable[[np.ndarray], np.ndarray], p: int,
                 cfg: EigConfig, rng: Optional[np.random.Generator] = None,
                 budget: Optional[int] = None,
                 start: Optional[np.ndarray] = None,
                 exact_rayleigh: bool = True):
    """Power iterations on a symmetric PSD operator.

    Returns (lambda_hat, u, iters) with unit-norm u and, when
    exact_rayleigh is set, lambda_hat = u^T apply(u) at the returned vector
    (one extra operator application). With exact_rayleigh=False the returned
    estimate is the Rayleigh quotient of the penultimate iterate — still an
    exact quotient of some unit vector, just not of u. Deterministic given
    the generator state. Raises ZeroOperator if the operator annihilates the
    start vector.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    if start is None:
        u = rng.standard_normal(p)
        u /= np.linalg.norm(u)
    else:
        u = start / np.linalg.norm(start)
    budget = cfg.budget(p) if budget is None else budget
    lam = 0.0
    for k in range(1, budget + 1):
        z = apply(u)
        nz = np.linalg.norm(z)
        if nz == 0.0:
            if k == 1:
                raise ZeroOperator(u)
            break
        u_next = z / nz
        lam_next = float(u @ z)
        stop = cfg.stop_rtol > 0 and k > 1 and \
            abs(lam_next - lam) <= cfg.stop_rtol * abs(lam_next)
        u, lam = u_next, lam_next
        if stop:
            break
    if exact_rayleigh:
        lam = float(u @ apply(u))
    return lam, u, k


class _CountingMatvec:
    """Wraps an operator and counts applications."""

    def __init__(self, fn):
        self.fn = fn
        self.count = 0

    def __call__(self, v):
        self.count += 1
        return self.fn(v)


@dataclass
class WarmStart:
    """Start vectors carried across solver iterations.

    Successive gradients differ by a (near) rank-one correction, so the
    previous extreme eigenvectors are excellent starting points and cut the
    per-call power-iteration count to a handful once the solve is underway.
    """

    norm: Optional[np.ndarray] = None
    minus: Optional[np.ndarray] = None
    plus: Optional[np.ndarray] = None


def _estimate_operator_norm(matvec, p, cfg, rng, warm=None):
    """Stage 1: power method on A^2 yields C = sqrt(u^T A^2 u) <= ||A||_2,
    with C >= (1 - beta_tilde) ||A||_2 w.h.p."""
    start = warm.norm if warm is not None else None
    # An exact Rayleigh quotient at the returned vector is not needed here:
    # any unit vector's quotient already lower-bounds ||A||^2.
    lam_sq, u, _ = power_method(lambda w: matvec(matvec(w)), p, cfg, rng=rng,
                                start=start, exact_rayleigh=False)
    if warm is not None:
        warm.norm = u
    return math.sqrt(max(lam_sq, 0.0))


def _shifted_candidates(matvec, p, cfg, rng, want_plus=True, warm=None):
    """Stages 2-3 of the magnitude oracle: power iterations on the PSD
    shifts M_pm = shift*I +/- A, then compare the Rayleigh quotients."""
    c = _estimate_operator_norm(matvec, p, cfg, rng, warm=warm)
    if c == 0.0:
        raise Converged("gradient norm estimate is exactly zero")
    shift = c / (1.0 - cfg.beta_tilde)

    def m_minus(w):
        return shift * w - matvec(w)

    # lam = u^T (shift*I -/+ A) u is exact at the returned u, so the Rayleigh
    # quotient of A itself falls out by subtraction — no extra matvec.
    lam_m, u_minus, _ = power_method(m_minus, p, cfg, rng=rng,
                                     start=warm.minus if warm else None)
    ray_minus = shift - lam_m
    if warm is not None:
        warm.minus = u_minus
    if not want_plus:
        return c, shift, u_minus, ray_minus, None, None

    def m_plus(w):
        return shift * w + matvec(w)

    lam_p, u_plus, _ = power_method(m_plus, p, cfg, rng=rng,
                                    start=warm.plus if warm else None)
    ray_plus = lam_p - shift
    if warm is not None:
        warm.plus = u_plus
    return c, shift, u_minus, ray_minus, u_plus, ray_plus


def _magnitude_winner(u_minus, ray_minus, u_plus, ray_plus):
    # Tie goes to the descent side u_minus, for determinism.
    if abs(ray_plus) > abs(ray_minus):
        return u_plus, ray_plus
    return u_minus, ray_minus


def afw_direction(state: SolverState, cfg: EigConfig,
                  warm: Optional[WarmStart] = None) -> Direction:
    """Largest-magnitude Rayleigh direction: |v^T grad v| >= p(1-beta)||grad||_2."""
    matvec = _CountingMatvec(lambda w: linalg.gradient_matvec(state, w))
    rng = np.random.default_rng(cfg.rng_seed)
    p = state.data.p
    try:
        _, _, u_m, ray_m, u_p, ray_p = _shifted_candidates(matvec, p, cfg, rng,
                                                           warm=warm)
    except ZeroOperator as exc:
        raise Converged("gradient operator vanished") from exc
    u, ray = _magnitude_winner(u_m, ray_m, u_p, ray_p)
    v = math.sqrt(p) * u
    return Direction(v=v, rayleigh_grad=p * ray,
                     rayleigh_inv=float(v @ (state.q_inv @ v)),
                     kind="afw", matvecs=matvec.count)


def fw_direction(state: SolverState, cfg: EigConfig,
                 warm: Optional[WarmStart] = None) -> Direction:
    """Smallest-eigenvalue direction: -v^T grad v >= -p(1-beta) lambda_min(grad).

    The exact budget the theory prescribes depends on the unknown eigenvalue
    ratio, so the M_minus power iterations get an escalating budget (up to
    64x the base) until the descent certificate v^T grad v <= 0 holds;
    NotDescent is raised if it never does.
    """
    matvec = _CountingMatvec(lambda w: linalg.gradient_matvec(state, w))
    rng = np.random.default_rng(cfg.rng_seed)
    p = state.data.p
    try:
        c = _estimate_operator_norm(matvec, p, cfg, rng, warm=warm)
    except ZeroOperator as exc:
        raise Converged("gradient operator vanished") from exc
    if c == 0.0:
        raise Converged("gradient norm estimate is exactly zero")
    shift = c / (1.0 - cfg.beta_tilde)

    def m_minus(w):
        return shift * w - matvec(w)

    base = cfg.budget(p)
    u = warm.minus if warm is not None else None
    for scale in (1, 2, 4, 8, 16, 32, 64):
        lam, u, _ = power_method(m_minus, p, cfg, rng=rng,
                                 budget=base * scale, start=u)
        ray = shift - lam
        if ray <= 0.0:
            if warm is not None:
                warm.minus = u
            v = math.sqrt(p) * u
            return Direction(v=v, rayleigh_grad=p * ray,
                             rayleigh_inv=float(v @ (state.q_inv @ v)),
                             kind="fw", matvecs=matvec.count)
    raise NotDescent("descent certificate failed after the full budget")


def gafw_direction(state: SolverState, sqrt_q: np.ndarray,
                   cfg: EigConfig,
                   warm: Optional[WarmStart] = None) -> Direction:
    """Geodesic direction: |v^T grad v| / (v^T Q^{-1} v) >= (1-beta) ||Q^{1/2} grad Q^{1/2}||_2.

    Runs the magnitude oracle on w -> Q^{1/2} grad(Q^{1/2} w) and maps the
    winning unit vector u back through v = sqrt(p) Q^{1/2} u / ||Q^{1/2} u||.
    """
    grad_mv = _CountingMatvec(lambda w: linalg.gradient_matvec(state, w))
    rng = np.random.default_rng(cfg.rng_seed)
    p = state.data.p

    def geo_matvec(w):
        return sqrt_q @ grad_mv(sqrt_q @ w)

    try:
        _, _, u_m, ray_m, u_p, ray_p = _shifted_candidates(geo_matvec, p, cfg,
                                                           rng, warm=warm)
    except ZeroOperator as exc:
        raise Converged("geodesic gradient operator vanished") from exc
    u, _ = _magnitude_winner(u_m, ray_m, u_p, ray_p)
    sv = sqrt_q @ u
    v = math.sqrt(p) * sv / np.linalg.norm(sv)
    ray_grad = float(v @ grad_mv(v))
    return Direction(v=v, rayleigh_grad=ray_grad,
                     rayleigh_inv=float(v @ (state.q_inv @ v)),
                     kind="gafw", matvecs=grad_mv.count)
