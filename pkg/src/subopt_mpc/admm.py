"""Over-relaxed ADMM on the condensed problem.

One iteration of the operator T at state x_t, with relaxation alpha and step
size rho:

    u+ = (2M + rho I)^{-1} rho (r - v)          (unconstrained primal)
    w  = alpha u+ + (1 - alpha) r + v
    r+ = proj_{W(x_t)}(w)                       (safe primal)
    v+ = w - r+                                 (scaled dual; y = rho v)

The iterate phi = (r, y) is what the closed loop carries across control
steps.  Convergence is measured in the weighted norm ||.||_F induced by
F = Fbar kron I_s with Fbar = [[1, 1-alpha], [1-alpha, 1]]; the weighting
applies to the pair (r, v) = (r, y/rho), which is the scaling in which the
per-iteration contraction actually holds.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import CapExceeded, ConfigError, SingularSystem
from .model import CondensedProblem, stack_constraints
from .qp import project, solve_exact_ocp

__all__ = ["AdmmParams", "AdmmIterate", "FixedPoint", "u_update", "r_update",
           "v_update", "step", "run", "solve_to_fixed_point",
           "fixed_point_oracle", "f_norm"]


@dataclass(frozen=True)
class AdmmParams:
    """Relaxation alpha in (0,2), step size rho > 0, rate exponent epsilon,
    and the per-control-step iteration budget ell."""

    alpha: float = 1.95
    rho: float = 50.0
    epsilon: float = 0.0
    ell: int = 1

    def __post_init__(self):
        if not 0.0 < self.alpha < 2.0:
            raise ConfigError(f"alpha must lie in (0, 2), got {self.alpha}")
        if self.rho <= 0.0:
            raise ConfigError(f"rho must be positive, got {self.rho}")
        if int(self.ell) < 1:
            raise ConfigError(f"ell must be >= 1, got {self.ell}")
        object.__setattr__(self, "ell", int(self.ell))


@dataclass(frozen=True, eq=False)
class AdmmIterate:
    """Iterate carrying the safe primal r, dual y = rho*v, and the auxiliary
    pair (u, v) from the last completed step."""

    r: np.ndarray
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray

    @classmethod
    def zero(cls, s: int) -> "AdmmIterate":
        z = np.zeros(s)
        return cls(r=z.copy(), y=z.copy(), u=z.copy(), v=z.copy())

    @property
    def phi(self) -> np.ndarray:
        return np.concatenate([self.r, self.y])


@dataclass(frozen=True, eq=False)
class FixedPoint:
    """Limit phi* = (r*, y*) of the iteration at a fixed state."""

    phi: np.ndarray
    r: np.ndarray
    y: np.ndarray
    iterations: int
    residual: float


@functools.lru_cache(maxsize=32)
def _factor(problem: CondensedProblem, rho: float):
    mat = 2.0 * problem.M + rho * np.eye(problem.s)
    try:
        return cho_factor(mat)
    except np.linalg.LinAlgError as exc:  # unreachable for M >= 0, rho > 0
        raise SingularSystem(f"2M + rho*I not factorizable: {exc}") from exc


def f_norm(params: AdmmParams, dr: np.ndarray, dy: np.ndarray) -> float:
    """Weighted norm of a phi-difference (dr, dy): sqrt(z' (Fbar kron I) z)
    with z = [dr; dy/rho]."""
    dv = np.asarray(dy, dtype=float) / params.rho
    dr = np.asarray(dr, dtype=float)
    c = 1.0 - params.alpha
    val = dr @ dr + dv @ dv + 2.0 * c * (dr @ dv)
    return float(np.sqrt(max(val, 0.0)))


class _StateWorkspace:
    """Constraint set of one state plus a fixed feasible start point.

    The start point makes every projection a pure function of its inputs
    (no phase-1 rerun), which keeps run() composition bit-exact.
    """

    __slots__ = ("w_set", "start")

    def __init__(self, problem: CondensedProblem, x_t):
        self.w_set = stack_constraints(problem, x_t)
        self.start = project(np.zeros(problem.s), self.w_set)


def u_update(problem: CondensedProblem, params: AdmmParams,
             r: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Unconstrained primal update u = (2M + rho I)^{-1} rho (r - v)."""
    return cho_solve(_factor(problem, params.rho), params.rho * (r - v))


def r_update(problem: CondensedProblem, params: AdmmParams, x_t,
             u_next: np.ndarray, r: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Safe primal update: project the relaxed point onto W(x_t)."""
    ws = _StateWorkspace(problem, x_t)
    w = params.alpha * u_next + (1.0 - params.alpha) * r + v
    return project(w, ws.w_set, start=ws.start)


def v_update(params: AdmmParams, u_next: np.ndarray, r_prev: np.ndarray,
             r_next: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Scaled dual update v+ = v + alpha u+ + (1 - alpha) r - r+."""
    return v + params.alpha * u_next + (1.0 - params.alpha) * r_prev - r_next


def _step_ws(problem, params, ws: _StateWorkspace, it: AdmmIterate) -> AdmmIterate:
    u1 = cho_solve(_factor(problem, params.rho), params.rho * (it.r - it.v))
    w = params.alpha * u1 + (1.0 - params.alpha) * it.r + it.v
    r1 = project(w, ws.w_set, start=ws.start)
    v1 = w - r1
    return AdmmIterate(r=r1, y=params.rho * v1, u=u1, v=v1)


def step(problem: CondensedProblem, params: AdmmParams, x_t,
         iterate: AdmmIterate) -> AdmmIterate:
    """One application of the operator T at state x_t."""
    return _step_ws(problem, params, _StateWorkspace(problem, x_t), iterate)


def _coerce_iterate(warm, params: AdmmParams, s: int) -> AdmmIterate:
    if warm is None:
        return AdmmIterate.zero(s)
    if isinstance(warm, AdmmIterate):
        return warm
    if isinstance(warm, FixedPoint):
        return AdmmIterate(r=warm.r.copy(), y=warm.y.copy(),
                           u=warm.r.copy(), v=warm.y / params.rho)
    warm = np.asarray(warm, dtype=float)
    if warm.ndim == 1 and warm.shape[0] == 2 * s:
        r0, y0 = warm[:s].copy(), warm[s:].copy()
    elif warm.ndim == 2 and warm.shape == (2, s):
        r0, y0 = warm[0].copy(), warm[1].copy()
    else:
        r0 = np.asarray(warm[0], dtype=float).reshape(-1)
        y0 = np.asarray(warm[1], dtype=float).reshape(-1)
    # u of a raw (r, y) warm start is undefined; carry r as a placeholder.
    return AdmmIterate(r=r0, y=y0, u=r0.copy(), v=y0 / params.rho)


def run(problem: CondensedProblem, params: AdmmParams, x_t, warm=None,
        ell: Optional[int] = None) -> AdmmIterate:
    """ell applications of T at state x_t from the warm start (r0, y0).

    ell = 0 returns the warm start unchanged.  Composition is exact:
    run(x, warm, a + b) equals run(x, run(x, warm, a), b) bit for bit.
    """
    it = _coerce_iterate(warm, params, problem.s)
    count = params.ell if ell is None else int(ell)
    if count < 0:
        raise ConfigError(f"ell must be >= 0, got {count}")
    if count == 0:
        return it
    ws = _StateWorkspace(problem, x_t)
    for _ in range(count):
        it = _step_ws(problem, params, ws, it)
    return it


def solve_to_fixed_point(problem: CondensedProblem, params: AdmmParams, x_t,
                         warm=None, tol: Optional[float] = None,
                         cap: int = 20_000) -> FixedPoint:
    """Iterate T until the step residual ||T(phi) - phi||_F is below tol
    (default 1e-12 * (1 + ||phi||_F)); raises CapExceeded past the cap."""
    it = _coerce_iterate(warm, params, problem.s)
    ws = _StateWorkspace(problem, x_t)
    residual = np.inf
    for k in range(1, cap + 1):
        nxt = _step_ws(problem, params, ws, it)
        residual = f_norm(params, nxt.r - it.r, nxt.y - it.y)
        it = nxt
        limit = tol if tol is not None else 1e-12 * (1.0 + f_norm(params, it.r, it.y))
        if residual <= limit:
            return FixedPoint(phi=it.phi, r=it.r, y=it.y, iterations=k,
                              residual=residual)
    raise CapExceeded(f"no fixed point within {cap} iterations",
                      residual=residual, iterations=cap)


def fixed_point_oracle(problem: CondensedProblem, params: AdmmParams, x_t,
                       verify_tol: float = 1e-10) -> FixedPoint:
    """phi*(x_t) via the exact QP solution: r* solves the condensed problem
    and y* = -2 M r* (stationarity of the u-update at consensus u = r).

    The one-step residual ||T(phi*) - phi*||_F is verified below verify_tol;
    on the (never observed) chance it is not, falls back to iterating T.
    """
    r_star = solve_exact_ocp(problem, x_t).u
    y_star = -2.0 * (problem.M @ r_star)
    ws = _StateWorkspace(problem, x_t)
    cand = AdmmIterate(r=r_star, y=y_star, u=r_star.copy(), v=y_star / params.rho)
    nxt = _step_ws(problem, params, ws, cand)
    residual = f_norm(params, nxt.r - r_star, nxt.y - y_star)
    scale = 1.0 + f_norm(params, r_star, y_star)
    if residual <= verify_tol * scale:
        return FixedPoint(phi=cand.phi, r=r_star, y=y_star, iterations=0,
                          residual=residual)
    return solve_to_fixed_point(problem, params, x_t, warm=cand)
