"""Dense strictly convex quadratic programming.

Primal active-set method with the equality constraints eliminated through a
null-space factorization (SVD of the equality matrix).  Small and exact:
this is the optimality oracle the rest of the toolkit leans on, so the
implementation favours determinism and tight KKT residuals over scale.

Solves   min_z  1/2 z^T P z + q^T z   s.t.  E z = e,  C z <= d.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .errors import Infeasible, IllConditioned, MaxIterations
from .model import CondensedProblem, Polytope, StackedConstraints, stack_constraints

__all__ = ["QpInstance", "QpSolution", "OcpSolution", "solve_qp", "project",
           "solve_exact_ocp"]

# Numerical tolerances of the active-set machinery. Feasibility violations up
# to _FEAS_TOL are accepted; duals down to -_DUAL_TOL count as nonnegative.
_FEAS_TOL = 1e-9
_DUAL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class QpInstance:
    """One dense QP: min 1/2 z'Pz + q'z s.t. Ez = e, Cz <= d."""

    P: np.ndarray
    q: np.ndarray
    E: np.ndarray
    e: np.ndarray
    C: np.ndarray
    d: np.ndarray


@dataclass(frozen=True, eq=False)
class QpSolution:
    """Primal/dual solution with the active inequality set and KKT residual."""

    z: np.ndarray
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    active: tuple
    status: str
    iterations: int
    kkt_residual: float
    objective: float


@dataclass(frozen=True, eq=False)
class OcpSolution:
    """Solution of the condensed optimal control problem at one state."""

    u: np.ndarray
    value: float
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    active: tuple
    kkt_residual: float


def _phase1(Ct: np.ndarray, dt: np.ndarray) -> np.ndarray:
    """Feasible point of {t : Ct t <= dt} by minimizing total violation."""
    k, nt = Ct.shape
    if k == 0:
        return np.zeros(nt)
    cost = np.concatenate([np.zeros(nt), np.ones(k)])
    A_ub = np.block([[Ct, -np.eye(k)], [np.zeros((k, nt)), -np.eye(k)]])
    b_ub = np.concatenate([dt, np.zeros(k)])
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=(None, None), method="highs")
    if not res.success or res.fun > 1e-7:
        raise Infeasible("constraint set is empty (phase-1 violation "
                         f"{res.fun if res.success else 'n/a'})")
    return res.x[:nt]


def _kkt_residual(P, q, E, e, C, d, z, lam, mu) -> float:
    station = P @ z + q
    if E.shape[0]:
        station = station + E.T @ lam
    if C.shape[0]:
        station = station + C.T @ mu
    parts = [np.max(np.abs(station))]
    if E.shape[0]:
        parts.append(np.max(np.abs(E @ z - e)))
    if C.shape[0]:
        slack = C @ z - d
        parts.append(max(0.0, float(np.max(slack))))
        parts.append(float(np.max(np.abs(mu * slack))))
    return float(max(parts))


def solve_qp(inst: QpInstance, tol: float = 1e-10, max_iter: int = 500,
             start: Optional[np.ndarray] = None) -> QpSolution:
    """Solve a strictly convex QP by the primal active-set method.

    `start`, when given, must be a feasible primal point; it skips the
    phase-1 LP (used by the ADMM projection loop, where one feasible point
    per constraint set is known up front).  Ties in the ratio test and in
    the multiplier drop are broken by smallest constraint index, so the
    solve path is deterministic.
    """
    P = np.asarray(inst.P, dtype=float)
    q = np.asarray(inst.q, dtype=float).reshape(-1)
    s = q.shape[0]
    E = np.asarray(inst.E, dtype=float).reshape(-1, s) if inst.E is not None else np.zeros((0, s))
    e = np.asarray(inst.e, dtype=float).reshape(-1) if inst.e is not None else np.zeros(0)
    C = np.asarray(inst.C, dtype=float).reshape(-1, s) if inst.C is not None else np.zeros((0, s))
    d = np.asarray(inst.d, dtype=float).reshape(-1) if inst.d is not None else np.zeros(0)
    k = C.shape[0]

    eigP = np.linalg.eigvalsh(0.5 * (P + P.T))
    if eigP[0] <= 0.0:
        raise IllConditioned("quadratic term is not positive definite")
    if eigP[-1] / eigP[0] > 1e14:
        raise IllConditioned(f"quadratic term condition number {eigP[-1]/eigP[0]:.2e}")

    # Null-space elimination of the equalities: z = r_hat + Z t.
    if E.shape[0]:
        U, sv, Vt = np.linalg.svd(E, full_matrices=True)
        rank = int(np.sum(sv > 1e-12 * (sv[0] if sv.size else 1.0)))
        r_hat = Vt[:rank].T @ ((U.T @ e)[:rank] / sv[:rank])
        if np.linalg.norm(E @ r_hat - e) > _FEAS_TOL * (1.0 + np.linalg.norm(e)):
            raise Infeasible("equality constraints are inconsistent")
        Z = Vt[rank:].T
    else:
        r_hat = np.zeros(s)
        Z = np.eye(s)
    nt = Z.shape[1]

    Ct = C @ Z if k else np.zeros((0, nt))
    dt = d - C @ r_hat if k else np.zeros(0)

    # Rows whose normal vanishes after elimination are constants: check once.
    if k:
        row_scale = np.maximum(np.linalg.norm(C, axis=1), 1.0)
        live = np.linalg.norm(Ct, axis=1) > 1e-12 * row_scale
        if np.any(dt[~live] < -_FEAS_TOL):
            raise Infeasible("a constraint row fixed by the equalities is violated")
    else:
        live = np.zeros(0, dtype=bool)
    live_idx = np.flatnonzero(live)
    Cl, dl = Ct[live_idx], dt[live_idx]

    if nt == 0:
        z = r_hat
        mu = np.zeros(k)
        lam = np.linalg.lstsq(E.T, -(P @ z + q), rcond=None)[0] if E.shape[0] else np.zeros(0)
        resid = _kkt_residual(P, q, E, e, C, d, z, lam, mu)
        return QpSolution(z=z, eq_duals=lam, ineq_duals=mu, active=tuple(),
                          status="optimal", iterations=0, kkt_residual=resid,
                          objective=float(0.5 * z @ P @ z + q @ z))

    Pt = Z.T @ P @ Z
    qt = Z.T @ (P @ r_hat + q)

    if start is not None:
        z0 = np.asarray(start, dtype=float).reshape(-1)
        if (E.shape[0] and np.linalg.norm(E @ z0 - e) > _FEAS_TOL) or \
           (k and np.max(C @ z0 - d, initial=0.0) > _FEAS_TOL):
            raise Infeasible("supplied start point is not feasible")
        t = Z.T @ (z0 - r_hat)
    else:
        t = _phase1(Cl, dl)

    ws: list[int] = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        na = len(ws)
        Ca = Cl[ws]
        KKT = np.block([[Pt, Ca.T], [Ca, np.zeros((na, na))]])
        rhs = np.concatenate([-qt, dl[ws]])
        sol = np.linalg.lstsq(KKT, rhs, rcond=None)[0]
        t_new, mu_ws = sol[:nt], sol[nt:]
        p = t_new - t

        if np.linalg.norm(p) <= tol * (1.0 + np.linalg.norm(t)):
            if na == 0 or np.min(mu_ws) >= -_DUAL_TOL:
                t = t_new
                break
            ws.pop(int(np.argmin(mu_ws)))
            continue

        step, blocker = 1.0, -1
        for i in range(len(live_idx)):
            if i in ws:
                continue
            cp = Cl[i] @ p
            if cp > 1e-12:
                st = (dl[i] - Cl[i] @ t) / cp
                if st < step - 1e-12:
                    step, blocker = max(st, 0.0), i
        t = t + step * p
        if blocker >= 0:
            ws.append(blocker)
    else:
        raise MaxIterations(f"active-set loop exceeded {max_iter} iterations")

    z = r_hat + Z @ t
    mu = np.zeros(k)
    if ws:
        # Recompute multipliers of the final working set in full coordinates.
        na = len(ws)
        Ca = Cl[ws]
        KKT = np.block([[Pt, Ca.T], [Ca, np.zeros((na, na))]])
        sol = np.linalg.lstsq(KKT, np.concatenate([-qt, dl[ws]]), rcond=None)[0]
        mu[live_idx[ws]] = sol[nt:]
    grad = P @ z + q + (C.T @ mu if k else 0.0)
    lam = np.linalg.lstsq(E.T, -grad, rcond=None)[0] if E.shape[0] else np.zeros(0)

    resid = _kkt_residual(P, q, E, e, C, d, z, lam, mu)
    active = tuple(int(i) for i in np.flatnonzero(C @ z - d >= -_FEAS_TOL)) if k else tuple()
    return QpSolution(z=z, eq_duals=lam, ineq_duals=mu, active=active,
                      status="optimal", iterations=n_iter, kkt_residual=resid,
                      objective=float(0.5 * z @ P @ z + q @ z))


def _constraint_arrays(w_set):
    if isinstance(w_set, StackedConstraints):
        return w_set.E, w_set.e, w_set.C, w_set.d
    if isinstance(w_set, Polytope):
        dim = w_set.dim
        return np.zeros((0, dim)), np.zeros(0), w_set.C, w_set.d
    raise TypeError(f"unsupported constraint set type {type(w_set)!r}")


def project(point, w_set, start: Optional[np.ndarray] = None) -> np.ndarray:
    """Euclidean projection of `point` onto the polytope `w_set`.

    Non-expansive and idempotent; a point already inside the set is returned
    unchanged (exact projection identity).
    """
    point = np.asarray(point, dtype=float).reshape(-1)
    E, e, C, d = _constraint_arrays(w_set)
    ok_eq = E.shape[0] == 0 or np.max(np.abs(E @ point - e), initial=0.0) <= 1e-12
    ok_in = C.shape[0] == 0 or np.max(C @ point - d, initial=0.0) <= 1e-12
    if ok_eq and ok_in:
        return point.copy()
    inst = QpInstance(P=np.eye(point.shape[0]), q=-point, E=E, e=e, C=C, d=d)
    return solve_qp(inst, start=start).z


def solve_exact_ocp(problem: CondensedProblem, x_t) -> OcpSolution:
    """Exact solution of the condensed problem min ||u||_M^2 over W(x_t).

    At the optimum the safe copy r equals u, so this doubles as the
    fixed-point oracle for the splitting iteration.
    """
    w_set = stack_constraints(problem, x_t)
    inst = QpInstance(P=2.0 * problem.M, q=np.zeros(problem.s),
                      E=w_set.E, e=w_set.e, C=w_set.C, d=w_set.d)
    sol = solve_qp(inst)
    value = float(sol.z @ problem.M @ sol.z)
    return OcpSolution(u=sol.z, value=value, eq_duals=sol.eq_duals,
                       ineq_duals=sol.ineq_duals, active=sol.active,
                       kkt_residual=sol.kkt_residual)
