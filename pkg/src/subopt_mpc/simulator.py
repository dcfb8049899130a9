"""Closed-loop simulation of the system-optimizer dynamics.

At each control step t the loop measures x_t, advances the optimizer
phi_t = T^ell(phi_{t-1}; x_t) from the previous iterate (warm start), applies
the first input block u_t = Xi_phi r_t, and steps the plant.  The log tracks
the suboptimality error e_t = phi_t - phi*(x_t) against the fixed-point
oracle, the Lyapunov value psi(x_t) = sqrt(V*(x_t)), and the certificate
inequalities.
"""

from __future__ import annotations

import csv
import functools
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .admm import AdmmParams, f_norm, fixed_point_oracle, run
from .analysis import CertificateConstants, certificate, rate_certificate
from .errors import ConfigError, Infeasible, InfeasibleOcp, InfeasibleParameter
from .model import CondensedProblem
from .qp import solve_exact_ocp

__all__ = ["FIXED_POINT", "ClosedLoopConfig", "StepRecord", "TrajectoryLog",
           "Violation", "CertificateReport", "SweepCell", "SweepTable",
           "exact_step", "step_closed_loop", "simulate", "certify_trajectory",
           "sweep_ell"]

logger = logging.getLogger("subopt_mpc.simulator")

# Early stop: state norm below this for 5 consecutive steps ends the run.
_EARLY_STOP_NORM = 1e-10
_EARLY_STOP_COUNT = 5

FIXED_POINT = "fixed-point"


@dataclass(frozen=True)
class ClosedLoopConfig:
    """One closed-loop experiment: initial state, iteration budget per step
    (an int, or "fixed-point" to solve each step to convergence), horizon T,
    optional initial iterate phi0 (defaults to zero), and mode."""

    x0: tuple
    ell: Union[int, str]
    T: int
    phi0: Optional[tuple] = None
    mode: str = "suboptimal"

    def __post_init__(self):
        if self.T < 1:
            raise ConfigError(f"T must be >= 1, got {self.T}")
        if self.mode not in ("suboptimal", "exact-mpc"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if isinstance(self.ell, str) and self.ell != FIXED_POINT:
            raise ConfigError(f"ell must be an int or '{FIXED_POINT}'")
        if not isinstance(self.ell, str) and int(self.ell) < 1:
            raise ConfigError(f"ell must be >= 1, got {self.ell}")


@dataclass(frozen=True, eq=False)
class StepRecord:
    """Everything logged at one control step."""

    t: int
    x: np.ndarray
    u: np.ndarray
    e_norm2: float
    e_fnorm: float
    psi: float
    x_pnorm: float
    dx_norm: float
    in_X: bool
    in_U: bool
    psi_le_rN: bool
    e_le_re: bool
    psi_bound: float
    e_bound: float
    Be_norm: float
    wall: float
    admm_iterations: int


@dataclass(eq=False)
class TrajectoryLog:
    """Per-step records plus abort bookkeeping for one trajectory."""

    x0: np.ndarray
    ell: Union[int, str]
    mode: str
    records: list = field(default_factory=list)
    aborted: bool = False
    abort_step: Optional[int] = None
    abort_reason: str = ""
    final_x: Optional[np.ndarray] = None

    def states(self) -> np.ndarray:
        return np.array([rec.x for rec in self.records])

    def inputs(self) -> np.ndarray:
        return np.array([rec.u for rec in self.records])

    def to_csv(self, target) -> None:
        """Write the pinned CSV layout: header row, one row per step,
        floats at 12 significant digits, flags as 0/1."""
        if hasattr(target, "write"):
            self._write_csv(target)
        else:
            with open(target, "w", newline="", encoding="utf-8") as fh:
                self._write_csv(fh)

    def _write_csv(self, fh) -> None:
        if not self.records:
            n, m = self.x0.shape[0], 1
        else:
            n = self.records[0].x.shape[0]
            m = self.records[0].u.shape[0]
        header = (["t"] + [f"x{i+1}" for i in range(n)] + [f"u{j+1}" for j in range(m)]
                  + ["e_norm2", "e_normF", "psi", "x_Pnorm",
                     "flag_x_in_X", "flag_u_in_U", "flag_psi_le_rN", "flag_e_le_re",
                     "psi_bound", "e_bound"])
        writer = csv.writer(fh)
        writer.writerow(header)
        fmt = "{:.11e}".format
        for rec in self.records:
            row = ([str(rec.t)] + [fmt(v) for v in rec.x] + [fmt(v) for v in rec.u]
                   + [fmt(rec.e_norm2), fmt(rec.e_fnorm), fmt(rec.psi), fmt(rec.x_pnorm),
                      str(int(rec.in_X)), str(int(rec.in_U)),
                      str(int(rec.psi_le_rN)), str(int(rec.e_le_re)),
                      fmt(rec.psi_bound), fmt(rec.e_bound)])
            writer.writerow(row)

    def csv_text(self) -> str:
        buf = io.StringIO()
        self._write_csv(buf)
        return buf.getvalue()


def input_error(problem: CondensedProblem, e_phi: np.ndarray) -> np.ndarray:
    """Bbar e: the input-channel image B Xi_phi of the r-block of e."""
    s = problem.s
    return problem.plant.B @ (problem.Xi_phi @ e_phi[:s])


def exact_step(problem: CondensedProblem, x):
    """Exact-MPC map f(x) = A x + B Xi_phi u*(x); returns (x_next, u, value)."""
    sol = solve_exact_ocp(problem, x)
    u = problem.Xi_phi @ sol.u
    x = np.asarray(x, dtype=float).reshape(-1)
    return problem.plant.A @ x + problem.plant.B @ u, u, sol.value


def step_closed_loop(state, problem: CondensedProblem, params: AdmmParams,
                     ell: Union[int, str]):
    """One warm-started step: from (x_t, phi_prev) produce (x_next, phi_t).

    Raises InfeasibleOcp when the constraint set at x_t is empty.
    """
    x_t, phi_prev = state
    x_t = np.asarray(x_t, dtype=float).reshape(-1)
    try:
        if ell == FIXED_POINT:
            fp = fixed_point_oracle(problem, params, x_t)
            iterate = run(problem, params, x_t, warm=fp, ell=0)
        else:
            iterate = run(problem, params, x_t, warm=phi_prev, ell=int(ell))
    except (Infeasible, InfeasibleParameter) as exc:
        raise InfeasibleOcp(f"constraint set empty at x = {x_t.tolist()}: {exc}") from exc
    u_t = problem.Xi_phi @ iterate.r
    x_next = problem.plant.A @ x_t + problem.plant.B @ u_t
    return x_next, iterate


@functools.lru_cache(maxsize=8)
def _default_constants(problem: CondensedProblem, alpha: float,
                       epsilon: float) -> CertificateConstants:
    rate = rate_certificate(problem, alpha=alpha, epsilon=epsilon)
    return certificate(problem, rate)


class _Oracle:
    """Lazily computed, per-state cache of (phi*, V*) pairs."""

    def __init__(self, problem: CondensedProblem, params: AdmmParams):
        self.problem = problem
        self.params = params
        self._cache: dict = {}

    def __call__(self, x):
        key = np.asarray(x, dtype=float).tobytes()
        if key not in self._cache:
            fp = fixed_point_oracle(self.problem, self.params, x)
            value = float(fp.r @ self.problem.M @ fp.r)
            self._cache[key] = (fp, value)
        return self._cache[key]


def simulate(config: ClosedLoopConfig, problem: CondensedProblem,
             params: AdmmParams,
             constants: Optional[CertificateConstants] = None) -> TrajectoryLog:
    """Run the closed loop for T steps (or until early stop / abort).

    On mid-trajectory infeasibility raises InfeasibleOcp with the partial
    log attached as `exc.log` (the trajectory so far is retained).
    In "exact-mpc" mode every step applies the exact solution (e_t = 0).
    """
    if constants is None:
        constants = _default_constants(problem, params.alpha, params.epsilon)
    x0 = np.asarray(config.x0, dtype=float).reshape(-1)
    if not problem.X.contains(x0):
        raise ConfigError(f"x0 = {x0.tolist()} is outside the state set X")

    oracle = _Oracle(problem, params)
    log = TrajectoryLog(x0=x0, ell=config.ell, mode=config.mode)
    s = problem.s
    P = problem.cost.P

    phi = (np.asarray(config.phi0, dtype=float).reshape(-1) if config.phi0 is not None
           else np.zeros(2 * s))
    x = x0.copy()
    x_prev = None
    e0_fnorm = None
    sup_Be = 0.0
    sup_dx = 0.0
    delta_x0_norm = constants.delta * np.linalg.norm(x0)
    quiet = 0

    for t in range(config.T):
        tic = time.perf_counter()
        ell_t = FIXED_POINT if config.mode == "exact-mpc" else config.ell
        try:
            x_next, iterate = step_closed_loop((x, phi), problem, params, ell_t)
        except InfeasibleOcp as exc:
            log.aborted = True
            log.abort_step = t
            log.abort_reason = str(exc)
            log.final_x = x
            logger.info("trajectory aborted at t=%d: %s", t, exc)
            exc.step = t
            exc.log = log
            raise
        wall = time.perf_counter() - tic

        fp, value = oracle(x)
        e_phi = iterate.phi - fp.phi
        e_fn = f_norm(params, e_phi[:s], e_phi[s:])
        e_n2 = float(np.linalg.norm(e_phi))
        psi = math.sqrt(max(value, 0.0))
        u_t = problem.Xi_phi @ iterate.r

        dx = 0.0 if x_prev is None else float(np.linalg.norm(x - x_prev))
        if x_prev is not None:
            sup_dx = max(sup_dx, dx)
        Be_norm = float(np.linalg.norm(input_error(problem, e_phi)))
        sup_Be = max(sup_Be, Be_norm)
        if e0_fnorm is None:
            e0_fnorm = e_fn

        tau = constants.tau
        ell_exp = 0 if config.mode == "exact-mpc" or config.ell == FIXED_POINT \
            else int(config.ell)
        psi_bound = constants.beta ** t * delta_x0_norm + constants.gamma1 * sup_Be
        if t == 0 or ell_exp == 0:
            e_bound = e0_fnorm if ell_exp else 0.0
        else:
            e_bound = (tau ** (ell_exp * t) * e0_fnorm
                       + constants.gamma2(ell_exp) * sup_dx)

        rec = StepRecord(
            t=t, x=x.copy(), u=np.asarray(u_t, dtype=float).copy(),
            e_norm2=e_n2, e_fnorm=e_fn, psi=psi,
            x_pnorm=math.sqrt(max(float(x @ P @ x), 0.0)), dx_norm=dx,
            in_X=problem.X.contains(x), in_U=problem.U.contains(u_t, tol=1e-9),
            psi_le_rN=psi <= constants.r_N + 1e-12,
            e_le_re=e_fn <= constants.r_e + 1e-12,
            psi_bound=psi_bound, e_bound=float(e_bound), Be_norm=Be_norm,
            wall=wall,
            admm_iterations=0 if ell_t == FIXED_POINT else int(ell_t),
        )
        log.records.append(rec)

        phi = iterate
        x_prev = x
        x = x_next
        quiet = quiet + 1 if np.linalg.norm(x) <= _EARLY_STOP_NORM else 0
        if quiet >= _EARLY_STOP_COUNT:
            logger.info("early stop at t=%d: state settled at the origin", t)
            break

    log.final_x = x
    return log


@dataclass(frozen=True)
class Violation:
    t: int
    check: str
    lhs: float
    rhs: float

    @property
    def slack(self) -> float:
        return self.lhs - self.rhs


@dataclass(eq=False)
class CertificateReport:
    """Pointwise certificate checks of one trajectory; never raises."""

    violations: list
    checks: int
    guaranteed: bool
    summary: dict

    @property
    def ok(self) -> bool:
        return not self.violations


def certify_trajectory(log: TrajectoryLog, constants: CertificateConstants,
                       guaranteed: Optional[bool] = None) -> CertificateReport:
    """Evaluate, for every step, the ISS state bound, the aggregate and
    per-step error recursions, and Omega / error-ball membership.

    `guaranteed` marks whether theory promises zero violations for this run
    (ell >= ell*, started inside Omega); when None it is inferred from the
    log's first record and ell.
    """
    rel = 1e-6
    rel_step = 1e-3
    atol = 1e-9
    recs = log.records
    violations = []
    checks = 0

    ell = None if log.ell == FIXED_POINT or log.mode == "exact-mpc" else int(log.ell)
    tau = constants.tau
    if guaranteed is None:
        started_in_omega = bool(recs) and recs[0].psi_le_rN and recs[0].e_le_re
        guaranteed = (started_in_omega
                      and ell is not None and ell >= constants.ell_star)

    e0 = recs[0].e_fnorm if recs else 0.0
    sup_dx = 0.0
    for i, rec in enumerate(recs):
        checks += 1
        if rec.x_pnorm > rec.psi_bound * (1.0 + rel) + atol:
            violations.append(Violation(rec.t, "state_iss_bound",
                                        rec.x_pnorm, rec.psi_bound))
        if i >= 1:
            sup_dx = max(sup_dx, rec.dx_norm)
        if ell is not None:
            agg = tau ** (ell * i) * e0 + (constants.gamma2(ell) * sup_dx if i else 0.0)
            checks += 1
            if rec.e_fnorm > agg * (1.0 + rel) + atol:
                violations.append(Violation(rec.t, "error_aggregate_bound",
                                            rec.e_fnorm, float(agg)))
            if i >= 1:
                prev = recs[i - 1]
                rhs = tau ** ell * (prev.e_fnorm
                                    + constants.L1 * constants.F_sqrt_norm * rec.dx_norm)
                checks += 1
                if rec.e_fnorm > rhs * (1.0 + rel_step) + atol:
                    violations.append(Violation(rec.t, "error_step_bound",
                                                rec.e_fnorm, float(rhs)))
        checks += 2
        if not rec.psi_le_rN:
            violations.append(Violation(rec.t, "psi_le_rN", rec.psi, constants.r_N))
        if not rec.e_le_re:
            violations.append(Violation(rec.t, "e_le_re", rec.e_fnorm, constants.r_e))
        checks += 1
        if rec.e_fnorm > constants.e_radius + 1e-12:
            violations.append(Violation(rec.t, "e_in_error_ball",
                                        rec.e_fnorm, constants.e_radius))

    summary = {
        "steps": len(recs),
        "checks": checks,
        "violations": len(violations),
        "aborted": log.aborted,
        "guaranteed_regime": bool(guaranteed),
    }
    return CertificateReport(violations=violations, checks=checks,
                             guaranteed=bool(guaranteed), summary=summary)


@dataclass(eq=False)
class SweepCell:
    x0: np.ndarray
    ell: Union[int, str]
    terminal_norm: float
    sup_Be: float
    constraint_violations: int
    aborted: bool
    abort_step: Optional[int]
    log: Optional[TrajectoryLog]


@dataclass(eq=False)
class SweepTable:
    cells: list

    def monotonicity(self) -> dict:
        """Per-x0 diagnostic: is sup_t ||Bbar e_t|| nonincreasing in ell?
        (Reported, not asserted: warm-start coupling can break it on single
        trajectories.)"""
        out = {}
        by_x0: dict = {}
        for cell in self.cells:
            by_x0.setdefault(tuple(cell.x0), []).append(cell)
        for key, cells in by_x0.items():
            numeric = [c for c in cells if not isinstance(c.ell, str)]
            numeric.sort(key=lambda c: c.ell)
            vals = [c.sup_Be for c in numeric]
            out[key] = all(b <= a * (1.0 + 1e-9) + 1e-15
                           for a, b in zip(vals, vals[1:]))
        return out

    def summary(self) -> dict:
        return {
            "cells": len(self.cells),
            "aborted": sum(c.aborted for c in self.cells),
            "mean_sup_Be_by_ell": self._mean_by_ell(),
            "monotone_sup_Be": {",".join(f"{v:g}" for v in k): bool(v)
                                for k, v in self.monotonicity().items()},
        }

    def _mean_by_ell(self) -> dict:
        acc: dict = {}
        for cell in self.cells:
            acc.setdefault(str(cell.ell), []).append(cell.sup_Be)
        return {k: float(np.mean(v)) for k, v in sorted(acc.items())}


def _sweep_cell(problem, params, x0, ell, T, constants) -> SweepCell:
    config = ClosedLoopConfig(x0=tuple(x0), ell=ell, T=T)
    try:
        log = simulate(config, problem, params, constants)
        aborted, abort_step = False, None
    except InfeasibleOcp as exc:
        log = exc.log
        aborted, abort_step = True, exc.step
    bad = sum(1 for rec in log.records if not (rec.in_X and rec.in_U))
    sup_Be = max((rec.Be_norm for rec in log.records), default=0.0)
    term = float(np.linalg.norm(log.final_x)) if log.final_x is not None else math.nan
    return SweepCell(x0=np.asarray(x0, dtype=float), ell=ell, terminal_norm=term,
                     sup_Be=float(sup_Be), constraint_violations=bad + int(aborted),
                     aborted=aborted, abort_step=abort_step, log=log)


def sweep_ell(problem: CondensedProblem, params: AdmmParams, x0_list, ell_list,
              T: int, jobs: int = 1,
              constants: Optional[CertificateConstants] = None) -> SweepTable:
    """Grid of simulations over initial states and iteration budgets.

    Cells run independently (optionally across processes) and merge in
    deterministic (x0 index, ell index) order.
    """
    if constants is None:
        constants = _default_constants(problem, params.alpha, params.epsilon)
    tasks = [(x0, ell) for x0 in x0_list for ell in ell_list]
    if jobs <= 1:
        cells = [_sweep_cell(problem, params, x0, ell, T, constants)
                 for x0, ell in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_sweep_cell, problem, params, x0, ell, T, constants)
                       for x0, ell in tasks]
            cells = [f.result() for f in futures]
    return SweepTable(cells=cells)
