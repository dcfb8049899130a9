"""Acceptance gate: one test per pinned behavior, one verdict line each
under pytest -v.

Four of the twelve pin externally reported reference values for the bundled
double-integrator instance (conditioning, certified rate, solution-map
modulus, and the deep-corner scenario). Those references are not reproducible
from this formulation; the tests assert them anyway and fail with the
honestly measured value in the message. README.md discusses the gap.
"""

import itertools
import math
import time

import numpy as np
import pytest

from subopt_mpc import (ClosedLoopConfig, CostSpec, Infeasible,
                        InfeasibleOcp, InfeasibleParameter, NotStabilizable,
                        Plant, Polytope, QpInstance, certificate, condense,
                        f_norm, fixed_point_oracle, lipschitz_L1,
                        min_certified_rate, preset_problem, project,
                        rollout_cost, run, simulate, solve_exact_ocp,
                        solve_qp, solve_to_fixed_point, stack_constraints,
                        tau_formula)
from subopt_mpc.analysis import spectral_constants


def _feasible_states(problem, rng, count, scale=0.6, value_cap=None):
    box = scale * np.min(problem.X.d / np.linalg.norm(problem.X.C, axis=1))
    out = []
    while len(out) < count:
        x = rng.uniform(-box, box, problem.n)
        try:
            project(np.zeros(problem.s), stack_constraints(problem, x))
        except (Infeasible, InfeasibleParameter):
            continue
        if value_cap is not None:
            if solve_exact_ocp(problem, x).value > value_cap:
                continue
        out.append(x)
    return out


def test_criterion_01_condensed_conditioning_reference():
    start = time.perf_counter()
    prob = preset_problem("double-integrator")
    sc = spectral_constants(prob)
    elapsed = time.perf_counter() - start
    print(f"criterion 1: kappa measured {sc.kappa:.10g}, "
          f"reference 88.76 +- 1%, runtime {elapsed:.3f} s")
    assert elapsed < 1.0
    assert sc.kappa == pytest.approx(88.76, rel=0.01), (
        f"conditioning of the condensed cost is {sc.kappa:.10g}; the "
        f"externally reported reference 88.76 (+-1%) is not met")


def test_criterion_02_certified_rate_reference(problem):
    sc = spectral_constants(problem)
    lmi_rate = min_certified_rate(1.95, sc.kappa, 0.0)
    formula = tau_formula(1.95, sc.kappa, 0.0)
    print(f"criterion 2: tau_lmi measured {lmi_rate:.10g} at kappa "
          f"{sc.kappa:.6g}, reference 0.69 +- 0.05; tau_formula (reported, "
          f"not asserted) {formula:.10g}")
    assert lmi_rate == pytest.approx(0.69, abs=0.05), (
        f"minimal certified rate is {lmi_rate:.10g}; the externally "
        f"reported reference 0.69 (+-0.05) is not met")


def test_criterion_03_weighted_norm_conditioning(rate):
    print(f"criterion 3: kappa_F measured {rate.kappa_F!r}, reference 39")
    assert rate.kappa_F == pytest.approx(39.0, abs=1e-9)
    assert rate.kappa_F == pytest.approx(
        (1.0 + 0.95) / (1.0 - 0.95), abs=1e-9)


def test_criterion_04_solution_map_modulus_reference(problem):
    L1 = lipschitz_L1(problem)
    print(f"criterion 4: L1 measured {L1:.10g}, reference 286.83 +- 1%")
    assert L1 == pytest.approx(286.83, rel=0.01), (
        f"closed-form solution-map modulus is {L1:.10g}; the externally "
        f"reported reference 286.83 (+-1%) is not met")


def test_criterion_05_budget_reproduction(problem, rate):
    const = certificate(problem, rate, tau_choice=0.69)
    print(f"criterion 5: ell* at tau = 0.69 is {const.ell_star}, "
          f"reference 85 +- 20%")
    assert 85 * 0.8 <= const.ell_star <= 85 * 1.2
    # Independent re-evaluation of the two-branch budget formula from the
    # logged constants must agree exactly.
    log_tau = math.log(const.tau)
    warm = -math.log(1.0 + const.gamma3 * const.gamma1 * const.L1) / log_tau
    state = -math.log(const.omega1
                      + const.omega2 * const.gamma1 * const.B_bar_norm) / log_tau
    recomputed = max(1, math.ceil(max(warm, state)))
    assert recomputed == const.ell_star
    assert warm == pytest.approx(const.branch_warmstart, rel=1e-12)
    assert state == pytest.approx(const.branch_state, rel=1e-12)


def test_criterion_06_per_iteration_contraction(problem, params, rate):
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    states = _feasible_states(problem, rng, 10)
    bound = rate.tau_lmi * 1.05
    worst = 0.0
    for x in states:
        fp = fixed_point_oracle(problem, params, x)
        for _ in range(20):
            it = run(problem, params, x, warm=rng.normal(0.0, 1.0, 10),
                     ell=0)
            err = f_norm(params, it.r - fp.r, it.y - fp.y)
            for _ in range(25):
                if err <= 1e-9:
                    break
                it = run(problem, params, x, warm=it, ell=1)
                nxt = f_norm(params, it.r - fp.r, it.y - fp.y)
                worst = max(worst, nxt / err)
                assert nxt <= bound * err, (
                    f"iteration expanded by {nxt / err:.6g} at x = "
                    f"{x.tolist()}, certified {rate.tau_lmi:.6g}")
                err = nxt
    elapsed = time.perf_counter() - start
    print(f"criterion 6: worst per-iteration factor {worst:.6g} vs bound "
          f"{bound:.6g} over 10 states x 20 warm starts, "
          f"runtime {elapsed:.3f} s")
    assert elapsed < 10.0


def test_criterion_07_fixed_point_oracle_equivalence(problem, params,
                                                     constants):
    rng = np.random.default_rng(7)
    P = problem.cost.P
    for x in _feasible_states(problem, rng, 50):
        fp = solve_to_fixed_point(problem, params, x)
        ref = solve_exact_ocp(problem, x)
        gap = np.linalg.norm(fp.r - ref.u)
        assert gap <= 1e-6 * (1.0 + np.linalg.norm(ref.u))
        lower = float(x @ P @ x)
        upper = constants.delta ** 2 * float(x @ x)
        for value in (ref.value, float(fp.r @ problem.M @ fp.r)):
            assert lower <= value + 1e-8 * (1.0 + value)
            assert value <= upper + 1e-9
    print("criterion 7: 50/50 fixed points match the exact solver to 1e-6 "
          "and satisfy the value sandwich")


def test_criterion_08_exact_loop_decrease_and_invariance(problem, params,
                                                         constants):
    rng = np.random.default_rng(8)
    region = 3.0 * constants.d + constants.c
    states = _feasible_states(problem, rng, 10, scale=0.2, value_cap=region)
    worst = 0.0
    for x in states:
        cfg = ClosedLoopConfig(x0=tuple(x), ell=1, T=20, mode="exact-mpc")
        log = simulate(cfg, problem, params, constants=constants)
        values = [rec.psi ** 2 for rec in log.records]
        assert all(v <= region + 1e-9 for v in values)
        psis = [rec.psi for rec in log.records]
        for a, b in zip(psis, psis[1:]):
            if a > 1e-12:
                worst = max(worst, b / a)
            assert b <= constants.beta * a * (1.0 + 1e-6) + 1e-12
    print(f"criterion 8: worst one-step psi ratio {worst:.6g} vs beta "
          f"{constants.beta:.10g} over 10 certified-region starts")


def test_criterion_09_reference_scenario(problem, params):
    cfg = ClosedLoopConfig(x0=(-4.0, 2.8), ell=30, T=60)
    start = time.perf_counter()
    try:
        log = simulate(cfg, problem, params)
    except InfeasibleOcp as exc:
        elapsed = time.perf_counter() - start
        print(f"criterion 9: scenario aborted at step {exc.step} "
              f"({exc}), runtime {elapsed:.3f} s")
        pytest.fail(
            f"reference scenario x0 = [-4, 2.8], ell = 30 is reported to "
            f"satisfy all constraints and settle, but the horizon problem "
            f"goes infeasible at t = {exc.step}: {exc}")
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    states, inputs = log.states(), log.inputs()
    assert np.all(np.abs(inputs) <= 0.5 + 1e-9)
    assert np.all(np.abs(states) <= 5.0 + 1e-9)
    assert np.linalg.norm(log.final_x) <= 1e-2


def test_criterion_10_certified_regime_step_inequality(problem, params,
                                                       constants):
    rng = np.random.default_rng(10)
    region = 3.0 * constants.d + constants.c
    ell = constants.ell_star
    factor = constants.tau ** ell
    gain = constants.L1 * constants.F_sqrt_norm
    for x in _feasible_states(problem, rng, 3, scale=0.2, value_cap=region):
        fp = fixed_point_oracle(problem, params, x)
        cfg = ClosedLoopConfig(x0=tuple(x), ell=ell, phi0=tuple(fp.phi),
                               T=15)
        log = simulate(cfg, problem, params, constants=constants)
        first = log.records[0]
        assert first.psi <= constants.r_N + 1e-12
        assert first.e_fnorm <= constants.r_e + 1e-12
        for prev, rec in zip(log.records, log.records[1:]):
            rhs = factor * (prev.e_fnorm + gain * rec.dx_norm)
            assert rec.e_fnorm <= rhs * (1.0 + 1e-3), (
                f"step error {rec.e_fnorm:.3e} above recursion bound "
                f"{rhs:.3e} at t = {rec.t}")
    print(f"criterion 10: per-step error recursion holds along 3 "
          f"certified-regime trajectories at ell = {ell}")


def test_criterion_11_qp_brute_force_equivalence():
    rng = np.random.default_rng(11)

    def brute_force(P, q, C, d, tol=1e-9):
        n = P.shape[0]
        best = np.inf
        for k in range(C.shape[0] + 1):
            for rows in itertools.combinations(range(C.shape[0]), k):
                A = C[list(rows)]
                KKT = np.block([[P, A.T], [A, np.zeros((k, k))]])
                rhs = np.concatenate([-q, d[list(rows)]])
                try:
                    sol = np.linalg.solve(KKT, rhs)
                except np.linalg.LinAlgError:
                    continue
                z, lam = sol[:n], sol[n:]
                if np.any(lam < -tol):
                    continue
                if np.any(C @ z - d > tol * (1.0 + np.abs(d))):
                    continue
                best = min(best, 0.5 * z @ P @ z + q @ z)
        return best

    for _ in range(200):
        n = int(rng.integers(1, 5))
        rows = int(rng.integers(1, 11))
        L = rng.normal(0.0, 1.0, (n, n))
        P = L @ L.T + 0.5 * np.eye(n)
        q = rng.normal(0.0, 1.0, n)
        C = rng.normal(0.0, 1.0, (rows, n))
        d = C @ rng.normal(0.0, 0.5, n) + rng.uniform(0.1, 1.0, rows)
        sol = solve_qp(QpInstance(P=P, q=q, E=None, e=None, C=C, d=d))
        ref = brute_force(P, q, C, d)
        assert ref < np.inf
        assert sol.objective == pytest.approx(ref, abs=1e-9, rel=1e-9)
    print("criterion 11: 200/200 random instances match exhaustive "
          "active-set enumeration to 1e-9")


def test_criterion_12_rollout_equality():
    rng = np.random.default_rng(12)
    checked = 0
    while checked < 100:
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        N = int(rng.integers(1, 5))
        try:
            plant = Plant(A=rng.normal(0.0, 0.6, (n, n)),
                          B=rng.normal(0.0, 1.0, (n, m)))
        except NotStabilizable:
            continue
        L = rng.normal(0.0, 1.0, (n, n))
        Lr = rng.normal(0.0, 1.0, (m, m))
        cost = CostSpec.from_weights(plant, L @ L.T + 0.5 * np.eye(n),
                                     Lr @ Lr.T + 0.5 * np.eye(m), N)
        box = Polytope(C=np.vstack([np.eye(n), -np.eye(n)]),
                       d=1e6 * np.ones(2 * n))
        boxU = Polytope(C=np.vstack([np.eye(m), -np.eye(m)]),
                        d=1e6 * np.ones(2 * m))
        prob = condense(plant, cost, box, boxU)
        u = rng.normal(0.0, 2.0, prob.s)
        condensed = float(u @ prob.M @ u)
        rolled = rollout_cost(plant, cost, u)
        assert condensed == pytest.approx(rolled, rel=1e-8)
        checked += 1
    print("criterion 12: condensed cost equals rolled-out trajectory cost "
          "on 100/100 random pairs")
