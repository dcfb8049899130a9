"""Active-set QP solver: hand-checked instances, brute-force cross-checks,
projection properties, exact one-step solves."""

import itertools

import numpy as np
import pytest

from subopt_mpc import (Infeasible, QpInstance, project, solve_exact_ocp,
                        solve_qp, stack_constraints)


def _brute_force(inst, tol=1e-9):
    """Enumerate active sets of Cz <= d (no equalities) and return the best
    feasible KKT point. Exponential, for tiny cross-check instances only."""
    P, q, C, d = inst.P, inst.q, inst.C, inst.d
    n = P.shape[0]
    rows = range(C.shape[0])
    best, best_val = None, np.inf
    for k in range(len(d) + 1):
        for active in itertools.combinations(rows, k):
            A = C[list(active)]
            KKT = np.block([[P, A.T], [A, np.zeros((k, k))]])
            rhs = np.concatenate([-q, d[list(active)]])
            try:
                sol = np.linalg.solve(KKT, rhs)
            except np.linalg.LinAlgError:
                continue
            z, lam = sol[:n], sol[n:]
            if np.any(lam < -tol):
                continue
            if np.any(C @ z - d > tol * (1.0 + np.abs(d))):
                continue
            val = 0.5 * z @ P @ z + q @ z
            if val < best_val - 1e-12:
                best, best_val = z, val
    return best, best_val


def _random_instance(rng, n, n_ineq):
    L = rng.normal(0.0, 1.0, (n, n))
    P = L @ L.T + 0.5 * np.eye(n)
    q = rng.normal(0.0, 1.0, n)
    C = rng.normal(0.0, 1.0, (n_ineq, n))
    z0 = rng.normal(0.0, 0.5, n)
    # Feasible by construction: z0 satisfies every row with slack.
    d = C @ z0 + rng.uniform(0.1, 1.0, n_ineq)
    return QpInstance(P=P, q=q, E=None, e=None, C=C, d=d)


class TestHandChecked:
    def test_scalar_bound(self):
        # min z^2 s.t. z >= 1: optimum at the bound with multiplier 2.
        inst = QpInstance(P=np.array([[2.0]]), q=np.zeros(1), E=None, e=None,
                          C=np.array([[-1.0]]), d=np.array([-1.0]))
        sol = solve_qp(inst)
        assert abs(sol.z[0] - 1.0) <= 1e-10
        assert abs(sol.ineq_duals[0] - 2.0) <= 1e-10
        assert sol.status == "optimal"
        assert abs(sol.objective - 1.0) <= 1e-10

    def test_unconstrained_interior(self):
        inst = QpInstance(P=2.0 * np.eye(2), q=np.array([-2.0, 2.0]),
                          E=None, e=None,
                          C=np.vstack([np.eye(2), -np.eye(2)]),
                          d=5.0 * np.ones(4))
        sol = solve_qp(inst)
        assert np.allclose(sol.z, [1.0, -1.0], atol=1e-10)
        assert np.allclose(sol.ineq_duals, 0.0)
        assert sol.active == ()

    def test_equality_only(self):
        # min ||z||^2 s.t. z1 + z2 = 1 -> z = (1/2, 1/2).
        inst = QpInstance(P=2.0 * np.eye(2), q=np.zeros(2),
                          E=np.array([[1.0, 1.0]]), e=np.array([1.0]),
                          C=None, d=None)
        sol = solve_qp(inst)
        assert np.allclose(sol.z, [0.5, 0.5], atol=1e-10)

    def test_infeasible_rows(self):
        inst = QpInstance(P=np.eye(1), q=np.zeros(1), E=None, e=None,
                          C=np.array([[1.0], [-1.0]]),
                          d=np.array([-1.0, -1.0]))  # z <= -1 and z >= 1
        with pytest.raises(Infeasible):
            solve_qp(inst)

    def test_duplicate_equalities_consistent(self):
        inst = QpInstance(P=2.0 * np.eye(2), q=np.zeros(2),
                          E=np.array([[1.0, 0.0], [1.0, 0.0]]),
                          e=np.array([1.0, 1.0]), C=None, d=None)
        sol = solve_qp(inst)
        assert np.allclose(sol.z, [1.0, 0.0], atol=1e-10)

    def test_duplicate_equalities_inconsistent(self):
        inst = QpInstance(P=2.0 * np.eye(2), q=np.zeros(2),
                          E=np.array([[1.0, 0.0], [1.0, 0.0]]),
                          e=np.array([1.0, 2.0]), C=None, d=None)
        with pytest.raises(Infeasible):
            solve_qp(inst)


class TestBruteForceAgreement:
    def test_random_instances(self, rng):
        for _ in range(60):
            n = int(rng.integers(1, 5))
            n_ineq = int(rng.integers(1, 8))
            inst = _random_instance(rng, n, n_ineq)
            sol = solve_qp(inst)
            z_ref, val_ref = _brute_force(inst)
            assert z_ref is not None
            assert np.allclose(sol.z, z_ref, rtol=1e-8, atol=1e-8)
            assert abs(sol.objective - val_ref) <= 1e-8 * (1.0 + abs(val_ref))

    def test_kkt_residual_small(self, rng):
        for _ in range(30):
            inst = _random_instance(rng, int(rng.integers(1, 6)),
                                    int(rng.integers(1, 10)))
            sol = solve_qp(inst)
            assert sol.kkt_residual <= 1e-9 * (1.0 + np.linalg.norm(sol.z))
            # Stationarity recomputed from the reported duals.
            grad = inst.P @ sol.z + inst.q + inst.C.T @ sol.ineq_duals
            assert np.linalg.norm(grad) <= 1e-8 * (1.0 + np.linalg.norm(sol.z))
            assert np.all(sol.ineq_duals >= -1e-10)


class TestProjection:
    def test_box_clip(self, problem):
        w_set = stack_constraints(problem, np.zeros(2))
        point = np.array([0.0, 0.0, 0.7, 0.0, 0.0])
        proj = project(point, w_set)
        # Only violation is the first input bound; the projection clips it.
        assert abs(proj[2] - 0.5) <= 1e-10
        assert np.allclose(proj[[0, 1, 3, 4]], point[[0, 1, 3, 4]], atol=1e-10)

    def test_idempotent(self, problem, rng):
        w_set = stack_constraints(problem, np.array([-1.0, 0.4]))
        for _ in range(10):
            point = rng.normal(0.0, 3.0, 5)
            proj = project(point, w_set)
            again = project(proj, w_set)
            assert np.allclose(proj, again, atol=1e-9)
            assert w_set.contains(proj)

    def test_nonexpansive(self, problem, rng):
        w_set = stack_constraints(problem, np.array([0.5, -0.2]))
        for _ in range(20):
            a = rng.normal(0.0, 3.0, 5)
            b = rng.normal(0.0, 3.0, 5)
            pa, pb = project(a, w_set), project(b, w_set)
            assert (np.linalg.norm(pa - pb)
                    <= np.linalg.norm(a - b) + 1e-10)
            # Firm nonexpansiveness: ||Pa-Pb||^2 <= <Pa-Pb, a-b>.
            gap = np.dot(pa - pb, a - b) - np.linalg.norm(pa - pb) ** 2
            assert gap >= -1e-9

    def test_fixed_on_members(self, problem):
        w_set = stack_constraints(problem, np.zeros(2))
        r = project(np.zeros(5), w_set)
        assert np.allclose(project(r, w_set), r, atol=1e-10)


class TestExactOcp:
    def test_interior_matches_unconstrained(self, problem):
        # Small enough state that no constraint activates over the horizon.
        x = np.array([0.02, -0.01])
        sol = solve_exact_ocp(problem, x)
        nu_free = -np.linalg.solve(problem.H, problem.G @ x)
        assert np.allclose(sol.u[2:], nu_free, atol=1e-8)
        assert np.allclose(sol.u[:2], x, atol=1e-10)
        # Interior value equals the infinite-horizon quadratic.
        v_ref = float(x @ problem.cost.P @ x)
        assert abs(sol.value - v_ref) <= 1e-8 * (1.0 + v_ref)

    def test_active_input_bound(self, problem):
        x = np.array([-3.0, 2.0])
        sol = solve_exact_ocp(problem, x)
        w_set = stack_constraints(problem, x)
        assert w_set.contains(sol.u)
        assert sol.u[2] <= 0.5 + 1e-10

    def test_value_nonnegative(self, problem, draw_feasible):
        for x in draw_feasible(10):
            sol = solve_exact_ocp(problem, x)
            assert sol.value >= -1e-12
            assert sol.value >= float(x @ problem.cost.P @ x) - 1e-8
