"""Problem data: LTI plant, polytopic sets, LQR cost, condensed QP form.

The receding-horizon problem over horizon N is condensed into a single
strictly convex QP in the stacked decision vector

    u = [xi_0; nu_0; ...; nu_{N-1}]  in R^s,   s = n + N*m,

with cost ||u||_M^2 = u^T M u, M = [[W, G^T], [G, H]].  The blocks are
built so that u^T M u equals the rolled-out trajectory cost

    xi_N^T P xi_N + sum_{i<N} (xi_i^T Q xi_i + nu_i^T R nu_i),

where xi_{i+1} = A xi_i + B nu_i; that rollout equality is the defining
contract of the construction (and is what the tests pin down).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    DegenerateRow,
    DimensionMismatch,
    InfeasibleParameter,
    NonConvergent,
    NotStabilizable,
)

__all__ = [
    "Plant",
    "Polytope",
    "CostSpec",
    "CondensedProblem",
    "StackedConstraints",
    "solve_dare",
    "condense",
    "stack_constraints",
    "rollout",
    "rollout_cost",
    "load_problem",
]


def _as_matrix(a, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a 2-d matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def _as_vector(a, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def pbh_stabilizable(A: np.ndarray, B: np.ndarray, rtol: float = 1e-8) -> bool:
    """PBH test: for every eigenvalue of A with |lambda| >= 1, the matrix
    [A - lambda I, B] must have full row rank (singular values above
    rtol * sigma_max)."""
    n = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) < 1.0 - 1e-9:
            continue
        pencil = np.hstack([A - lam * np.eye(n), B])
        sv = np.linalg.svd(pencil, compute_uv=False)
        if sv[-1] <= rtol * sv[0]:
            return False
    return True


@dataclass(frozen=True, eq=False)
class Plant:
    """Discrete-time LTI plant x_{t+1} = A x_t + B u_t."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise DimensionMismatch(f"B has {B.shape[0]} rows, expected {A.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        if not pbh_stabilizable(A, B):
            raise NotStabilizable("(A, B) fails the PBH stabilizability test")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True, eq=False)
class Polytope:
    """Polytope {z : C z <= d}.

    Model sets (state set X, input set U) must contain the origin, so d >= 0
    elementwise; parameterized sets built internally (which may not contain
    the origin) pass require_origin=False.
    """

    C: np.ndarray
    d: np.ndarray
    require_origin: bool = True

    def __post_init__(self):
        C = _as_matrix(self.C, "C")
        d = _as_vector(self.d, "d")
        if C.shape[0] != d.shape[0]:
            raise DimensionMismatch(f"C has {C.shape[0]} rows but d has {d.shape[0]}")
        row_norms = np.linalg.norm(C, axis=1)
        if np.any(row_norms == 0.0):
            raise DegenerateRow("polytope has a zero row in C")
        if self.require_origin and np.any(d < 0):
            raise ConfigError("polytope must contain the origin (d >= 0)")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "d", d)

    @property
    def dim(self) -> int:
        return self.C.shape[1]

    @property
    def nrows(self) -> int:
        return self.C.shape[0]

    def contains(self, z, tol: float = 1e-10) -> bool:
        z = np.asarray(z, dtype=float).reshape(-1)
        return bool(np.all(self.C @ z <= self.d + tol))


def solve_dare(plant: Plant, Q: np.ndarray, R: np.ndarray,
               tol: float = 1e-12, cap: int = 10_000):
    """Solve the discrete-time algebraic Riccati equation by fixed-point
    iteration P_{k+1} = Q + A'P A - A'P B (R + B'P B)^{-1} B'P A from P_0 = Q.

    Returns (P, K) with K = (R + B'P B)^{-1} B'P A.  Convergence when the
    update is below tol * ||P_k||; raises NonConvergent past the cap.
    """
    A, B = plant.A, plant.B
    Q = _as_matrix(Q, "Q")
    R = _as_matrix(R, "R")
    if np.linalg.eigvalsh(Q)[0] <= 0:
        raise ConfigError("Q must be positive definite")
    if np.linalg.eigvalsh(R)[0] <= 0:
        raise ConfigError("R must be positive definite")
    if not pbh_stabilizable(A, B):
        raise NotStabilizable("(A, B) fails the PBH stabilizability test")

    P = Q.copy()
    for _ in range(cap):
        BtP = B.T @ P
        K = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = Q + A.T @ P @ A - A.T @ P @ B @ K
        P_next = 0.5 * (P_next + P_next.T)
        if np.linalg.norm(P_next - P) <= tol * max(np.linalg.norm(P), 1e-300):
            P = P_next
            break
        P = P_next
    else:
        raise NonConvergent(f"Riccati fixed-point iteration exceeded {cap} iterations")

    BtP = B.T @ P
    K = np.linalg.solve(R + BtP @ B, BtP @ A)
    P.setflags(write=False)
    K.setflags(write=False)
    return P, K


@dataclass(frozen=True, eq=False)
class CostSpec:
    """Stage cost (Q, R), horizon N, terminal cost P and LQR gain K."""

    Q: np.ndarray
    R: np.ndarray
    N: int
    P: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        for name in ("Q", "R", "P", "K"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name), name))
        if self.N < 1:
            raise ConfigError("horizon N must be a positive integer")
        if np.linalg.eigvalsh(self.Q)[0] <= 0:
            raise ConfigError("Q must be positive definite")
        if np.linalg.eigvalsh(self.R)[0] <= 0:
            raise ConfigError("R must be positive definite")

    @classmethod
    def from_weights(cls, plant: Plant, Q, R, N: int) -> "CostSpec":
        Q = _as_matrix(Q, "Q")
        R = _as_matrix(R, "R")
        P, K = solve_dare(plant, Q, R)
        return cls(Q=Q, R=R, N=int(N), P=P, K=K)


@dataclass(frozen=True, eq=False)
class StackedConstraints:
    """The constraint set W(x_t) of the condensed QP.

    Equality rows pin the first state block (E r = e encodes xi_0 = x_t);
    inequality rows stack xi_0 in X, each nu_i in U, and the rolled-out
    states Abar r in X (all N predicted states, terminal included).
    """

    E: np.ndarray
    e: np.ndarray
    C: np.ndarray
    d: np.ndarray

    @property
    def dim(self) -> int:
        return self.E.shape[1]

    def contains(self, r, tol: float = 1e-10) -> bool:
        r = np.asarray(r, dtype=float).reshape(-1)
        return bool(
            np.all(np.abs(self.E @ r - self.e) <= tol)
            and np.all(self.C @ r <= self.d + tol)
        )

    def as_polytope(self) -> Polytope:
        """H-representation with the equality encoded as two-sided rows."""
        C = np.vstack([self.E, -self.E, self.C])
        d = np.concatenate([self.e, -self.e, self.d])
        return Polytope(C=C, d=d, require_origin=False)


@dataclass(frozen=True, eq=False)
class CondensedProblem:
    """Condensed QP data for one constrained LQR instance.

    Decision layout u = [xi_0; nu_0; ...; nu_{N-1}], cost ||u||_M^2 with
    M = [[W, G^T], [G, H]]; Abar maps u to the stacked predicted states
    [xi_1; ...; xi_N].  Xi_phi selects the first input block nu_0.
    """

    plant: Plant
    cost: CostSpec
    X: Polytope
    U: Polytope
    W: np.ndarray
    G: np.ndarray
    H: np.ndarray
    M: np.ndarray
    Abar: np.ndarray

    def __post_init__(self):
        for name in ("W", "G", "H", "M", "Abar"):
            getattr(self, name).setflags(write=False)

    @property
    def n(self) -> int:
        return self.plant.n

    @property
    def m(self) -> int:
        return self.plant.m

    @property
    def N(self) -> int:
        return self.cost.N

    @property
    def s(self) -> int:
        return self.n + self.N * self.m

    @property
    def Xi_phi(self) -> np.ndarray:
        """m x s selector of the first input block: nu_0 = Xi_phi u."""
        sel = np.zeros((self.m, self.s))
        sel[:, self.n:self.n + self.m] = np.eye(self.m)
        sel.setflags(write=False)
        return sel


def rollout(plant: Plant, x0, nus) -> np.ndarray:
    """States [xi_0; ...; xi_N] from xi_0 = x0 under inputs nus (N x m)."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    nus = np.asarray(nus, dtype=float).reshape(-1, plant.m)
    states = [x0]
    for nu in nus:
        states.append(plant.A @ states[-1] + plant.B @ nu)
    return np.array(states)


def rollout_cost(plant: Plant, cost: CostSpec, u_vec) -> float:
    """Trajectory cost of the stacked decision u = [xi_0; nu_0; ...]."""
    u_vec = np.asarray(u_vec, dtype=float).reshape(-1)
    n, m, N = plant.n, plant.m, cost.N
    x0 = u_vec[:n]
    nus = u_vec[n:].reshape(N, m)
    states = rollout(plant, x0, nus)
    total = float(states[N] @ cost.P @ states[N])
    for i in range(N):
        total += float(states[i] @ cost.Q @ states[i]) + float(nus[i] @ cost.R @ nus[i])
    return total


def condense(plant: Plant, cost: CostSpec, X: Polytope, U: Polytope) -> CondensedProblem:
    """Build the condensed QP blocks W, G, H, M and the prediction matrix Abar."""
    A, B = plant.A, plant.B
    n, m, N = plant.n, plant.m, cost.N
    if X.dim != n:
        raise DimensionMismatch(f"X lives in R^{X.dim}, expected R^{n}")
    if U.dim != m:
        raise DimensionMismatch(f"U lives in R^{U.dim}, expected R^{m}")

    powers = [np.eye(n)]
    for _ in range(N):
        powers.append(A @ powers[-1])

    Sx = np.vstack([powers[i] for i in range(1, N + 1)])
    Su = np.zeros((n * N, N * m))
    for i in range(1, N + 1):
        for j in range(i):
            Su[(i - 1) * n:i * n, j * m:(j + 1) * m] = powers[i - 1 - j] @ B

    Qbar = np.zeros((n * N, n * N))
    for i in range(N - 1):
        Qbar[i * n:(i + 1) * n, i * n:(i + 1) * n] = cost.Q
    Qbar[(N - 1) * n:, (N - 1) * n:] = cost.P
    Rbar = np.kron(np.eye(N), cost.R)

    W = cost.Q + Sx.T @ Qbar @ Sx
    G = Su.T @ Qbar @ Sx
    H = Rbar + Su.T @ Qbar @ Su
    M = np.block([[W, G.T], [G, H]])
    M = 0.5 * (M + M.T)
    if np.linalg.eigvalsh(M)[0] <= 0:
        raise ConfigError("condensed cost matrix M is not positive definite")
    Abar = np.hstack([Sx, Su])

    return CondensedProblem(plant=plant, cost=cost, X=X, U=U,
                            W=W, G=G, H=H, M=M, Abar=Abar)


def stack_constraints(problem: CondensedProblem, x_t) -> StackedConstraints:
    """H-representation of W(x_t) = {r : r_0 = x_t, nu_i in U, Abar r in X^N}.

    Raises InfeasibleParameter when x_t is outside X (the set would be empty
    before any input even acts).
    """
    x_t = np.asarray(x_t, dtype=float).reshape(-1)
    n, m, N, s = problem.n, problem.m, problem.N, problem.s
    if x_t.shape[0] != n:
        raise DimensionMismatch(f"x_t has dim {x_t.shape[0]}, expected {n}")
    if not problem.X.contains(x_t):
        raise InfeasibleParameter("x_t is outside the state set X")

    E = np.hstack([np.eye(n), np.zeros((n, N * m))])
    e = x_t.copy()

    CX, dX = problem.X.C, problem.X.d
    CU, dU = problem.U.C, problem.U.d
    blocks = [np.hstack([CX, np.zeros((CX.shape[0], N * m))])]
    offsets = [dX]
    for i in range(N):
        row = np.zeros((CU.shape[0], s))
        row[:, n + i * m:n + (i + 1) * m] = CU
        blocks.append(row)
        offsets.append(dU)
    CX_stack = np.kron(np.eye(N), CX)
    blocks.append(CX_stack @ problem.Abar)
    offsets.append(np.tile(dX, N))

    return StackedConstraints(E=E, e=e, C=np.vstack(blocks), d=np.concatenate(offsets))


def load_problem(source) -> CondensedProblem:
    """Load a problem instance from a JSON file path, file object, or dict.

    Schema: {"A": [[...]], "B": [[...]], "Q": [[...]], "R": [[...]],
             "N": int, "X": {"C": [[...]], "d": [...]}, "U": {...}}.
    """
    if isinstance(source, dict):
        doc = source
    elif hasattr(source, "read"):
        doc = json.load(source)
    else:
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)

    missing = [k for k in ("A", "B", "Q", "R", "N", "X", "U") if k not in doc]
    if missing:
        raise ConfigError(f"problem document missing keys: {missing}")
    try:
        plant = Plant(A=np.array(doc["A"], dtype=float),
                      B=np.array(doc["B"], dtype=float))
        X = Polytope(C=np.array(doc["X"]["C"], dtype=float),
                     d=np.array(doc["X"]["d"], dtype=float))
        U = Polytope(C=np.array(doc["U"]["C"], dtype=float),
                     d=np.array(doc["U"]["d"], dtype=float))
        cost = CostSpec.from_weights(plant, np.array(doc["Q"], dtype=float),
                                     np.array(doc["R"], dtype=float), int(doc["N"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed problem document: {exc}") from exc
    return condense(plant, cost, X, U)
