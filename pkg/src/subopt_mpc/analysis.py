"""Stability-certificate chain.

Computes, for a condensed instance: the strong-convexity/smoothness moduli
(p, L) and kappa = L/p of the QP; the certified linear convergence rate of
the over-relaxed splitting (closed form and LMI-bisection); the solution-map
Lipschitz constant L1; the value-function constants delta, beta and the ISS
gains gamma1, gamma2(ell), gamma3, omega1, omega2; the terminal-region
constants c, d, r_N; and the iteration budget ell* that certifies closed-loop
stability on Omega = {psi(x) <= r_N} x {||e||_F <= r_e}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigError, DegenerateRow, IllPosed
from .model import CondensedProblem, CostSpec, Plant, Polytope, stack_constraints

__all__ = [
    "RateCertificate", "CertificateConstants", "SpectralConstants",
    "TerminalRegion", "Gamma2", "tau_formula", "spectral_constants",
    "lmi_feasible", "min_certified_rate", "bisect_alpha", "lipschitz_L1",
    "empirical_lipschitz", "terminal_region", "rate_certificate",
    "certificate", "resolve_tau",
]

_LMI_EIG_TOL = 1e-9


class SpectralConstants(NamedTuple):
    p: float
    L: float
    kappa: float
    rho_suggested: float


@dataclass(frozen=True)
class Gamma2:
    """Warm-start error gain gamma2(ell) = L1 ||F^{1/2}|| tau^ell / (1 - tau^ell).

    A callable dataclass (rather than a closure) so certificates stay
    picklable for multiprocess sweeps.
    """

    L1: float
    F_sqrt_norm: float
    tau: float

    def __call__(self, ell) -> float:
        t = self.tau ** ell
        return self.L1 * self.F_sqrt_norm * t / (1.0 - t)


class TerminalRegion(NamedTuple):
    c: float
    d: float
    r_N: float


@dataclass(frozen=True, eq=False)
class RateCertificate:
    """Convergence-rate data of the splitting operator at (alpha, epsilon)."""

    p: float
    L: float
    kappa: float
    rho_suggested: float
    tau_formula: float
    tau_lmi: float
    Fbar: np.ndarray
    kappa_F: float
    lambda1: float
    lambda2: float
    alpha: float
    epsilon: float
    alpha_max: Optional[float] = None


@dataclass(frozen=True, eq=False)
class CertificateConstants:
    """Full closed-loop certificate at a chosen rate tau.

    ell_star follows the two-branch formula
        ell* = ceil(max(-log(1 + gamma3 gamma1 L1) / log tau,
                        -log(omega1 + omega2 gamma1 ||Bbar||) / log tau));
    ell_star_variant additionally multiplies the first branch's argument by
    ||F^{1/2}|| (the factor appearing in gamma2), reported for comparison.
    """

    tau: float
    L1: float
    delta: float
    beta: float
    gamma1: float
    gamma3: float
    omega1: float
    omega2: float
    c: float
    d: float
    r_N: float
    r_e: float
    ell_star: int
    ell_star_variant: int
    branch_warmstart: float
    branch_state: float
    kappa_F: float
    F_sqrt_norm: float
    F_inv_sqrt_norm: float
    B_bar_norm: float
    e_radius: float
    gamma2: Callable[[float], float]

    def gamma2_table(self, ells) -> dict:
        return {int(l): float(self.gamma2(int(l))) for l in ells}


def tau_formula(alpha: float, kappa: float, epsilon: float) -> float:
    """Closed-form certified rate 1 - alpha / (2 kappa^{0.5 + |epsilon|})."""
    return 1.0 - alpha / (2.0 * kappa ** (0.5 + abs(epsilon)))


def spectral_constants(problem: CondensedProblem, epsilon: float = 0.0) -> SpectralConstants:
    """p = 2 sigma_min(M), L = 2 sigma_max(M), kappa = L/p, and the step
    size suggestion rho = sqrt(pL) * kappa^epsilon."""
    sv = np.linalg.svd(problem.M, compute_uv=False)
    p, L = 2.0 * float(sv[-1]), 2.0 * float(sv[0])
    kappa = L / p
    return SpectralConstants(p=p, L=L, kappa=kappa,
                             rho_suggested=math.sqrt(p * L) * kappa ** epsilon)


def _lmi_terms(alpha: float, kappa: float, epsilon: float, tau: float):
    """Constant and multiplier-linear 4x4 blocks of the rate LMI."""
    ab = 1.0 - alpha
    A_h = np.array([[1.0, ab], [0.0, 0.0]])
    B_h = np.array([[-alpha, -1.0], [0.0, 1.0]])
    C1 = np.array([[1.0, -1.0], [0.0, 0.0]])
    C2 = np.array([[1.0, ab], [0.0, 0.0]])
    D1 = np.array([[-1.0, 0.0], [1.0, 0.0]])
    D2 = np.array([[-alpha, -1.0], [0.0, 1.0]])
    off = kappa ** (-0.5 - epsilon) + kappa ** (0.5 - epsilon)
    M1 = np.array([[-2.0 * kappa ** (-2.0 * epsilon), off], [off, -2.0]])
    M2 = np.array([[0.0, 1.0], [1.0, 0.0]])
    Fbar = np.array([[1.0, ab], [ab, 1.0]])

    AB = np.hstack([A_h, B_h])
    CD1 = np.hstack([C1, D1])
    CD2 = np.hstack([C2, D2])
    T0 = AB.T @ Fbar @ AB
    T0[:2, :2] -= tau ** 2 * Fbar
    T1 = CD1.T @ M1 @ CD1
    T2 = CD2.T @ M2 @ CD2
    return T0, T1, T2


def lmi_feasible(alpha: float, kappa: float, epsilon: float, tau: float,
                 grid: int = 60, refine: bool = True):
    """Search multipliers lambda1, lambda2 > 0 making the 4x4 rate LMI
    negative semidefinite (max eigenvalue <= 1e-9) at rate tau.

    The LMI is affine in (lambda1, lambda2): a log-spaced grid over
    [1e-6, 1e6]^2 followed by a Nelder-Mead polish replaces an SDP solver.
    Returns (feasible, lambda1, lambda2) with the best witnesses found.
    """
    if not 0.0 < alpha < 2.0:
        raise ConfigError(f"alpha must lie in (0, 2), got {alpha}")
    if not 0.0 < tau < 1.0:
        raise ConfigError(f"tau must lie in (0, 1), got {tau}")
    if kappa < 1.0:
        raise ConfigError(f"kappa must be >= 1, got {kappa}")
    T0, T1, T2 = _lmi_terms(alpha, kappa, epsilon, tau)

    lams = np.logspace(-6.0, 6.0, grid)
    S = (T0[None, None] + lams[:, None, None, None] * T1[None]
         + lams[None, :, None, None] * T2[None])
    eigs = np.linalg.eigvalsh(S)[..., -1]
    i, j = np.unravel_index(int(np.argmin(eigs)), eigs.shape)
    best = float(eigs[i, j])
    lam1, lam2 = float(lams[i]), float(lams[j])

    if refine and best > -1.0:
        def worst_eig(loglam):
            S = T0 + math.exp(loglam[0]) * T1 + math.exp(loglam[1]) * T2
            return float(np.linalg.eigvalsh(S)[-1])

        res = minimize(worst_eig, [math.log(lam1), math.log(lam2)],
                       method="Nelder-Mead",
                       options={"maxiter": 400, "xatol": 1e-10, "fatol": 1e-14})
        if res.fun < best:
            best = float(res.fun)
            lam1, lam2 = float(math.exp(res.x[0])), float(math.exp(res.x[1]))
    return best <= _LMI_EIG_TOL, lam1, lam2


def min_certified_rate(alpha: float, kappa: float, epsilon: float,
                       tol: float = 1e-6) -> float:
    """Smallest LMI-certifiable rate, by bisection on tau.

    Feasibility is monotone in tau (the tau^2 term only subtracts a PSD
    block), so bisection is exact up to tol.
    """
    hi = 1.0 - 1e-9
    if not lmi_feasible(alpha, kappa, epsilon, hi)[0]:
        raise IllPosed("rate LMI infeasible even at tau ~ 1; "
                       "parameters outside the certifiable range")
    lo = 1e-6
    if lmi_feasible(alpha, kappa, epsilon, lo)[0]:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if lmi_feasible(alpha, kappa, epsilon, mid)[0]:
            hi = mid
        else:
            lo = mid
    return hi


def bisect_alpha(kappa: float, epsilon: float, step: float = 1e-3) -> float:
    """Largest alpha on a step-spaced grid in (0, 2) whose closed-form rate
    tau_formula(alpha) is LMI-certified."""
    n_steps = int(round(2.0 / step)) - 1
    for k in range(n_steps, 0, -1):
        alpha = k * step
        tf = tau_formula(alpha, kappa, epsilon)
        if 0.0 < tf < 1.0 and lmi_feasible(alpha, kappa, epsilon, tf)[0]:
            return alpha
    raise IllPosed("no alpha on the grid is certifiable")


def _spectral_norm(mat: np.ndarray) -> float:
    if mat.size == 0:
        return 0.0
    return float(np.linalg.norm(mat, 2))


def lipschitz_L1(problem: CondensedProblem) -> float:
    """Closed-form Lipschitz constant of the solution map,
    L1 = ||H^{-1/2}|| * ||H^{-1/2} G|| * (||H|| + 1) + ||G||.

    Computed as if no state constraints are active; the sampling-based
    empirical_lipschitz is the diagnostic companion, never the certified
    value.
    """
    evals, vecs = np.linalg.eigh(problem.H)
    if evals[0] <= 0:
        raise IllPosed("H must be positive definite")
    H_inv_sqrt = vecs @ np.diag(evals ** -0.5) @ vecs.T
    return float(_spectral_norm(H_inv_sqrt) * _spectral_norm(H_inv_sqrt @ problem.G)
                 * (_spectral_norm(problem.H) + 1.0) + _spectral_norm(problem.G))


def empirical_lipschitz(problem: CondensedProblem, n_pairs: int = 50,
                        seed: int = 0, margin: float = 0.7) -> float:
    """Diagnostic: max ||phi*(xi) - phi*(xi_bar)|| / ||xi - xi_bar|| over
    sampled strictly feasible state pairs, with phi* = (r*, -2 M r*).

    States are drawn from a shrunken box and kept only when the
    unconstrained solution already satisfies all constraints (single affine
    piece of the solution map), matching the regime of the closed form.
    """
    rng = np.random.default_rng(seed)
    n = problem.n
    Hinv_G = np.linalg.solve(problem.H, problem.G)
    box = margin * np.min(problem.X.d / np.linalg.norm(problem.X.C, axis=1))

    def interior_phi(x):
        if not problem.X.contains(x):
            return None
        nu = -Hinv_G @ x
        r = np.concatenate([x, nu])
        w = stack_constraints(problem, x)
        if not np.all(w.C @ r <= w.d - 1e-9):
            return None
        return np.concatenate([r, -2.0 * (problem.M @ r)])

    worst = 0.0
    found = 0
    attempts = 0
    while found < n_pairs and attempts < 200 * n_pairs:
        attempts += 1
        x1 = rng.uniform(-box, box, n)
        x2 = rng.uniform(-box, box, n)
        if np.linalg.norm(x1 - x2) < 1e-9:
            continue
        p1, p2 = interior_phi(x1), interior_phi(x2)
        if p1 is None or p2 is None:
            continue
        worst = max(worst, np.linalg.norm(p1 - p2) / np.linalg.norm(x1 - x2))
        found += 1
    if found == 0:
        raise IllPosed("no strictly feasible interior pair found")
    return float(worst)


def terminal_region(plant: Plant, cost: CostSpec, X: Polytope, U: Polytope) -> TerminalRegion:
    """Largest c with {x : x'Px <= c} inside {x in X : -Kx in U}, via the
    facet formula c = min_rows b^2 / (a' P^{-1} a); then d = c lmin(Q)/lmax(P)
    and r_N = sqrt(N d + c)."""
    rows = np.vstack([X.C, -U.C @ cost.K])
    offs = np.concatenate([X.d, U.d])
    P_inv = np.linalg.inv(cost.P)

    c = math.inf
    usable = 0
    for a, b in zip(rows, offs):
        norm_a = np.linalg.norm(a)
        if norm_a <= 1e-12:
            # Zero normal: row is vacuous (b >= 0 by the origin invariant).
            continue
        usable += 1
        c = min(c, float(b ** 2 / (a @ P_inv @ a)))
    if usable == 0 or not math.isfinite(c):
        raise DegenerateRow("no usable facet row for the terminal region")
    lam_min_Q = float(np.linalg.eigvalsh(cost.Q)[0])
    lam_max_P = float(np.linalg.eigvalsh(cost.P)[-1])
    d = c * lam_min_Q / lam_max_P
    return TerminalRegion(c=c, d=d, r_N=math.sqrt(cost.N * d + c))


def rate_certificate(problem: CondensedProblem, alpha: float = 1.95,
                     epsilon: float = 0.0,
                     with_alpha_max: bool = False) -> RateCertificate:
    """Assemble the rate certificate at (alpha, epsilon): spectral data,
    both rate routes, the F-weighting, and the LMI witnesses."""
    spec = spectral_constants(problem, epsilon)
    tf = tau_formula(alpha, spec.kappa, epsilon)
    tl = min_certified_rate(alpha, spec.kappa, epsilon)
    _, lam1, lam2 = lmi_feasible(alpha, spec.kappa, epsilon, tl)
    ab = abs(1.0 - alpha)
    Fbar = np.array([[1.0, 1.0 - alpha], [1.0 - alpha, 1.0]])
    kappa_F = (1.0 + ab) / (1.0 - ab)
    a_max = bisect_alpha(spec.kappa, epsilon) if with_alpha_max else None
    return RateCertificate(p=spec.p, L=spec.L, kappa=spec.kappa,
                           rho_suggested=spec.rho_suggested, tau_formula=tf,
                           tau_lmi=tl, Fbar=Fbar, kappa_F=kappa_F,
                           lambda1=lam1, lambda2=lam2, alpha=alpha,
                           epsilon=epsilon, alpha_max=a_max)


def resolve_tau(rate: RateCertificate, tau_choice) -> float:
    """Map a tau selection ('lmi' | 'formula' | float | None) to a value."""
    if tau_choice is None or tau_choice == "lmi":
        return rate.tau_lmi
    if tau_choice == "formula":
        return rate.tau_formula
    tau = float(tau_choice)
    if not 0.0 < tau < 1.0:
        raise ConfigError(f"tau must lie in (0, 1), got {tau}")
    return tau


def certificate(problem: CondensedProblem, rate: RateCertificate,
                tau_choice=None) -> CertificateConstants:
    """Full certificate chain at the chosen rate.

    delta^2 = lmax(W) + L1 lmax(H) + 2 L1 ||G||;  beta^2 = 1 - lmin(Q)/delta^2;
    gamma1 = delta/(1-beta);  gamma3 = 2 ||F^{-1/2}|| ||P^{-1/2}||;
    omega1 = sqrt(kappa_F)(1 + L1 ||Bbar||);
    omega2 = L1 sqrt(kappa_F) ||(A-I) P^{-1/2}|| + L1^2 sqrt(kappa_F) ||Bbar|| ||P^{-1/2}||;
    r_e = r_N / (gamma1 ||Bbar||);  gamma2(ell) = L1 ||F^{1/2}|| tau^ell / (1 - tau^ell).
    """
    tau = resolve_tau(rate, tau_choice)
    cost, plant = problem.cost, problem.plant
    L1 = lipschitz_L1(problem)

    lam_max_W = float(np.linalg.eigvalsh(problem.W)[-1])
    lam_max_H = float(np.linalg.eigvalsh(problem.H)[-1])
    delta = math.sqrt(lam_max_W + L1 * lam_max_H + 2.0 * L1 * _spectral_norm(problem.G))
    lam_min_Q = float(np.linalg.eigvalsh(cost.Q)[0])
    beta_sq = 1.0 - lam_min_Q / delta ** 2
    # delta^2 >= lmax(W) >= lmin(Q) guarantees beta_sq in [0, 1); zero is
    # legitimate (G = 0 decouples the horizon and the exact loop deadbeats).
    if not -1e-12 <= beta_sq < 1.0:
        raise IllPosed(f"beta^2 = {beta_sq} outside [0, 1)")
    beta = math.sqrt(max(beta_sq, 0.0))
    gamma1 = delta / (1.0 - beta)

    f_eigs = np.linalg.eigvalsh(rate.Fbar)
    F_sqrt_norm = math.sqrt(float(f_eigs[-1]))
    F_inv_sqrt_norm = 1.0 / math.sqrt(float(f_eigs[0]))

    p_eigs, p_vecs = np.linalg.eigh(cost.P)
    P_inv_sqrt = p_vecs @ np.diag(p_eigs ** -0.5) @ p_vecs.T
    P_inv_sqrt_norm = _spectral_norm(P_inv_sqrt)
    gamma3 = 2.0 * F_inv_sqrt_norm * P_inv_sqrt_norm

    B_bar = plant.B @ problem.Xi_phi
    B_bar_norm = _spectral_norm(B_bar)
    sqrt_kF = math.sqrt(rate.kappa_F)
    omega1 = sqrt_kF * (1.0 + L1 * B_bar_norm)
    omega2 = (L1 * sqrt_kF * _spectral_norm((plant.A - np.eye(plant.n)) @ P_inv_sqrt)
              + L1 ** 2 * sqrt_kF * B_bar_norm * P_inv_sqrt_norm)

    region = terminal_region(plant, cost, problem.X, problem.U)
    r_e = region.r_N / (gamma1 * B_bar_norm)
    e_radius = (1.0 - beta) * region.r_N / (delta * B_bar_norm)

    log_tau = math.log(tau)
    branch_warm = -math.log(1.0 + gamma3 * gamma1 * L1) / log_tau
    branch_state = -math.log(omega1 + omega2 * gamma1 * B_bar_norm) / log_tau
    # Budgets live in {1, 2, ...}; both branches are 0 when L1 = 0, alpha = 1.
    ell_star = max(1, int(math.ceil(max(branch_warm, branch_state))))
    branch_warm_v = -math.log(1.0 + gamma3 * gamma1 * L1 * F_sqrt_norm) / log_tau
    ell_star_variant = max(1, int(math.ceil(max(branch_warm_v, branch_state))))

    gamma2 = Gamma2(L1=L1, F_sqrt_norm=F_sqrt_norm, tau=tau)

    return CertificateConstants(
        tau=tau, L1=L1, delta=delta, beta=beta, gamma1=gamma1, gamma3=gamma3,
        omega1=omega1, omega2=omega2, c=region.c, d=region.d, r_N=region.r_N,
        r_e=r_e, ell_star=ell_star, ell_star_variant=ell_star_variant,
        branch_warmstart=branch_warm, branch_state=branch_state,
        kappa_F=rate.kappa_F, F_sqrt_norm=F_sqrt_norm,
        F_inv_sqrt_norm=F_inv_sqrt_norm, B_bar_norm=B_bar_norm,
        e_radius=e_radius, gamma2=gamma2,
    )
