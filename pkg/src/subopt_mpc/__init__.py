"""Constrained linear-quadratic MPC with a fixed per-step splitting budget.

The toolkit condenses an LQ optimal control problem with polytopic state
and input sets into a strongly convex QP, runs a fixed number ell of
over-relaxed ADMM iterations per control step (warm-started across steps),
and computes the certificate chain (contraction rate tau, Lipschitz and ISS
constants, terminal region, iteration budget ell*) under which the
suboptimal closed loop is provably stable.

Typical flow::

    from subopt_mpc import preset_problem, preset_params
    from subopt_mpc import rate_certificate, certificate
    from subopt_mpc import ClosedLoopConfig, simulate, certify_trajectory

    problem = preset_problem("double-integrator")
    params = preset_params(ell=30)
    const = certificate(problem, rate_certificate(problem))
    log = simulate(ClosedLoopConfig(x0=(-4.0, 2.8), ell=30, T=60),
                   problem, params, const)
    report = certify_trajectory(log, const)

The command-line interface lives in `subopt_mpc.cli` (console script
``subopt-mpc``); figure rendering in `subopt_mpc.plots`.  Both import
matplotlib and are left out of the package namespace on purpose.
"""

from .admm import (AdmmIterate, AdmmParams, FixedPoint, f_norm,
                   fixed_point_oracle, r_update, run, solve_to_fixed_point,
                   step, u_update, v_update)
from .analysis import (CertificateConstants, Gamma2, RateCertificate,
                       SpectralConstants, TerminalRegion, bisect_alpha,
                       certificate, empirical_lipschitz, lipschitz_L1,
                       lmi_feasible, min_certified_rate, rate_certificate,
                       resolve_tau, spectral_constants, tau_formula,
                       terminal_region)
from .errors import (CapExceeded, ConfigError, DegenerateRow,
                     DimensionMismatch, IllConditioned, IllPosed, Infeasible,
                     InfeasibleOcp, InfeasibleParameter, MaxIterations,
                     NonConvergent, NotStabilizable, SingularSystem,
                     SuboptMpcError)
from .model import (CondensedProblem, CostSpec, Plant, Polytope,
                    StackedConstraints, condense, load_problem, rollout,
                    rollout_cost, solve_dare, stack_constraints)
from .presets import PRESET_NAMES, preset_document, preset_params, preset_problem
from .qp import (OcpSolution, QpInstance, QpSolution, project, solve_exact_ocp,
                 solve_qp)
from .simulator import (FIXED_POINT, CertificateReport, ClosedLoopConfig,
                        StepRecord, SweepCell, SweepTable, TrajectoryLog,
                        Violation, certify_trajectory, exact_step, input_error,
                        simulate, step_closed_loop, sweep_ell)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "SuboptMpcError", "ConfigError", "DimensionMismatch", "NotStabilizable",
    "NonConvergent", "DegenerateRow", "InfeasibleParameter", "Infeasible",
    "InfeasibleOcp", "MaxIterations", "IllConditioned", "IllPosed",
    "SingularSystem", "CapExceeded",
    # model
    "Plant", "Polytope", "CostSpec", "CondensedProblem", "StackedConstraints",
    "solve_dare", "condense", "stack_constraints", "rollout", "rollout_cost",
    "load_problem",
    # qp
    "QpInstance", "QpSolution", "OcpSolution", "solve_qp", "project",
    "solve_exact_ocp",
    # admm
    "AdmmParams", "AdmmIterate", "FixedPoint", "u_update", "r_update",
    "v_update", "step", "run", "solve_to_fixed_point", "fixed_point_oracle",
    "f_norm",
    # analysis
    "RateCertificate", "CertificateConstants", "SpectralConstants",
    "TerminalRegion", "Gamma2", "tau_formula", "spectral_constants",
    "lmi_feasible", "min_certified_rate", "bisect_alpha", "lipschitz_L1",
    "empirical_lipschitz", "terminal_region", "rate_certificate",
    "certificate", "resolve_tau",
    # simulator
    "FIXED_POINT", "ClosedLoopConfig", "StepRecord", "TrajectoryLog",
    "Violation", "CertificateReport", "SweepCell", "SweepTable", "exact_step",
    "step_closed_loop", "simulate", "certify_trajectory", "sweep_ell",
    "input_error",
    # presets
    "PRESET_NAMES", "preset_document", "preset_problem", "preset_params",
]
