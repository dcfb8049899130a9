"""Command-line entry point.

Four subcommands drive the library end to end:

    subopt-mpc analyze  --preset double-integrator --out out/
    subopt-mpc lmi      --preset double-integrator --out out/
    subopt-mpc simulate --config run.json
    subopt-mpc certify  --config run.json

Configuration is one JSON document per run; flags override file values.
Delimited outputs (CSV, JSON) are byte-identical across re-runs with the
same config and seed.  Figures render alongside them unless --no-plots.

Exit codes: 0 success, 2 config error, 3 ill-posed instance, 4 runtime
infeasibility (partial CSV retained), 5 guaranteed-certificate failure.
The log level is set by the env var SUBOPT_MPC_LOG in {error, info, debug}.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import plots
from .admm import AdmmParams
from .analysis import (bisect_alpha, certificate, empirical_lipschitz,
                       min_certified_rate, rate_certificate, spectral_constants)
from .errors import (ConfigError, DimensionMismatch, Infeasible, IllPosed,
                     SuboptMpcError)
from .model import CondensedProblem, load_problem
from .presets import PRESET_NAMES, preset_document
from .simulator import FIXED_POINT, certify_trajectory, sweep_ell

__all__ = ["RunConfig", "main", "cmd_analyze", "cmd_simulate", "cmd_certify",
           "cmd_lmi", "validate_certificate_document",
           "EXIT_OK", "EXIT_CONFIG", "EXIT_ILL_POSED", "EXIT_INFEASIBLE",
           "EXIT_CERTIFICATE"]

logger = logging.getLogger("subopt_mpc.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ILL_POSED = 3
EXIT_INFEASIBLE = 4
EXIT_CERTIFICATE = 5

_TOP_KEYS = {"problem", "preset", "admm", "experiment", "tau_choice",
             "lmi_grid", "out", "seed", "jobs", "plots"}
_ADMM_KEYS = {"alpha", "rho", "epsilon", "ell"}
_EXP_KEYS = {"x0", "T", "ell"}

_DEFAULT_LMI_GRID = [0.1, 0.3, 0.5, 0.7, 0.9, 1.1, 1.3, 1.5, 1.7, 1.9, 1.95]

# Plain-text definitions of every reported constant, embedded in the
# certificate document so reports are self-describing.
_FORMULAS = {
    "p": "2 * sigma_min(M)",
    "L": "2 * sigma_max(M)",
    "kappa": "L / p",
    "rho_suggested": "sqrt(p * L)",
    "tau_formula": "1 - alpha / (2 * kappa**(1/2 + |epsilon|))",
    "tau_lmi": "min tau in (0,1) certified by the 4x4 rate LMI (bisection)",
    "kappa_F": "(1 + |alpha - 1|) / (1 - |alpha - 1|)",
    "L1": "||H^(-1/2)|| * ||H^(-1/2) G|| * (||H|| + 1) + ||G||",
    "delta": "sqrt(lambda_max(W) + L1 * lambda_max(H) + 2 * L1 * ||G||)",
    "beta": "sqrt(1 - lambda_min(Q) / delta**2)",
    "gamma1": "delta / (1 - beta)",
    "gamma2": "L1 * ||F^(1/2)|| * tau**ell / (1 - tau**ell)",
    "gamma3": "2 * ||F^(-1/2)|| * ||P^(-1/2)||",
    "omega1": "sqrt(kappa_F) * (1 + L1 * ||Bbar||)",
    "omega2": ("L1 * sqrt(kappa_F) * ||(A - I) P^(-1/2)||"
               " + L1**2 * sqrt(kappa_F) * ||Bbar|| * ||P^(-1/2)||"),
    "c": "min over facet rows a'x <= b of b**2 / (a' P^(-1) a)",
    "d": "c * lambda_min(Q) / lambda_max(P)",
    "r_N": "sqrt(N * d + c)",
    "r_e": "r_N * (1 - beta) / (delta * ||Bbar||)",
    "ell_star": ("ceil(max(-log(1 + gamma3 * gamma1 * L1) / log(tau),"
                 " -log(omega1 + omega2 * gamma1 * ||Bbar||) / log(tau)))"),
}


@dataclass
class RunConfig:
    """Fully resolved run configuration (file values merged with flags)."""

    problem: CondensedProblem
    params: AdmmParams
    x0_list: list
    T: int
    ell_list: list
    tau_choice: Union[str, float, None]
    out: str
    seed: int
    jobs: int
    plots: bool
    lmi_grid: list


def _read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc


def _check_keys(doc: dict, allowed: set, where: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def _parse_tau_choice(value):
    if value is None:
        return None
    if isinstance(value, str):
        if value in ("lmi", "formula"):
            return value
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(
                f"tau must be 'lmi', 'formula' or a number, got {value!r}") from None
    tau = float(value)
    if not 0.0 < tau < 1.0:
        raise ConfigError(f"tau must lie in (0, 1), got {tau}")
    return tau


def _parse_ell_entry(value):
    if isinstance(value, str):
        if value != FIXED_POINT:
            raise ConfigError(f"ell entries must be ints or '{FIXED_POINT}', "
                              f"got {value!r}")
        return FIXED_POINT
    if isinstance(value, bool) or int(value) != value or int(value) < 1:
        raise ConfigError(f"ell entries must be positive ints, got {value!r}")
    return int(value)


def _load_run_config(args) -> RunConfig:
    doc = {}
    if args.config is not None:
        doc = _read_json(args.config)
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
    _check_keys(doc, _TOP_KEYS, "config")

    preset = args.preset or doc.get("preset")
    if preset is not None:
        problem_doc = preset_document(preset)
    elif "problem" in doc:
        src = doc["problem"]
        if isinstance(src, str):
            problem_doc = _read_json(src)
        elif isinstance(src, dict):
            problem_doc = src
        else:
            raise ConfigError("problem must be a file path or an inline object")
    else:
        raise ConfigError("no problem given; pass --preset or a config with "
                          "a 'problem' or 'preset' entry")

    admm_doc = doc.get("admm", {})
    if not isinstance(admm_doc, dict):
        raise ConfigError("admm must be an object")
    _check_keys(admm_doc, _ADMM_KEYS, "admm")
    default_ell = _parse_ell_entry(admm_doc.get("ell", 30))
    params = AdmmParams(
        alpha=float(admm_doc.get("alpha", 1.95)),
        rho=float(admm_doc.get("rho", 50.0)),
        epsilon=float(admm_doc.get("epsilon", 0.0)),
        ell=default_ell if isinstance(default_ell, int) else 1,
    )

    exp = doc.get("experiment", {})
    if not isinstance(exp, dict):
        raise ConfigError("experiment must be an object")
    _check_keys(exp, _EXP_KEYS, "experiment")
    T = int(exp.get("T", 60))
    if T < 1:
        raise ConfigError(f"experiment.T must be >= 1, got {T}")
    ell_list = [_parse_ell_entry(e) for e in exp.get("ell", [default_ell])]
    if not ell_list:
        raise ConfigError("experiment.ell must not be empty")

    # The problem is built before x0 validation so states can be checked
    # against the actual state set.
    problem = load_problem(problem_doc)
    x0_list = []
    for x0 in exp.get("x0", []):
        vec = np.asarray(x0, dtype=float).reshape(-1)
        if vec.shape[0] != problem.n:
            raise ConfigError(f"x0 {x0} has dimension {vec.shape[0]}, "
                              f"expected {problem.n}")
        if not problem.X.contains(vec):
            raise ConfigError(f"x0 {x0} lies outside the state set X")
        x0_list.append(tuple(float(v) for v in vec))

    tau_choice = _parse_tau_choice(
        args.tau if args.tau is not None else doc.get("tau_choice"))

    lmi_grid = doc.get("lmi_grid", list(_DEFAULT_LMI_GRID))
    if not isinstance(lmi_grid, list) or not lmi_grid:
        raise ConfigError("lmi_grid must be a non-empty list of alphas")
    lmi_grid = [float(a) for a in lmi_grid]
    for a in lmi_grid:
        if not 0.0 < a < 2.0:
            raise ConfigError(f"lmi_grid entries must lie in (0, 2), got {a}")

    jobs = args.jobs if args.jobs is not None else int(doc.get("jobs", 1))
    if jobs < 1:
        raise ConfigError(f"jobs must be >= 1, got {jobs}")
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    out = args.out or doc.get("out") or "out"
    want_plots = bool(doc.get("plots", True)) and not args.no_plots

    return RunConfig(problem=problem, params=params, x0_list=x0_list, T=T,
                     ell_list=ell_list, tau_choice=tau_choice, out=str(out),
                     seed=seed, jobs=jobs, plots=want_plots, lmi_grid=lmi_grid)


def _jsonable(obj):
    """Recursively map numpy scalars/arrays to plain JSON types; non-finite
    floats become null so documents stay strict JSON."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# -- analyze -----------------------------------------------------------------

def _certificate_document(cfg: RunConfig, rate, const, empirical_L1) -> dict:
    problem, params = cfg.problem, cfg.params
    choice = cfg.tau_choice
    if choice is None:
        choice = "lmi"
    elif not isinstance(choice, str):
        choice = "explicit"
    return {
        "problem": {"n": problem.n, "m": problem.m, "N": problem.N,
                    "s": problem.s},
        "admm": {"alpha": params.alpha, "rho": params.rho,
                 "epsilon": params.epsilon},
        "rate": {
            "p": rate.p, "L": rate.L, "kappa": rate.kappa,
            "rho_suggested": rate.rho_suggested,
            "tau_formula": rate.tau_formula, "tau_lmi": rate.tau_lmi,
            "kappa_F": rate.kappa_F,
            "lambda1": rate.lambda1, "lambda2": rate.lambda2,
            "alpha_max": rate.alpha_max,
        },
        "tau": {"choice": choice, "value": const.tau},
        "constants": {
            "L1": const.L1, "delta": const.delta, "beta": const.beta,
            "gamma1": const.gamma1, "gamma3": const.gamma3,
            "omega1": const.omega1, "omega2": const.omega2,
            "c": const.c, "d": const.d, "r_N": const.r_N, "r_e": const.r_e,
            "e_radius": const.e_radius, "B_bar_norm": const.B_bar_norm,
            "F_sqrt_norm": const.F_sqrt_norm,
            "F_inv_sqrt_norm": const.F_inv_sqrt_norm,
            "kappa_F": const.kappa_F,
            "ell_star": const.ell_star,
            "ell_star_variant": const.ell_star_variant,
            "branch_warmstart": const.branch_warmstart,
            "branch_state": const.branch_state,
            "gamma2_at_ell_star": const.gamma2(const.ell_star),
        },
        "empirical": {"L1": empirical_L1, "pairs": 50, "seed": cfg.seed},
        "formulas": dict(_FORMULAS),
    }


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(f"certificate document: {msg}")


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def validate_certificate_document(doc) -> None:
    """Schema check for the analyze output; raises ConfigError on the first
    violation so round-tripped documents are known well-formed."""
    _require(isinstance(doc, dict), "not an object")
    required = {"problem", "admm", "rate", "tau", "constants", "empirical",
                "formulas"}
    missing = required - set(doc)
    _require(not missing, f"missing sections {sorted(missing)}")

    prob = doc["problem"]
    for key in ("n", "m", "N", "s"):
        v = prob.get(key)
        _require(isinstance(v, int) and not isinstance(v, bool) and v >= 1,
                 f"problem.{key} must be a positive int")
    _require(prob["s"] == prob["n"] + prob["N"] * prob["m"],
             "problem.s must equal n + N*m")

    admm = doc["admm"]
    _require(_is_num(admm.get("alpha")) and 0.0 < admm["alpha"] < 2.0,
             "admm.alpha must lie in (0, 2)")
    _require(_is_num(admm.get("rho")) and admm["rho"] > 0.0,
             "admm.rho must be positive")
    _require(_is_num(admm.get("epsilon")) and admm["epsilon"] >= 0.0,
             "admm.epsilon must be >= 0")

    rate = doc["rate"]
    for key in ("p", "L", "kappa", "rho_suggested", "tau_formula", "tau_lmi",
                "kappa_F", "lambda1", "lambda2"):
        _require(_is_num(rate.get(key)), f"rate.{key} must be a number")
    _require(rate["p"] > 0.0 and rate["L"] >= rate["p"], "rate needs 0 < p <= L")
    _require(abs(rate["kappa"] - rate["L"] / rate["p"]) <=
             1e-9 * rate["kappa"], "rate.kappa must equal L/p")
    for key in ("tau_formula", "tau_lmi"):
        _require(0.0 < rate[key] < 1.0, f"rate.{key} must lie in (0, 1)")
    _require(rate["kappa_F"] >= 1.0, "rate.kappa_F must be >= 1")
    amax = rate.get("alpha_max")
    _require(amax is None or (_is_num(amax) and 0.0 < amax < 2.0),
             "rate.alpha_max must be null or in (0, 2)")

    tau = doc["tau"]
    _require(tau.get("choice") in ("lmi", "formula", "explicit"),
             "tau.choice must be lmi|formula|explicit")
    _require(_is_num(tau.get("value")) and 0.0 < tau["value"] < 1.0,
             "tau.value must lie in (0, 1)")

    con = doc["constants"]
    positive = ("delta", "gamma1", "gamma3", "omega1", "c", "d", "r_N",
                "r_e", "e_radius", "B_bar_norm", "F_sqrt_norm",
                "F_inv_sqrt_norm", "kappa_F")
    for key in positive:
        _require(_is_num(con.get(key)) and con[key] > 0.0,
                 f"constants.{key} must be a positive number")
    # These vanish when G = 0 (solution map constant in the state).
    nonneg = ("L1", "omega2", "branch_warmstart", "branch_state",
              "gamma2_at_ell_star")
    for key in nonneg:
        _require(_is_num(con.get(key)) and con[key] >= 0.0,
                 f"constants.{key} must be a number >= 0")
    _require(_is_num(con.get("beta")) and 0.0 <= con["beta"] < 1.0,
             "constants.beta must lie in [0, 1)")
    for key in ("ell_star", "ell_star_variant"):
        v = con.get(key)
        _require(isinstance(v, int) and not isinstance(v, bool) and v >= 1,
                 f"constants.{key} must be a positive int")

    emp = doc["empirical"]
    _require(_is_num(emp.get("L1")) and emp["L1"] >= 0.0,
             "empirical.L1 must be a number >= 0")
    _require(isinstance(emp.get("pairs"), int) and emp["pairs"] >= 1,
             "empirical.pairs must be a positive int")
    _require(isinstance(emp.get("seed"), int), "empirical.seed must be an int")

    formulas = doc["formulas"]
    _require(isinstance(formulas, dict) and formulas, "formulas must be a "
             "non-empty object")
    for key, val in formulas.items():
        _require(isinstance(val, str) and val, f"formulas.{key} must be text")


def _render_report(doc: dict) -> str:
    g = "{:.10g}".format
    prob, admm = doc["problem"], doc["admm"]
    rate, con, tau = doc["rate"], doc["constants"], doc["tau"]
    lines = [
        "stability certificate report",
        "============================",
        "",
        f"problem: n={prob['n']} states, m={prob['m']} inputs, "
        f"horizon N={prob['N']} (decision dim s={prob['s']})",
        f"splitting: alpha={g(admm['alpha'])}, rho={g(admm['rho'])}, "
        f"epsilon={g(admm['epsilon'])}",
        "",
        "conditioning",
        f"  p (strong convexity)   = {g(rate['p'])}",
        f"  L (smoothness)         = {g(rate['L'])}",
        f"  kappa = L/p            = {g(rate['kappa'])}",
        f"  rho_suggested          = {g(rate['rho_suggested'])}",
        "",
        "rates",
        f"  tau_formula            = {g(rate['tau_formula'])}",
        f"  tau_lmi                = {g(rate['tau_lmi'])}",
        f"  tau (choice: {tau['choice']})"
        f"{' ' * max(1, 9 - len(tau['choice']))}= {g(tau['value'])}",
        f"  kappa_F                = {g(rate['kappa_F'])}",
        f"  lmi witnesses          = ({g(rate['lambda1'])}, {g(rate['lambda2'])})",
    ]
    if rate.get("alpha_max") is not None:
        lines.append(f"  alpha_max              = {g(rate['alpha_max'])}")
    lines += [
        "",
        "solution map",
        f"  L1 (closed form)       = {g(con['L1'])}",
        f"  L1 (empirical, {doc['empirical']['pairs']} pairs, "
        f"seed {doc['empirical']['seed']}) = {g(doc['empirical']['L1'])}",
        "",
        "value function and ISS gains",
        f"  delta                  = {g(con['delta'])}",
        f"  beta                   = {g(con['beta'])}",
        f"  gamma1                 = {g(con['gamma1'])}",
        f"  gamma3                 = {g(con['gamma3'])}",
        f"  omega1                 = {g(con['omega1'])}",
        f"  omega2                 = {g(con['omega2'])}",
        "",
        "terminal region and error ball",
        f"  c                      = {g(con['c'])}",
        f"  d                      = {g(con['d'])}",
        f"  r_N                    = {g(con['r_N'])}",
        f"  r_e                    = {g(con['r_e'])}",
        "",
        "iteration budget",
        f"  ell*                   = {con['ell_star']}",
        f"  branch (warm start)    = {g(con['branch_warmstart'])}",
        f"  branch (state)         = {g(con['branch_state'])}",
        f"  ell* (variant)         = {con['ell_star_variant']}",
        f"  gamma2(ell*)           = {g(con['gamma2_at_ell_star'])}",
        "",
    ]
    return "\n".join(lines)


def cmd_analyze(cfg: RunConfig) -> int:
    rate = rate_certificate(cfg.problem, cfg.params.alpha, cfg.params.epsilon)
    const = certificate(cfg.problem, rate, cfg.tau_choice)
    emp = empirical_lipschitz(cfg.problem, n_pairs=50, seed=cfg.seed)
    doc = _certificate_document(cfg, rate, const, emp)
    validate_certificate_document(doc)

    os.makedirs(cfg.out, exist_ok=True)
    written = [os.path.join(cfg.out, "certificate.json"),
               os.path.join(cfg.out, "report.txt")]
    _write_json(written[0], doc)
    _write_text(written[1], _render_report(doc))
    if cfg.plots:
        written += plots.render_gamma2(const, cfg.out, "gamma2")
    for path in written:
        print(path)
    return EXIT_OK


# -- simulate / certify -------------------------------------------------------

def _resolved_constants(cfg: RunConfig):
    rate = rate_certificate(cfg.problem, cfg.params.alpha, cfg.params.epsilon)
    return certificate(cfg.problem, rate, cfg.tau_choice)


def _run_sweep(cfg: RunConfig):
    if not cfg.x0_list:
        raise ConfigError("experiment.x0 must list at least one initial state")
    const = _resolved_constants(cfg)
    table = sweep_ell(cfg.problem, cfg.params, cfg.x0_list, cfg.ell_list,
                      cfg.T, jobs=cfg.jobs, constants=const)
    return const, table


def _cell_stem(idx: int, cfg: RunConfig, cell) -> str:
    i = idx // len(cfg.ell_list)
    return f"traj_x{i:02d}_ell_{cell.ell}"


def _cell_meta(stem: str, cell) -> dict:
    return {
        "x0": [float(v) for v in cell.x0],
        "ell": cell.ell,
        "csv": stem + ".csv",
        "terminal_norm": cell.terminal_norm,
        "sup_input_error": cell.sup_Be,
        "constraint_violations": cell.constraint_violations,
        "aborted": cell.aborted,
        "abort_step": cell.abort_step,
    }


def cmd_simulate(cfg: RunConfig) -> int:
    const, table = _run_sweep(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    cells_meta = []
    for idx, cell in enumerate(table.cells):
        stem = _cell_stem(idx, cfg, cell)
        cell.log.to_csv(os.path.join(cfg.out, stem + ".csv"))
        cells_meta.append(_cell_meta(stem, cell))
        if cfg.plots:
            plots.render_trajectory(cell.log, cfg.out, stem, problem=cfg.problem)
        status = f"aborted at t={cell.abort_step}" if cell.aborted else "ok"
        print(f"{stem}.csv: terminal ||x||={cell.terminal_norm:.3e}, "
              f"sup ||Bbar e||={cell.sup_Be:.3e}, {status}")
    summary = {
        "T": cfg.T,
        "tau": const.tau,
        "ell_star": const.ell_star,
        "cells": cells_meta,
        "table": table.summary(),
    }
    _write_json(os.path.join(cfg.out, "summary.json"), summary)
    if cfg.plots:
        plots.render_sweep(table, cfg.out, "ell")
    print(os.path.join(cfg.out, "summary.json"))
    if any(cell.aborted for cell in table.cells):
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_certify(cfg: RunConfig) -> int:
    const, table = _run_sweep(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    cells_doc = []
    guaranteed_failures = 0
    total_violations = 0
    for idx, cell in enumerate(table.cells):
        rep = certify_trajectory(cell.log, const)
        failed = bool(rep.violations) or cell.aborted
        if rep.guaranteed and failed:
            guaranteed_failures += 1
        total_violations += len(rep.violations)
        cells_doc.append({
            "x0": [float(v) for v in cell.x0],
            "ell": cell.ell,
            "guaranteed_regime": rep.guaranteed,
            "aborted": cell.aborted,
            "checks": rep.checks,
            "violations": [{"t": v.t, "check": v.check,
                            "lhs": v.lhs, "rhs": v.rhs} for v in rep.violations],
        })
    doc = {
        "tau": const.tau,
        "ell_star": const.ell_star,
        "r_N": const.r_N,
        "r_e": const.r_e,
        "cells": cells_doc,
        "total_violations": total_violations,
        "guaranteed_failures": guaranteed_failures,
    }
    path = os.path.join(cfg.out, "certify.json")
    _write_json(path, doc)
    print(path)
    print(f"checks: {sum(c['checks'] for c in cells_doc)}, "
          f"violations: {total_violations}, "
          f"guaranteed failures: {guaranteed_failures}")
    return EXIT_CERTIFICATE if guaranteed_failures else EXIT_OK


# -- lmi ----------------------------------------------------------------------

def cmd_lmi(cfg: RunConfig) -> int:
    spec = spectral_constants(cfg.problem, cfg.params.epsilon)
    rows = []
    for alpha in cfg.lmi_grid:
        try:
            tau = min_certified_rate(alpha, spec.kappa, cfg.params.epsilon)
        except IllPosed:
            tau = None
        rows.append((alpha, tau))
    alpha_max = bisect_alpha(spec.kappa, cfg.params.epsilon)

    os.makedirs(cfg.out, exist_ok=True)
    csv_path = os.path.join(cfg.out, "lmi_frontier.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("alpha,tau_lmi\n")
        for alpha, tau in rows:
            fh.write(f"{alpha:.11e},{'' if tau is None else f'{tau:.11e}'}\n")
    doc = {
        "kappa": spec.kappa,
        "epsilon": cfg.params.epsilon,
        "alpha_max": alpha_max,
        "frontier": [{"alpha": a, "tau_lmi": t} for a, t in rows],
    }
    json_path = os.path.join(cfg.out, "lmi.json")
    _write_json(json_path, doc)
    written = [csv_path, json_path]
    if cfg.plots:
        written += plots.render_frontier(rows, cfg.out, "lmi_frontier")
    for path in written:
        print(path)
    print(f"alpha_max = {alpha_max:.6g}")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subopt-mpc",
        description="Constrained LQ-MPC with a fixed splitting budget and "
                    "closed-loop stability certificates.")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = [
        ("analyze", cmd_analyze,
         "compute the full certificate and write report + JSON"),
        ("simulate", cmd_simulate,
         "run closed-loop sweeps and write CSV/summary/figures"),
        ("certify", cmd_certify,
         "run sweeps and check every trajectory against the certificate"),
        ("lmi", cmd_lmi, "tabulate the certified-rate frontier over alpha"),
    ]
    for name, func, help_text in specs:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", metavar="PATH",
                         help="JSON run configuration")
        cmd.add_argument("--preset", choices=list(PRESET_NAMES),
                         help="bundled problem instance")
        cmd.add_argument("--out", metavar="DIR", help="output directory")
        cmd.add_argument("--jobs", type=int, metavar="K",
                         help="parallel workers for sweeps (default 1)")
        cmd.add_argument("--seed", type=int, metavar="U64",
                         help="RNG seed for sampling checks (default 0)")
        cmd.add_argument("--tau", metavar="CHOICE",
                         help="rate to certify against: formula|lmi|<float> "
                              "(default lmi)")
        cmd.add_argument("--no-plots", action="store_true",
                         help="skip figure rendering")
        cmd.set_defaults(func=func)
    return parser


def _setup_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO,
             "debug": logging.DEBUG}.get(
        os.environ.get("SUBOPT_MPC_LOG", "error").lower(), logging.ERROR)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    _setup_logging()
    try:
        cfg = _load_run_config(args)
        return args.func(cfg)
    except (ConfigError, DimensionMismatch) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        if args.command in ("simulate", "certify"):
            return EXIT_INFEASIBLE
        return EXIT_ILL_POSED
    except SuboptMpcError as exc:
        print(f"ill-posed instance: {exc}", file=sys.stderr)
        return EXIT_ILL_POSED


if __name__ == "__main__":
    sys.exit(main())
