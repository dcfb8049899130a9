"""Session-wide fixtures: the bundled instances, their certificates, and a
sampler for states whose horizon problem is feasible."""

import numpy as np
import pytest

from subopt_mpc import (Infeasible, InfeasibleParameter, certificate,
                        preset_params, preset_problem, project,
                        rate_certificate, stack_constraints)


@pytest.fixture(scope="session")
def problem():
    return preset_problem("double-integrator")


@pytest.fixture(scope="session")
def problem_b05():
    return preset_problem("double-integrator-b05")


@pytest.fixture(scope="session")
def params():
    return preset_params(ell=30)


@pytest.fixture(scope="session")
def rate(problem):
    return rate_certificate(problem)


@pytest.fixture(scope="session")
def constants(problem, rate):
    return certificate(problem, rate)


@pytest.fixture(scope="session")
def rate_b05(problem_b05):
    return rate_certificate(problem_b05)


@pytest.fixture(scope="session")
def constants_b05(problem_b05, rate_b05):
    return certificate(problem_b05, rate_b05)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


def _draw_feasible_states(problem, rng, count, scale=0.6):
    """Uniform draws over a shrunken state box, kept only when the horizon
    problem at the state is nonempty (checked by projecting the origin)."""
    box = scale * np.min(problem.X.d / np.linalg.norm(problem.X.C, axis=1))
    out = []
    while len(out) < count:
        x = rng.uniform(-box, box, problem.n)
        try:
            project(np.zeros(problem.s), stack_constraints(problem, x))
        except (Infeasible, InfeasibleParameter):
            continue
        out.append(x)
    return out


@pytest.fixture()
def draw_feasible(problem):
    sampler_rng = np.random.default_rng(1234)

    def draw(count, scale=0.6):
        return _draw_feasible_states(problem, sampler_rng, count, scale)

    return draw
