"""Bundled problem instances.

Both presets are the planar double integrator with box constraints
X = [-5, 5]^2, U = [-0.5, 0.5], stage cost Q = I, R = 10, horizon N = 3.
They differ in the input map: `double-integrator` drives only the velocity
state (B = [0; 1]); `double-integrator-b05` also feeds half an input unit
directly into position (B = [0.5; 1]).
"""

from __future__ import annotations

import copy

from .admm import AdmmParams
from .errors import ConfigError
from .model import CondensedProblem, load_problem

__all__ = ["PRESET_NAMES", "preset_document", "preset_problem", "preset_params"]

_BOX2 = {"C": [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]],
         "d": [5.0, 5.0, 5.0, 5.0]}
_BOX1 = {"C": [[1.0], [-1.0]], "d": [0.5, 0.5]}

_PRESETS = {
    "double-integrator": {
        "A": [[1.0, 1.0], [0.0, 1.0]],
        "B": [[0.0], [1.0]],
        "Q": [[1.0, 0.0], [0.0, 1.0]],
        "R": [[10.0]],
        "N": 3,
        "X": _BOX2,
        "U": _BOX1,
    },
    "double-integrator-b05": {
        "A": [[1.0, 1.0], [0.0, 1.0]],
        "B": [[0.5], [1.0]],
        "Q": [[1.0, 0.0], [0.0, 1.0]],
        "R": [[10.0]],
        "N": 3,
        "X": _BOX2,
        "U": _BOX1,
    },
}

PRESET_NAMES = tuple(_PRESETS)


def preset_document(name: str) -> dict:
    """The JSON-style problem document of a bundled preset."""
    if name not in _PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {PRESET_NAMES}")
    return copy.deepcopy(_PRESETS[name])


def preset_problem(name: str) -> CondensedProblem:
    return load_problem(preset_document(name))


def preset_params(ell: int = 30) -> AdmmParams:
    """Default solver parameters used with the presets."""
    return AdmmParams(alpha=1.95, rho=50.0, epsilon=0.0, ell=ell)
