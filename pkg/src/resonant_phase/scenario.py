"""Scenario files: JSON objects describing one loop computation."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import InvalidSpecError
from .geometry import Circle3D, LoopSpec, Parametric, PolyPath, StaticPoint, default_min_dist
from .holonomy import DEFAULT_QUAD_RTOL, Method
from .spectral import DEFAULT_DEGENERACY_TOL

DEFAULT_N = 1024

METHOD_ALIASES = {
    "discrete": Method.DISCRETE_WILSON,
    "discretewilson": Method.DISCRETE_WILSON,
    "line": Method.LINE_QUADRATURE,
    "linequadrature": Method.LINE_QUADRATURE,
    "spherical": Method.SPHERICAL_QUADRATURE,
    "sphericalquadrature": Method.SPHERICAL_QUADRATURE,
    "delta_gamma": Method.DELTA_GAMMA_PATH,
    "deltagamma": Method.DELTA_GAMMA_PATH,
    "deltagammapath": Method.DELTA_GAMMA_PATH,
}

SCENARIO_FIELDS = {"name", "gamma", "E_offset", "loop", "N", "states", "methods", "dynamics", "tolerances"}


@dataclass(frozen=True)
class Tolerances:
    degeneracy_tol: float = DEFAULT_DEGENERACY_TOL
    quad_rtol: float = DEFAULT_QUAD_RTOL
    min_dist: Optional[float] = None  # None: 1e-3 |Gamma|


@dataclass(frozen=True)
class DynamicsConfig:
    T: float
    steps: Optional[int] = None
    hbar: float = 1.0


@dataclass(frozen=True)
class Scenario:
    name: str
    gamma: np.ndarray
    E_offset: complex
    loop: dict
    N: int
    states: tuple
    methods: tuple
    dynamics: Optional[DynamicsConfig]
    tolerances: Tolerances

    @property
    def min_dist(self) -> float:
        if self.tolerances.min_dist is not None:
            return self.tolerances.min_dist
        return default_min_dist(self.gamma)

    def loop_spec(self) -> LoopSpec:
        return build_loop(self.loop, self.gamma, self.E_offset)

    def with_changes(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def resolved(self) -> dict:
        """Full configuration with defaults filled in, for echoing in reports."""
        return {
            "name": self.name,
            "gamma": self.gamma.tolist(),
            "E_offset": [self.E_offset.real, self.E_offset.imag],
            "loop": _resolved_loop(self.loop),
            "N": self.N,
            "states": list(self.states),
            "methods": [m.value for m in self.methods],
            "dynamics": None if self.dynamics is None else {
                "T": self.dynamics.T, "steps": self.dynamics.steps, "hbar": self.dynamics.hbar,
            },
            "tolerances": {
                "degeneracy_tol": self.tolerances.degeneracy_tol,
                "quad_rtol": self.tolerances.quad_rtol,
                "min_dist": self.min_dist,
            },
        }


def _resolved_loop(loop: dict) -> dict:
    out = dict(loop)
    if out.get("kind") == "Circle3D":
        out.setdefault("normal", [0.0, 0.0, 1.0])
        out.setdefault("phase0", 0.0)
        out.setdefault("turns", 1)
    return out


def _vector(value, what):
    try:
        arr = np.asarray(value, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise InvalidSpecError(f"{what} must be a list of 3 numbers") from None
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise InvalidSpecError(f"{what} must be a list of 3 finite numbers")
    return arr


def _complex(value, what):
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, list) and len(value) == 2 and all(isinstance(v, (int, float)) for v in value):
        return complex(value[0], value[1])
    raise InvalidSpecError(f"{what} must be a number or a [re, im] pair")


def _positive(value, what, integer=False):
    ok = isinstance(value, int) if integer else isinstance(value, (int, float))
    if isinstance(value, bool) or not ok or not value > 0 or not np.isfinite(value):
        raise InvalidSpecError(f"{what} must be a positive {'integer' if integer else 'number'}")
    return value


def build_loop(loop: dict, gamma, E_offset=0.0) -> LoopSpec:
    """Construct a :class:`LoopSpec` from its JSON description."""
    if not isinstance(loop, dict) or "kind" not in loop:
        raise InvalidSpecError("loop must be an object with a 'kind' field")
    kind = loop["kind"]
    try:
        if kind == "Circle3D":
            return Circle3D(loop["center"], loop["radius"], loop.get("normal", [0, 0, 1]), gamma,
                            E_offset, loop.get("phase0", 0.0), loop.get("turns", 1))
        if kind == "PolyPath":
            return PolyPath(loop["vertices"], gamma, E_offset)
        if kind == "Parametric":
            return Parametric(loop["table"], gamma, E_offset)
        if kind == "StaticPoint":
            return StaticPoint(loop["R"], gamma, E_offset)
    except KeyError as exc:
        raise InvalidSpecError(f"loop of kind {kind} is missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidSpecError):
            raise
        raise InvalidSpecError(f"malformed {kind} loop: {exc}") from None
    raise InvalidSpecError(f"unknown loop kind {kind!r} (Circle3D, PolyPath, Parametric, StaticPoint)")


def parse_methods(names) -> tuple:
    if not isinstance(names, list) or not names:
        raise InvalidSpecError("methods must be a non-empty list")
    out = []
    for name in names:
        key = str(name).replace("-", "_").lower()
        method = METHOD_ALIASES.get(key) or METHOD_ALIASES.get(key.replace("_", ""))
        if method is None:
            raise InvalidSpecError(
                f"unknown method {name!r}; use DiscreteWilson, LineQuadrature, "
                "SphericalQuadrature or DeltaGammaPath (surface integrals run via 'chern')"
            )
        if method not in out:
            out.append(method)
    return tuple(out)


def scenario_from_dict(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise InvalidSpecError("scenario must be a JSON object")
    unknown = set(data) - SCENARIO_FIELDS
    if unknown:
        raise InvalidSpecError(f"unknown scenario field(s): {', '.join(sorted(unknown))}")
    for required in ("gamma", "loop", "methods"):
        if required not in data:
            raise InvalidSpecError(f"scenario is missing '{required}'")
    gamma = _vector(data["gamma"], "gamma")
    E = _complex(data.get("E_offset", 0.0), "E_offset")
    N = _positive(data.get("N", DEFAULT_N), "N", integer=True)
    states = data.get("states", [1, 2])
    if not isinstance(states, list) or not states or any(s not in (1, 2) or isinstance(s, bool) for s in states):
        raise InvalidSpecError("states must be a non-empty list drawn from {1, 2}")
    methods = parse_methods(data["methods"])

    dyn = data.get("dynamics")
    dynamics = None
    if dyn is not None:
        if not isinstance(dyn, dict) or "T" not in dyn:
            raise InvalidSpecError("dynamics must be an object with at least 'T'")
        steps = dyn.get("steps")
        if steps is not None:
            if isinstance(steps, float) and steps.is_integer():
                steps = int(steps)
            steps = _positive(steps, "dynamics.steps", integer=True)
        dynamics = DynamicsConfig(float(_positive(dyn["T"], "dynamics.T")), steps,
                                  float(_positive(dyn.get("hbar", 1.0), "dynamics.hbar")))

    tol = data.get("tolerances", {}) or {}
    if not isinstance(tol, dict) or set(tol) - {"degeneracy_tol", "quad_rtol", "min_dist"}:
        raise InvalidSpecError("tolerances accepts degeneracy_tol, quad_rtol and min_dist")
    tolerances = Tolerances(
        float(_positive(tol.get("degeneracy_tol", DEFAULT_DEGENERACY_TOL), "degeneracy_tol")),
        float(_positive(tol.get("quad_rtol", DEFAULT_QUAD_RTOL), "quad_rtol")),
        None if tol.get("min_dist") is None else float(_positive(tol["min_dist"], "min_dist")),
    )
    scenario = Scenario(str(data.get("name", "scenario")), gamma, E, data["loop"], N,
                        tuple(dict.fromkeys(states)), methods, dynamics, tolerances)
    scenario.loop_spec()  # validate the loop eagerly
    return scenario


def load_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidSpecError(f"cannot read scenario file {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidSpecError(f"scenario file {path} is not valid JSON: {exc}") from None
    return scenario_from_dict(data)
