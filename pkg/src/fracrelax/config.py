"""JSON problem files: schema, validation, loading and serialization.

A problem file is a JSON object with the keys below (matrices are nested
row-major lists; operators may also be given flat, row-major)::

    {
      "alpha": 0.5, "beta": 0.25, "horizon": 1.0, "x0": [0.0],
      "operators": {"L": [[1]], "M": [[1]], "E": [[0]]},
      "channels": [[[1]]],
      "dynamics": {"forcing": [0.0], "C": [[0]], "D": [[[1]]],
                   "nonlinearity": {"kind": "zero", "kappa": 0.0}},
      "nonlocal": {"offset": [0.0], "samples": [], "control_time": 0.0, "G": null},
      "costs": [{"P": [[1]], "p": [0.0], "q": {"kind": "zero"}}],
      "constraint": {"atoms": [[-1], [1]], "state_shift": null, "radius": null},
      "solver": {"grid": 4, "n_list": [4, 16, 64, 256], "seed": 0, "tol": 1e-12}
    }

``forcing`` and ``p`` are either one vector (constant in time) or a list of
vectors sampled uniformly on ``[0, horizon]``.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import jsonschema
import numpy as np

from fracrelax.control_geometry import FiniteControlSet
from fracrelax.errors import BoundUnavailableError, PreconditionError, SchemaError
from fracrelax.mild_solver import apriori_bound
from fracrelax.problem import CostSpec, DynamicsSpec, NonlocalSpec, ProblemSpec, Sampled
from fracrelax.sobolev_system import OperatorTriple

__all__ = ["PROBLEM_SCHEMA", "load_problem", "parse_problem", "serialize", "dump_problem", "same_problem"]

log = logging.getLogger(__name__)

_number = {"type": "number"}
_vector = {"type": "array", "items": _number, "minItems": 1}
_matrix = {"type": "array", "items": _vector, "minItems": 1}
_square = {"oneOf": [_matrix, _vector]}
_sampled = {"oneOf": [_vector, _matrix]}

PROBLEM_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["alpha", "horizon", "x0", "operators", "channels", "dynamics", "costs", "constraint"],
    "additionalProperties": False,
    "properties": {
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "beta": {"type": ["number", "null"]},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "x0": _vector,
        "operators": {
            "type": "object",
            "required": ["L", "M", "E"],
            "additionalProperties": False,
            "properties": {
                "L": _square,
                "M": _square,
                "E": _square,
                "m0_horizon": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "channels": {"type": "array", "items": _matrix, "minItems": 1, "maxItems": 3},
        "dynamics": {
            "type": "object",
            "required": ["D"],
            "additionalProperties": False,
            "properties": {
                "forcing": _sampled,
                "C": _matrix,
                "D": {"type": "array", "items": _matrix, "minItems": 1},
                "nonlinearity": {
                    "type": "object",
                    "required": ["kind"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["zero", "sin", "saturation"]},
                        "kappa": {"type": "number", "minimum": 0},
                    },
                },
            },
        },
        "nonlocal": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "offset": _vector,
                "samples": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["time", "H"],
                        "additionalProperties": False,
                        "properties": {"time": _number, "H": _matrix},
                    },
                },
                "control_time": _number,
                "G": {"oneOf": [_matrix, {"type": "null"}]},
            },
        },
        "costs": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["P"],
                "additionalProperties": False,
                "properties": {
                    "P": _matrix,
                    "p": _sampled,
                    "q": {
                        "type": "object",
                        "required": ["kind"],
                        "additionalProperties": False,
                        "properties": {
                            "kind": {"enum": ["zero", "quadratic", "double_well"]},
                            "Q": _matrix,
                            "c": _vector,
                            "d": _number,
                            "w": _number,
                        },
                    },
                },
            },
        },
        "constraint": {
            "type": "object",
            "required": ["atoms"],
            "additionalProperties": False,
            "properties": {
                "atoms": {"type": "array", "items": _vector, "minItems": 1},
                "state_shift": {"oneOf": [_matrix, {"type": "null"}]},
                "radius": {"type": ["number", "null"], "exclusiveMinimum": 0},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "grid": {"type": "integer", "minimum": 2},
                "n_list": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "seed": {"type": "integer"},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "method": {"enum": ["series", "subordination"]},
                "sub": {"type": "integer", "minimum": 1},
                "gap_tol": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(PROBLEM_SCHEMA)


def _field(path) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def _validate(data) -> None:
    errors = sorted(_VALIDATOR.iter_errors(data), key=lambda e: (len(e.path), list(map(str, e.path))))
    if errors:
        e = errors[0]
        raise SchemaError(f"{_field(e.absolute_path)}: {e.message}")


def _square_matrix(X, name: str) -> np.ndarray:
    A = np.asarray(X, dtype=float)
    if A.ndim == 1:
        n = int(round(np.sqrt(A.size)))
        if n * n != A.size:
            raise SchemaError(f"operators.{name}: flat operator of length {A.size} is not square")
        A = A.reshape(n, n)
    return A


def parse_problem(data: dict) -> ProblemSpec:
    """Build a validated problem from a decoded JSON object."""
    _validate(data)
    ops = data["operators"]
    triple = OperatorTriple(
        _square_matrix(ops["L"], "L"),
        _square_matrix(ops["M"], "M"),
        _square_matrix(ops["E"], "E"),
        m0_horizon=float(ops.get("m0_horizon", 50.0)),
    )
    n = triple.n
    horizon = float(data["horizon"])
    dyn = data["dynamics"]
    nonlin = dyn.get("nonlinearity", {"kind": "zero"})
    dynamics = DynamicsSpec(
        Sampled(np.asarray(dyn.get("forcing", [0.0] * n), dtype=float), horizon),
        np.asarray(dyn.get("C", np.zeros((n, n))), dtype=float),
        tuple(np.asarray(D, dtype=float) for D in dyn["D"]),
        nonlin["kind"],
        float(nonlin.get("kappa", 0.0)),
    )
    nl = data.get("nonlocal", {})
    samples = nl.get("samples", [])
    nonlocal_ = NonlocalSpec(
        np.asarray(nl.get("offset", [0.0] * n), dtype=float),
        tuple(s["time"] for s in samples),
        tuple(np.asarray(s["H"], dtype=float) for s in samples),
        float(nl.get("control_time", 0.0)),
        None if nl.get("G") is None else np.asarray(nl["G"], dtype=float),
    )
    costs = []
    for c in data["costs"]:
        q = dict(c.get("q", {"kind": "zero"}))
        kind = q.pop("kind")
        costs.append(
            CostSpec(np.asarray(c["P"], dtype=float), Sampled(np.asarray(c.get("p", [0.0] * n), dtype=float), horizon), kind, q)
        )
    con = data["constraint"]
    shift = con.get("state_shift")
    radius = con.get("radius")
    derive_radius = shift is not None and radius is None
    U = FiniteControlSet(
        np.asarray(con["atoms"], dtype=float),
        None if shift is None else np.asarray(shift, dtype=float),
        1.0 if derive_radius else radius,
    )

    def build(constraint):
        return ProblemSpec(
            data["alpha"], horizon, np.asarray(data["x0"], dtype=float), triple,
            tuple(np.asarray(B, dtype=float) for B in data["channels"]),
            dynamics, nonlocal_, tuple(costs), constraint, data.get("beta"), dict(data.get("solver", {})),
        )

    problem = build(U)
    bound = None
    try:
        bound = apriori_bound(problem)
    except BoundUnavailableError as exc:
        if derive_radius:
            raise
        log.info("a-priori bound unavailable: %s", exc)
    if derive_radius:
        # the bound does not involve the retraction radius, so it can be
        # computed with a placeholder and then installed
        problem = build(U.with_radius(bound.L0))
    consts = problem.constants()
    if bound is not None:
        consts.update(L0=bound.L0, phi=bound.phi)
    log.info("derived constants: %s", ", ".join(f"{k}={v:.6g}" for k, v in consts.items()))
    return problem


def load_problem(path) -> ProblemSpec:
    """Read, validate and build a problem file."""
    path = Path(path)
    if not path.is_file():
        raise PreconditionError(f"problem file {path} does not exist")
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return parse_problem(data)
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def _q_dict(cost: CostSpec) -> dict:
    out = {"kind": cost.q_kind}
    for k, v in cost.q_params.items():
        out[k] = np.asarray(v, dtype=float).tolist() if k in ("Q", "c") else float(v)
    return out


def serialize(problem: ProblemSpec) -> dict:
    """JSON-compatible description that :func:`parse_problem` maps back to ``problem``."""
    tr = problem.triple
    d = problem.dynamics
    nl = problem.nonlocal_
    U = problem.constraint
    return {
        "alpha": problem.alpha,
        "beta": problem.beta,
        "horizon": problem.horizon,
        "x0": problem.x0.tolist(),
        "operators": {"L": tr.L.tolist(), "M": tr.M.tolist(), "E": tr.E.tolist(), "m0_horizon": float(tr.m0_horizon)},
        "channels": [B.tolist() for B in problem.channels],
        "dynamics": {
            "forcing": d.forcing.tolist(),
            "C": d.C.tolist(),
            "D": [D.tolist() for D in d.D],
            "nonlinearity": {"kind": d.nonlinearity, "kappa": float(d.kappa)},
        },
        "nonlocal": {
            "offset": nl.offset.tolist(),
            "samples": [{"time": t, "H": H.tolist()} for t, H in zip(nl.taus, nl.H)],
            "control_time": nl.control_time,
            "G": None if nl.G is None else nl.G.tolist(),
        },
        "costs": [{"P": c.P.tolist(), "p": c.p.tolist(), "q": _q_dict(c)} for c in problem.costs],
        "constraint": {
            "atoms": U.atoms.tolist(),
            "state_shift": None if U.state_shift is None else U.state_shift.tolist(),
            "radius": U.radius,
        },
        "solver": dict(problem.solver),
    }


def dump_problem(problem: ProblemSpec, path) -> None:
    Path(path).write_text(json.dumps(serialize(problem), indent=2) + "\n")


def same_problem(a: ProblemSpec, b: ProblemSpec) -> bool:
    """Structural equality of two problems (all data, not identity)."""
    return serialize(a) == serialize(b)
