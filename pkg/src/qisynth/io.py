"""JSON problem files, controllers and reports.

A problem file is a single self-describing JSON object::

    {
      "N": 3,
      "plant": {"A": [[...]], "B": [[...]], "C": [[...]], "D": [[...]], "H": [[...]]},
      "x0": [...],
      "info": {"kind": "custom", "blocks": {"0,0": [[0, 0, 0], [1, 0, 0]], ...}},
      "constraints": {"U": ..., "V": ..., "b": ..., "R": ..., "z": ..., "Aw": ..., "bw": ...},
      "cost": {"Qx": [[...]], "Ru": [[...]], "Qf": [[...]]},
      "options": {"tol": 1e-9, "delta_mode": "numeric"}
    }

``D`` defaults to the identity, ``H`` to zero and ``x0`` to zero.
``constraints`` and ``cost`` are only needed for synthesis and simulation.
Information-structure kinds and their payloads:

* ``constant``: ``"S"``
* ``fixed_delay``: ``"delays"``, an ``m x p`` matrix; ``"inf"`` means never
* ``time_varying_delay``: ``"delays"``, a list of ``N`` such matrices (one per time)
* ``comm``: ``"S"`` and ``"Z"``
* ``custom``: ``"blocks"`` keyed ``"k,j"``
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .binmat import DEFAULT_TOL, BinaryMatrix
from .infostruct import (InformationStructure, comm_propagation_structure, constant_structure,
                         custom_structure, delay_from_json, delay_to_json, fixed_delay_structure,
                         time_varying_delay_structure)
from .lifted import ConstraintSpec, Plant
from .policy import DisturbanceFeedbackPolicy, OutputFeedbackController
from .robust import CostSpec


class ProblemFileError(ValueError):
    """Malformed or inconsistent problem file; the message names the offending path."""


_num = {"type": "number"}
_vec = {"type": "array", "items": _num}
_mat = {"type": "array", "items": _vec}
_bin = {"type": "array", "items": {"type": "array", "items": {"enum": [0, 1]}}}
_delay = {"anyOf": [{"type": "integer", "minimum": 0},
                    {"type": "number", "minimum": 0},
                    {"type": "string", "enum": ["inf", "Infinity", "infinity"]}]}
_delay_mat = {"type": "array", "items": {"type": "array", "items": _delay}}

INFO_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["constant", "fixed_delay", "time_varying_delay", "comm", "custom"]},
        "N": {"type": "integer", "minimum": 1},
        "m": {"type": "integer", "minimum": 0},
        "p": {"type": "integer", "minimum": 0},
        "S": _bin,
        "Z": _bin,
        "delays": {"anyOf": [_delay_mat, {"type": "array", "items": _delay_mat}]},
        "blocks": {"type": "object",
                   "patternProperties": {r"^\s*\d+\s*,\s*\d+\s*$": _bin},
                   "additionalProperties": False},
    },
    "allOf": [
        {"if": {"properties": {"kind": {"const": "constant"}}}, "then": {"required": ["S"]}},
        {"if": {"properties": {"kind": {"const": "comm"}}}, "then": {"required": ["S", "Z"]}},
        {"if": {"properties": {"kind": {"const": "fixed_delay"}}},
         "then": {"required": ["delays"], "properties": {"delays": _delay_mat}}},
        {"if": {"properties": {"kind": {"const": "time_varying_delay"}}},
         "then": {"required": ["delays"],
                  "properties": {"delays": {"type": "array", "items": _delay_mat}}}},
        {"if": {"properties": {"kind": {"const": "custom"}}}, "then": {"required": ["blocks"]}},
    ],
}

PROBLEM_SCHEMA = {
    "type": "object",
    "required": ["N", "plant", "info"],
    "properties": {
        "N": {"type": "integer", "minimum": 1},
        "plant": {
            "type": "object",
            "required": ["A", "B", "C"],
            "properties": {k: _mat for k in "ABCDH"},
            "additionalProperties": False,
        },
        "x0": _vec,
        "info": INFO_SCHEMA,
        "constraints": {
            "type": "object",
            "required": ["Aw", "bw"],
            "properties": {"U": _mat, "V": _mat, "b": _vec, "R": _mat, "z": _vec,
                           "Aw": _mat, "bw": _vec},
            "additionalProperties": False,
        },
        "cost": {
            "type": "object",
            "properties": {
                "Qx": {"anyOf": [_mat, {"type": "array", "items": _mat}]},
                "Ru": {"anyOf": [_mat, {"type": "array", "items": _mat}]},
                "Qf": _mat,
            },
            "additionalProperties": False,
        },
        "options": {
            "type": "object",
            "properties": {"tol": {"type": "number", "minimum": 0},
                           "delta_mode": {"enum": ["numeric", "structural"]}},
        },
        "name": {"type": "string"},
        "description": {"type": "string"},
    },
    "additionalProperties": False,
}


@dataclass(frozen=True, eq=False)
class ProblemFile:
    N: int
    plant: Plant
    x0: np.ndarray
    info: InformationStructure
    constraints: ConstraintSpec | None
    cost: CostSpec
    tol: float = DEFAULT_TOL
    delta_mode: str = "numeric"
    name: str | None = None


def _path(err: jsonschema.ValidationError) -> str:
    return err.json_path if hasattr(err, "json_path") else "$" + "".join(f"[{p!r}]" for p in err.path)


def _validate(obj, schema) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(obj), key=lambda e: list(map(str, e.path)))
    if errors:
        msgs = "; ".join(f"{_path(e)}: {e.message}" for e in errors[:5])
        raise ProblemFileError(f"schema violation: {msgs}")


def _parse_key(key: str) -> tuple[int, int]:
    k, j = (int(x) for x in key.split(","))
    return k, j


def info_from_json(obj: dict, N: int | None = None, m: int | None = None,
                   p: int | None = None) -> InformationStructure:
    _validate(obj, INFO_SCHEMA)
    N = obj.get("N", N)
    for name, given in (("N", N), ("m", m), ("p", p)):
        if name in obj and given is not None and obj[name] != given:
            raise ProblemFileError(f"$.info.{name}: {obj[name]} disagrees with {given}")
    if N is None:
        raise ProblemFileError("$.info: horizon N is required")
    kind = obj["kind"]
    if kind == "constant":
        info = constant_structure(BinaryMatrix(obj["S"]), N)
    elif kind == "fixed_delay":
        info = fixed_delay_structure(delay_from_json(obj["delays"]), N)
    elif kind == "time_varying_delay":
        info = time_varying_delay_structure(delay_from_json(obj["delays"]), N)
    elif kind == "comm":
        info = comm_propagation_structure(BinaryMatrix(obj["S"]), BinaryMatrix(obj["Z"]), N)
    else:
        m = obj.get("m", m)
        p = obj.get("p", p)
        raw = obj["blocks"]
        if m is None or p is None:
            if not raw:
                raise ProblemFileError("$.info.blocks: cannot infer block size from an empty map")
            m, p = np.shape(next(iter(raw.values())))
        try:
            blocks = {_parse_key(key): BinaryMatrix(np.array(val, dtype=bool).reshape(m, p))
                      for key, val in raw.items()}
        except ValueError as exc:
            raise ProblemFileError(f"$.info.blocks: every block must be {m}x{p}") from exc
        info = custom_structure(blocks, N, m, p)
    if m is not None and p is not None and (info.m, info.p) != (m, p):
        raise ProblemFileError(f"$.info: blocks are {info.m}x{info.p}, plant needs {m}x{p}")
    return info


def info_to_json(info: InformationStructure) -> dict:
    out = {"N": info.N, "m": info.m, "p": info.p, "kind": info.kind}
    if info.kind == "constant":
        out["S"] = info.params["S"].to_list()
    elif info.kind == "comm":
        out["S"] = info.params["S"].to_list()
        out["Z"] = info.params["Z"].to_list()
    elif info.kind in ("fixed_delay", "time_varying_delay"):
        out["delays"] = delay_to_json(info.params["delays"])
    else:
        out["blocks"] = {f"{k},{j}": info[k, j].to_list() for k, j in info.keys()}
    return out


def _weights(val, count: int, dim: int, default, name: str) -> list:
    if val is None:
        return [np.asarray(default, dtype=float)] * count
    arr = np.asarray(val, dtype=float)
    if arr.ndim == 2:
        return [arr] * count
    if arr.ndim == 3 and arr.shape[0] == count:
        return list(arr)
    raise ProblemFileError(f"$.cost.{name}: expected one {dim}x{dim} matrix or {count} of them")


def problem_from_dict(obj: dict) -> ProblemFile:
    _validate(obj, PROBLEM_SCHEMA)
    N = obj["N"]
    pl = obj["plant"]
    try:
        plant = Plant(*(np.array(pl[k], dtype=float) if k in pl else None for k in "ABCDH"))
    except ValueError as exc:
        raise ProblemFileError(f"$.plant: {exc}") from exc
    n, m, p = plant.n, plant.m, plant.p
    x0 = np.asarray(obj.get("x0", np.zeros(n)), dtype=float)
    if x0.shape != (n,):
        raise ProblemFileError(f"$.x0: expected {n} entries, got {x0.size}")
    try:
        info = info_from_json(obj["info"], N, m, p)
    except ProblemFileError:
        raise
    except ValueError as exc:
        raise ProblemFileError(f"$.info: {exc}") from exc

    spec = None
    if "constraints" in obj:
        c = obj["constraints"]
        try:
            spec = ConstraintSpec(
                U=np.asarray(c.get("U", []), dtype=float).reshape(-1, n),
                V=np.asarray(c.get("V", []), dtype=float).reshape(-1, m),
                b=c.get("b", []),
                R=np.asarray(c.get("R", []), dtype=float).reshape(-1, n),
                z=c.get("z", []),
                Aw=c["Aw"], bw=c["bw"])
            spec.check_dims(n, m)
        except ValueError as exc:
            raise ProblemFileError(f"$.constraints: {exc}") from exc

    cst = obj.get("cost", {})
    Qx = _weights(cst.get("Qx"), N, n, np.eye(n), "Qx")
    Qf = np.asarray(cst["Qf"], dtype=float) if "Qf" in cst else None
    if Qf is None:
        raw = cst.get("Qx")
        Qf = Qx[-1] if raw is None or np.asarray(raw).ndim == 2 else None
    if Qf is None:
        Qx_all = _weights(cst.get("Qx"), N + 1, n, np.eye(n), "Qx")
    else:
        Qx_all = Qx + [Qf]
    Ru = _weights(cst.get("Ru"), N, m, np.eye(m), "Ru")
    try:
        cost = CostSpec(Qx_all, Ru)
        cost.check(N, n, m)
    except ValueError as exc:
        raise ProblemFileError(f"$.cost: {exc}") from exc

    opts = obj.get("options", {})
    return ProblemFile(N=N, plant=plant, x0=x0, info=info, constraints=spec, cost=cost,
                       tol=float(opts.get("tol", DEFAULT_TOL)),
                       delta_mode=opts.get("delta_mode", "numeric"),
                       name=obj.get("name"))


def load_json(path) -> dict:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
                               f"{exc.msg}") from exc


def load_problem(path) -> ProblemFile:
    return problem_from_dict(load_json(path))


# -- controllers --------------------------------------------------------------

def _blocks(M: np.ndarray, N: int, m: int, p: int) -> dict:
    return {f"{k},{j}": M[k * m:(k + 1) * m, j * p:(j + 1) * p].tolist()
            for k in range(N) for j in range(k + 1)}


def _unblock(blocks: dict, N: int, m: int, p: int) -> np.ndarray:
    M = np.zeros((m * (N + 1), p * (N + 1)))
    for key, val in blocks.items():
        k, j = _parse_key(key)
        if not (0 <= j <= k < N):
            raise ProblemFileError(f"block {key!r} is outside the causal range")
        M[k * m:(k + 1) * m, j * p:(j + 1) * p] = np.asarray(val, dtype=float).reshape(m, p)
    return M


def controller_to_dict(ctrl: OutputFeedbackController,
                       policy: DisturbanceFeedbackPolicy | None = None) -> dict:
    """Block-indexed JSON form.

    Floats are written with Python's shortest round-trip representation (at
    most 17 significant digits), so loading returns bit-identical values.
    """
    N, m, p = ctrl.N, ctrl.m, ctrl.p
    out = {"N": N, "m": m, "p": p,
           "L": _blocks(ctrl.L, N, m, p),
           "g": ctrl.g[:N * m].reshape(N, m).tolist()}
    if policy is not None:
        out["Q"] = _blocks(policy.Q, N, m, p)
        out["v"] = policy.v[:N * m].reshape(N, m).tolist()
    return out


def controller_from_dict(obj: dict) -> OutputFeedbackController:
    try:
        N, m, p = int(obj["N"]), int(obj["m"]), int(obj["p"])
        L = _unblock(obj["L"], N, m, p)
        g = np.zeros(m * (N + 1))
        g[:N * m] = np.asarray(obj["g"], dtype=float).reshape(-1)
    except (KeyError, TypeError, ValueError) as exc:
        raise ProblemFileError(f"controller file: {exc}") from exc
    return OutputFeedbackController(L, g, N, m, p)


def policy_from_dict(obj: dict) -> DisturbanceFeedbackPolicy:
    N, m, p = int(obj["N"]), int(obj["m"]), int(obj["p"])
    v = np.zeros(m * (N + 1))
    v[:N * m] = np.asarray(obj["v"], dtype=float).reshape(-1)
    return DisturbanceFeedbackPolicy(_unblock(obj["Q"], N, m, p), v, N, m, p)


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=True)
