"""File formats: model, scenario, problem, demand, and firing files.

JSON is the canonical format; every file carries a ``schema_version``.
Flat matrix problems may embed arrays directly or reference CSV files
(plain comma-separated number grids, resolved relative to the referencing
file).  Parse errors carry the file path and a location: line/column for
syntax errors, a JSON path for schema violations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import jsonschema

from .errors import FileFormatError, ModelValidationError
from .esn import (
    EngineeringSystemNet,
    EsnState,
    FiringSchedule,
    Initiation,
    MODE_DURATION,
    MODE_EXPLICIT,
    MODE_INSTANTANEOUS,
    SimulationOptions,
    WeightOverride,
    explicit_schedule,
    initial_state,
    instantaneous_schedule,
    schedule_from_durations,
)
from .lca import LcaMatrices, matrices_from_arrays
from .model import (
    SystemModel,
    enumerate_capabilities,
    model_to_raw,
    validate_model,
)

SCHEMA_VERSION = 1

_FLOW_SCHEMA = {
    "type": "object",
    "required": ["operand", "quantity"],
    "properties": {
        "operand": {"type": "string"},
        "quantity": {"type": "number", "exclusiveMinimum": 0},
        "unit": {"type": "string"},
    },
    "additionalProperties": False,
}

MODEL_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "operands", "resources", "processes",
                 "allocations"],
    "properties": {
        "schema_version": {"type": "integer"},
        "name": {"type": "string"},
        "operands": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "unit"],
                "properties": {
                    "id": {"type": "string"},
                    "name": {"type": "string"},
                    "unit": {"type": "string"},
                },
                "additionalProperties": False,
            },
        },
        "resources": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "kind"],
                "properties": {
                    "id": {"type": "string"},
                    "name": {"type": "string"},
                    "kind": {"enum": ["transformation", "independent-buffer",
                                      "transportation"]},
                    "location": {"type": "string"},
                },
                "additionalProperties": False,
            },
        },
        "processes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "outputs", "primary_output"],
                "properties": {
                    "id": {"type": "string"},
                    "name": {"type": "string"},
                    "kind": {"enum": ["transformation", "transportation"]},
                    "inputs": {"type": "array", "items": _FLOW_SCHEMA},
                    "outputs": {"type": "array", "minItems": 1,
                                "items": _FLOW_SCHEMA},
                    "primary_output": {"type": "string"},
                },
                "additionalProperties": False,
            },
        },
        "allocations": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["process", "resource"],
                "properties": {
                    "process": {"type": "string"},
                    "resource": {"type": "string"},
                },
                "additionalProperties": False,
            },
        },
        "buffer_overrides": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["process", "operand", "buffer"],
                "properties": {
                    "process": {"type": "string"},
                    "operand": {"type": "string"},
                    "buffer": {"type": "string"},
                    "resource": {"type": "string"},
                    "direction": {"enum": ["input", "output"]},
                },
                "additionalProperties": False,
            },
        },
        "aspects": {"type": "array", "items": {"type": "string"}},
    },
    "additionalProperties": False,
}

_CAPABILITY_KEY = {"type": ["string", "integer"]}

_STEP_FIRING = {
    "anyOf": [
        {"type": "array", "items": {"type": "number", "minimum": 0}},
        {"type": "object", "additionalProperties": {"type": "number",
                                                    "minimum": 0}},
    ]
}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "horizon", "mode"],
    "properties": {
        "schema_version": {"type": "integer"},
        "name": {"type": "string"},
        "horizon": {"type": "integer"},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "mode": {"enum": [MODE_INSTANTANEOUS, MODE_DURATION, MODE_EXPLICIT]},
        "u": {"type": "array", "items": _STEP_FIRING},
        "u_minus": {"type": "array", "items": _STEP_FIRING},
        "u_plus": {"type": "array", "items": _STEP_FIRING},
        "durations": {
            "type": "object",
            "additionalProperties": {"type": "integer", "minimum": 0},
        },
        "initiations": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["k", "capability"],
                "properties": {
                    "k": {"type": "integer", "minimum": 1},
                    "capability": _CAPABILITY_KEY,
                    "amount": {"type": "number", "minimum": 0},
                },
                "additionalProperties": False,
            },
        },
        "weight_overrides": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["capability", "operand", "buffer", "weight"],
                "properties": {
                    "capability": _CAPABILITY_KEY,
                    "operand": {"type": "string"},
                    "buffer": {"type": "string"},
                    "weight": {"type": "number", "minimum": 0},
                    "side": {"enum": ["pull", "inject"]},
                    "steps": {"type": "array",
                              "items": {"type": "integer", "minimum": 1}},
                },
                "additionalProperties": False,
            },
        },
        "initial_marking": {
            "type": "object",
            "additionalProperties": {"type": "number"},
        },
        "in_flight": {
            "type": "object",
            "additionalProperties": {"type": "number", "minimum": 0},
        },
        "options": {
            "type": "object",
            "properties": {
                "enforce_nonnegative": {"type": "boolean"},
                "integer_tokens": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

_MATRIX_OR_CSV = {
    "anyOf": [
        {"type": "array", "items": {"type": "array",
                                    "items": {"type": "number"}}},
        {"type": "object", "required": ["csv"],
         "properties": {"csv": {"type": "string"}},
         "additionalProperties": False},
    ]
}

_VECTOR_OR_CSV_OR_MAP = {
    "anyOf": [
        {"type": "array", "items": {"type": "number"}},
        {"type": "object", "required": ["csv"],
         "properties": {"csv": {"type": "string"}},
         "additionalProperties": False},
        {"type": "object", "additionalProperties": {"type": "number"}},
    ]
}

PROBLEM_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "a"],
    "properties": {
        "schema_version": {"type": "integer"},
        "name": {"type": "string"},
        "a": _MATRIX_OR_CSV,
        "b": _MATRIX_OR_CSV,
        "product_labels": {"type": "array", "items": {"type": "string"}},
        "aspect_labels": {"type": "array", "items": {"type": "string"}},
        "process_labels": {"type": "array", "items": {"type": "string"}},
        "demand": _VECTOR_OR_CSV_OR_MAP,
    },
    "additionalProperties": False,
}

DEMAND_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "demand"],
    "properties": {
        "schema_version": {"type": "integer"},
        "name": {"type": "string"},
        "demand": _VECTOR_OR_CSV_OR_MAP,
    },
    "additionalProperties": False,
}

FIRING_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "firing"],
    "properties": {
        "schema_version": {"type": "integer"},
        "name": {"type": "string"},
        "firing": _VECTOR_OR_CSV_OR_MAP,
    },
    "additionalProperties": False,
}


def _read_json(path: str | Path) -> Any:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError:
        raise
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FileFormatError(
            f"invalid JSON: {exc.msg}",
            path=str(path),
            location=f"line {exc.lineno}, column {exc.colno}",
        ) from exc


def _validate_schema(obj: Any, schema: Mapping[str, Any],
                     path: str | Path) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(obj), key=lambda e: len(e.absolute_path))
    if errors:
        best = jsonschema.exceptions.best_match(errors)
        raise FileFormatError(
            best.message, path=str(path), location=best.json_path,
        )
    version = obj.get("schema_version")
    if version != SCHEMA_VERSION:
        raise FileFormatError(
            f"unknown schema_version {version!r} (this build reads "
            f"version {SCHEMA_VERSION})",
            path=str(path), location="$.schema_version",
        )


def load_model(path: str | Path, *, check_capabilities: bool = True) -> SystemModel:
    """Parse and fully validate a model file.

    Besides referential validation, this expands the capability set once
    (tolerating kind mismatches) so placement and unit errors surface at
    parse time.
    """
    obj = _read_json(path)
    _validate_schema(obj, MODEL_SCHEMA, path)
    try:
        model = validate_model(obj)
        if check_capabilities:
            enumerate_capabilities(model, allow_kind_mismatch=True)
        return model
    except FileFormatError:
        raise
    except ModelValidationError as exc:
        raise FileFormatError(str(exc), path=str(path)) from exc


def serialize_model(model: SystemModel) -> dict[str, Any]:
    return {"schema_version": SCHEMA_VERSION, **model_to_raw(model)}


def _canon_step(value: Any) -> Any:
    # a schedule row is a plain amounts tuple or named (key, amount) pairs
    if isinstance(value, Mapping):
        return tuple((str(k), float(v)) for k, v in value.items())
    return tuple(float(v) for v in value)


def _step_to_json(step: Any) -> Any:
    if step and isinstance(step[0], tuple):
        return {k: v for k, v in step}
    return list(step)


def _canon_key(key: Any) -> str | int:
    return key if isinstance(key, int) else str(key)


def parse_capability_key(key: Any) -> int | str | tuple[str, str]:
    """Turn a file key (index, id, or ``process@resource``) into a resolver key."""
    if isinstance(key, int):
        return key
    text = str(key)
    process, sep, resource = text.partition("@")
    if sep:
        return (process, resource)
    return text


@dataclass(frozen=True)
class ScenarioSpec:
    """Parsed scenario file, structurally canonical for round-tripping."""

    horizon: int
    dt: float = 1.0
    mode: str = MODE_INSTANTANEOUS
    name: str = ""
    u: tuple[Any, ...] = ()
    u_minus: tuple[Any, ...] = ()
    u_plus: tuple[Any, ...] = ()
    durations: tuple[tuple[str | int, int], ...] = ()
    initiations: tuple[Initiation, ...] = ()
    weight_overrides: tuple[WeightOverride, ...] = ()
    initial_marking: tuple[tuple[str, float], ...] = ()
    in_flight: tuple[tuple[str | int, float], ...] = ()
    options: SimulationOptions = SimulationOptions()


def load_scenario(path: str | Path) -> ScenarioSpec:
    """Parse a scenario file; mode-specific requirements are checked here."""
    obj = _read_json(path)
    _validate_schema(obj, SCENARIO_SCHEMA, path)
    try:
        return _scenario_from_raw(obj)
    except ModelValidationError as exc:
        raise FileFormatError(str(exc), path=str(path)) from exc


def _scenario_from_raw(obj: Mapping[str, Any]) -> ScenarioSpec:
    horizon = int(obj["horizon"])
    if horizon < 2:
        raise ModelValidationError(
            f"horizon must allow at least one transition (K >= 2), got K={horizon}"
        )
    mode = obj["mode"]
    if mode == MODE_INSTANTANEOUS and "u" not in obj:
        raise ModelValidationError("instantaneous mode requires 'u'")
    if mode == MODE_EXPLICIT and ("u_minus" not in obj or "u_plus" not in obj):
        raise ModelValidationError("explicit mode requires 'u_minus' and 'u_plus'")
    if mode == MODE_DURATION and "initiations" not in obj:
        raise ModelValidationError("duration mode requires 'initiations'")
    for key, d in obj.get("durations", {}).items():
        if d == 0:
            raise ModelValidationError(
                f"duration 0 for capability '{key}': use the instantaneous "
                "mode for firings that complete in-step"
            )
    raw_options = obj.get("options", {})
    options = SimulationOptions(
        enforce_nonnegative=bool(raw_options.get("enforce_nonnegative", False)),
        integer_tokens=bool(raw_options.get("integer_tokens", False)),
    )
    return ScenarioSpec(
        horizon=horizon,
        dt=float(obj.get("dt", 1.0)),
        mode=mode,
        name=str(obj.get("name", "")),
        u=tuple(_canon_step(s) for s in obj.get("u", ())),
        u_minus=tuple(_canon_step(s) for s in obj.get("u_minus", ())),
        u_plus=tuple(_canon_step(s) for s in obj.get("u_plus", ())),
        durations=tuple(
            (_canon_key(k), int(d)) for k, d in obj.get("durations", {}).items()
        ),
        initiations=tuple(
            Initiation(
                k=int(e["k"]),
                capability=_canon_key(e["capability"]),
                amount=float(e.get("amount", 1.0)),
            )
            for e in obj.get("initiations", ())
        ),
        weight_overrides=tuple(
            WeightOverride(
                capability=_canon_key(o["capability"]),
                operand=str(o["operand"]),
                buffer=str(o["buffer"]),
                weight=float(o["weight"]),
                side=o.get("side", "inject"),
                steps=tuple(int(s) for s in o.get("steps", ())),
            )
            for o in obj.get("weight_overrides", ())
        ),
        initial_marking=tuple(
            (str(k), float(v)) for k, v in obj.get("initial_marking", {}).items()
        ),
        in_flight=tuple(
            (_canon_key(k), float(v)) for k, v in obj.get("in_flight", {}).items()
        ),
        options=options,
    )


def serialize_scenario(spec: ScenarioSpec) -> dict[str, Any]:
    obj: dict[str, Any] = {"schema_version": SCHEMA_VERSION}
    if spec.name:
        obj["name"] = spec.name
    obj["horizon"] = spec.horizon
    obj["dt"] = spec.dt
    obj["mode"] = spec.mode
    if spec.u:
        obj["u"] = [_step_to_json(s) for s in spec.u]
    if spec.u_minus:
        obj["u_minus"] = [_step_to_json(s) for s in spec.u_minus]
    if spec.u_plus:
        obj["u_plus"] = [_step_to_json(s) for s in spec.u_plus]
    if spec.durations:
        obj["durations"] = {str(k): d for k, d in spec.durations}
    if spec.initiations:
        obj["initiations"] = [
            {"k": e.k, "capability": e.capability, "amount": e.amount}
            for e in spec.initiations
        ]
    if spec.weight_overrides:
        obj["weight_overrides"] = [
            {
                "capability": o.capability,
                "operand": o.operand,
                "buffer": o.buffer,
                "weight": o.weight,
                "side": o.side,
                **({"steps": list(o.steps)} if o.steps else {}),
            }
            for o in spec.weight_overrides
        ]
    if spec.initial_marking:
        obj["initial_marking"] = {k: v for k, v in spec.initial_marking}
    if spec.in_flight:
        obj["in_flight"] = {str(k): v for k, v in spec.in_flight}
    if spec.options != SimulationOptions():
        entry: dict[str, Any] = {}
        if spec.options.enforce_nonnegative:
            entry["enforce_nonnegative"] = True
        if spec.options.integer_tokens:
            entry["integer_tokens"] = True
        obj["options"] = entry
    return obj


@dataclass(frozen=True)
class RealizedScenario:
    """A scenario bound to a concrete net, ready to simulate."""

    state: EsnState
    schedule: FiringSchedule
    overrides: tuple[WeightOverride, ...]
    options: SimulationOptions


def _resolve_steps(net: EngineeringSystemNet, steps: Sequence[Any],
                   horizon: int, what: str) -> np.ndarray:
    if len(steps) != horizon - 1:
        raise ModelValidationError(
            f"{what} defines {len(steps)} step(s) but horizon K={horizon} "
            f"needs {horizon - 1}"
        )
    rows = []
    for step in steps:
        if step and isinstance(step[0], tuple):
            mapping = {parse_capability_key(k): v for k, v in step}
            vector = np.zeros(net.n_transitions)
            for key, value in mapping.items():
                vector[net.capabilities.resolve(key).index] += value
            rows.append(vector)
        else:
            vector = np.asarray(step, dtype=float)
            if vector.shape != (net.n_transitions,):
                raise ModelValidationError(
                    f"{what} rows must have {net.n_transitions} entries, "
                    f"got {vector.shape}"
                )
            rows.append(vector)
    return np.stack(rows) if rows else np.zeros((0, net.n_transitions))


def realize_scenario(spec: ScenarioSpec,
                     net: EngineeringSystemNet) -> RealizedScenario:
    """Bind a parsed scenario to a net: initial state, schedule, overrides."""
    marking = {k: v for k, v in spec.initial_marking}
    in_flight = {parse_capability_key(k): v for k, v in spec.in_flight}
    state = initial_state(net, dt=spec.dt, marking=marking, in_flight=in_flight)

    if spec.mode == MODE_INSTANTANEOUS:
        schedule = instantaneous_schedule(
            _resolve_steps(net, spec.u, spec.horizon, "'u'")
        )
    elif spec.mode == MODE_EXPLICIT:
        schedule = explicit_schedule(
            _resolve_steps(net, spec.u_minus, spec.horizon, "'u_minus'"),
            _resolve_steps(net, spec.u_plus, spec.horizon, "'u_plus'"),
        )
    else:
        schedule = schedule_from_durations(
            net.capabilities,
            {parse_capability_key(k): d for k, d in spec.durations},
            spec.initiations,
            spec.horizon,
        )

    overrides = tuple(
        replace(o, capability=parse_capability_key(o.capability))
        for o in spec.weight_overrides
    )
    return RealizedScenario(
        state=state, schedule=schedule, overrides=overrides,
        options=spec.options,
    )


def _load_csv_matrix(path: Path) -> np.ndarray:
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except OSError:
        raise
    except ValueError as exc:
        raise FileFormatError(
            f"cannot parse CSV numbers: {exc}", path=str(path)
        ) from exc
    return data


def _matrix_from(value: Any, base: Path, path: str | Path) -> np.ndarray:
    if isinstance(value, Mapping):
        return _load_csv_matrix(base / value["csv"])
    return np.asarray(value, dtype=float)


def _vector_from(value: Any, base: Path, path: str | Path,
                 ) -> np.ndarray | dict[str, float]:
    if isinstance(value, Mapping):
        if set(value.keys()) == {"csv"} and isinstance(value["csv"], str):
            return _load_csv_matrix(base / value["csv"]).ravel()
        return {str(k): float(v) for k, v in value.items()}
    return np.asarray(value, dtype=float)


def load_problem(path: str | Path,
                 ) -> tuple[LcaMatrices, "np.ndarray | dict[str, float] | None"]:
    """Parse a flat matrix problem; returns matrices and optional demand."""
    obj = _read_json(path)
    _validate_schema(obj, PROBLEM_SCHEMA, path)
    base = Path(path).parent
    try:
        matrices = matrices_from_arrays(
            _matrix_from(obj["a"], base, path),
            _matrix_from(obj["b"], base, path) if "b" in obj else None,
            product_labels=obj.get("product_labels"),
            aspect_labels=obj.get("aspect_labels"),
            column_ids=obj.get("process_labels"),
        )
    except FileFormatError:
        raise
    except ModelValidationError as exc:
        raise FileFormatError(str(exc), path=str(path)) from exc
    demand = None
    if "demand" in obj:
        demand = _vector_from(obj["demand"], base, path)
    return matrices, demand


def load_demand(path: str | Path) -> "np.ndarray | dict[str, float]":
    """Parse a demand file: JSON mapping/vector, or a bare CSV vector."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return _load_csv_matrix(path).ravel()
    obj = _read_json(path)
    _validate_schema(obj, DEMAND_SCHEMA, path)
    return _vector_from(obj["demand"], path.parent, path)


def load_firing(path: str | Path) -> "np.ndarray | dict[str, float]":
    """Parse a firing-vector file for decomposition runs."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return _load_csv_matrix(path).ravel()
    obj = _read_json(path)
    _validate_schema(obj, FIRING_SCHEMA, path)
    return _vector_from(obj["firing"], path.parent, path)


def write_json(obj: Any, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")
