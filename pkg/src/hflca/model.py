"""Engineering-system meta-model: operands, processes, resources, capabilities.

A system description names the operands that flow, the processes that
transform or transport them, and the resources that execute those
processes.  Resources able to hold operands (transformation resources and
independent buffers) double as storage locations; expanding the
process-to-resource allocation list turns each (process, resource) pair
into a capability whose pulls and injects are placed at concrete buffers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Iterable, Mapping

from .errors import ModelValidationError

logger = logging.getLogger(__name__)


class ProcessKind(str, Enum):
    TRANSFORMATION = "transformation"
    TRANSPORTATION = "transportation"


class ResourceKind(str, Enum):
    TRANSFORMATION = "transformation"
    INDEPENDENT_BUFFER = "independent-buffer"
    TRANSPORTATION = "transportation"


#: Resource kinds that can store operands (and therefore act as buffers).
BUFFER_KINDS = (ResourceKind.TRANSFORMATION, ResourceKind.INDEPENDENT_BUFFER)


@dataclass(frozen=True)
class Operand:
    """An asset or object that processes consume, transform, or produce."""

    id: str
    name: str
    unit: str


@dataclass(frozen=True)
class ProcessFlow:
    """One input or output of a process: operand and quantity per execution.

    Quantities are stored as positive magnitudes; signs are applied at
    matrix assembly.  ``unit``, when given, must agree with the operand's
    declared unit.
    """

    operand: str
    quantity: float
    unit: str | None = None


@dataclass(frozen=True)
class Process:
    """A solution-neutral activity turning input operands into outputs."""

    id: str
    name: str
    kind: ProcessKind
    inputs: tuple[ProcessFlow, ...]
    outputs: tuple[ProcessFlow, ...]
    primary_output: str


@dataclass(frozen=True)
class Resource:
    """An asset that executes processes; its kind decides whether it buffers."""

    id: str
    name: str
    kind: ResourceKind
    location: str | None = None

    @property
    def is_buffer(self) -> bool:
        return self.kind in BUFFER_KINDS


@dataclass(frozen=True)
class BufferOverride:
    """Pins one flow of a capability to a named buffer.

    Without an override a flow lives at the executing resource's own
    buffer.  ``resource`` narrows the override to one capability of the
    process; ``direction`` ("input"/"output") disambiguates operands that
    appear on both sides.
    """

    process: str
    operand: str
    buffer: str
    resource: str | None = None
    direction: str | None = None


@dataclass(frozen=True)
class PlacedFlow:
    """A flow bound to a concrete buffer: (operand, buffer, weight)."""

    operand: str
    buffer: str
    weight: float


@dataclass(frozen=True)
class Capability:
    """Resource ``resource`` does process ``process``.

    ``pulls`` and ``injects`` are the process inputs/outputs placed at
    buffers; ``index`` is the position in the capability ordering that all
    downstream matrix columns follow.
    """

    index: int
    resource: str
    process: str
    process_kind: ProcessKind
    pulls: tuple[PlacedFlow, ...]
    injects: tuple[PlacedFlow, ...]
    label: str


@dataclass(frozen=True)
class SystemModel:
    """A validated system description.

    Immutable after construction; derived lookups are cached.  The buffer
    ordering (declaration order of buffering resources) fixes the row
    layout of every incidence matrix built from this model.
    """

    operands: tuple[Operand, ...]
    processes: tuple[Process, ...]
    resources: tuple[Resource, ...]
    allocations: tuple[tuple[str, str], ...]
    buffer_overrides: tuple[BufferOverride, ...] = ()
    aspect_operands: tuple[str, ...] = ()
    name: str = ""

    @cached_property
    def operand_index(self) -> dict[str, int]:
        return {o.id: i for i, o in enumerate(self.operands)}

    @cached_property
    def process_index(self) -> dict[str, int]:
        return {p.id: i for i, p in enumerate(self.processes)}

    @cached_property
    def resource_index(self) -> dict[str, int]:
        return {r.id: i for i, r in enumerate(self.resources)}

    @cached_property
    def buffers(self) -> tuple[Resource, ...]:
        """Buffering resources (transformation + independent) in declaration order."""
        return tuple(r for r in self.resources if r.is_buffer)

    @cached_property
    def buffer_index(self) -> dict[str, int]:
        return {b.id: i for i, b in enumerate(self.buffers)}

    @cached_property
    def transformation_resources(self) -> tuple[Resource, ...]:
        return tuple(r for r in self.resources if r.kind is ResourceKind.TRANSFORMATION)

    @cached_property
    def independent_buffers(self) -> tuple[Resource, ...]:
        return tuple(r for r in self.resources if r.kind is ResourceKind.INDEPENDENT_BUFFER)

    @cached_property
    def transportation_resources(self) -> tuple[Resource, ...]:
        return tuple(r for r in self.resources if r.kind is ResourceKind.TRANSPORTATION)

    def operand(self, operand_id: str) -> Operand:
        return self.operands[self.operand_index[operand_id]]

    def process(self, process_id: str) -> Process:
        return self.processes[self.process_index[process_id]]

    def resource(self, resource_id: str) -> Resource:
        return self.resources[self.resource_index[resource_id]]


@dataclass(frozen=True)
class CapabilitySet:
    """The ordered capabilities of a model; column order for all matrices."""

    capabilities: tuple[Capability, ...]

    def __len__(self) -> int:
        return len(self.capabilities)

    def __iter__(self):
        return iter(self.capabilities)

    def __getitem__(self, index: int) -> Capability:
        return self.capabilities[index]

    @cached_property
    def labels(self) -> tuple[str, ...]:
        return tuple(c.label for c in self.capabilities)

    @cached_property
    def by_pair(self) -> dict[tuple[str, str], Capability]:
        return {(c.process, c.resource): c for c in self.capabilities}

    def for_process(self, process_id: str) -> tuple[Capability, ...]:
        return tuple(c for c in self.capabilities if c.process == process_id)

    def resolve(self, key: "int | str | tuple[str, str]") -> Capability:
        """Resolve an index, process id, or (process, resource) pair.

        A bare process id works only when the process has exactly one
        capability; otherwise the pair form is required.
        """
        if isinstance(key, int):
            if not 0 <= key < len(self.capabilities):
                raise ModelValidationError(f"capability index {key} out of range")
            return self.capabilities[key]
        if isinstance(key, tuple):
            try:
                return self.by_pair[key]
            except KeyError:
                raise ModelValidationError(
                    f"no capability for process '{key[0]}' on resource '{key[1]}'"
                ) from None
        matches = self.for_process(key)
        if not matches:
            raise ModelValidationError(f"no capability for process '{key}'")
        if len(matches) > 1:
            resources = ", ".join(c.resource for c in matches)
            raise ModelValidationError(
                f"process '{key}' has multiple capabilities (on {resources}); "
                "identify the capability by (process, resource)"
            )
        return matches[0]


def _as_flow(entry: Mapping[str, Any] | ProcessFlow) -> ProcessFlow:
    if isinstance(entry, ProcessFlow):
        return entry
    return ProcessFlow(
        operand=str(entry["operand"]),
        quantity=float(entry["quantity"]),
        unit=entry.get("unit"),
    )


def _check_unique(kind: str, ids: Iterable[str]) -> None:
    seen: set[str] = set()
    for item in ids:
        if item in seen:
            raise ModelValidationError(f"duplicate {kind} id '{item}'")
        seen.add(item)


def validate_model(raw: Mapping[str, Any] | SystemModel) -> SystemModel:
    """Resolve and validate a raw model description into a ``SystemModel``.

    ``raw`` is a mapping in the model-file shape (operands, resources,
    processes, allocations, buffer_overrides, aspects).  All cross
    references are checked; errors name the offending id.
    """
    if isinstance(raw, SystemModel):
        raw = model_to_raw(raw)

    operands = tuple(
        Operand(id=str(o["id"]), name=str(o.get("name", o["id"])), unit=str(o["unit"]))
        for o in raw.get("operands", ())
    )
    _check_unique("operand", (o.id for o in operands))
    for o in operands:
        if not o.unit:
            raise ModelValidationError(f"operand '{o.id}' has an empty unit label")

    resources = tuple(
        Resource(
            id=str(r["id"]),
            name=str(r.get("name", r["id"])),
            kind=ResourceKind(r["kind"]),
            location=r.get("location"),
        )
        for r in raw.get("resources", ())
    )
    _check_unique("resource", (r.id for r in resources))

    processes = []
    for p in raw.get("processes", ()):
        outputs = tuple(_as_flow(f) for f in p.get("outputs", ()))
        if not outputs:
            raise ModelValidationError(f"process '{p['id']}' has no outputs")
        processes.append(
            Process(
                id=str(p["id"]),
                name=str(p.get("name", p["id"])),
                kind=ProcessKind(p.get("kind", "transformation")),
                inputs=tuple(_as_flow(f) for f in p.get("inputs", ())),
                outputs=outputs,
                primary_output=str(p["primary_output"]),
            )
        )
    processes = tuple(processes)
    _check_unique("process", (p.id for p in processes))

    operand_ids = {o.id for o in operands}
    resource_ids = {r.id for r in resources}
    process_ids = {p.id for p in processes}
    buffer_ids = {r.id for r in resources if r.is_buffer}

    for p in processes:
        for side, flows in (("input", p.inputs), ("output", p.outputs)):
            for f in flows:
                if f.operand not in operand_ids:
                    raise ModelValidationError(
                        f"process '{p.id}' references unknown operand '{f.operand}'"
                    )
                if not f.quantity > 0:
                    raise ModelValidationError(
                        f"process '{p.id}' has non-positive {side} quantity for "
                        f"operand '{f.operand}' (quantities are stored as magnitudes)"
                    )
        if p.primary_output not in operand_ids:
            raise ModelValidationError(
                f"process '{p.id}' references unknown operand '{p.primary_output}'"
            )
        if p.primary_output not in {f.operand for f in p.outputs}:
            raise ModelValidationError(
                f"primary output '{p.primary_output}' of process '{p.id}' "
                "does not appear among its outputs"
            )

    allocations = tuple(
        (str(a["process"]), str(a["resource"])) for a in raw.get("allocations", ())
    )
    for proc_id, res_id in allocations:
        if proc_id not in process_ids:
            raise ModelValidationError(f"allocation references unknown process '{proc_id}'")
        if res_id not in resource_ids:
            raise ModelValidationError(f"allocation references unknown resource '{res_id}'")
    _check_unique("allocation", (f"{p}->{r}" for p, r in allocations))
    allocated = {p for p, _ in allocations}
    for p in processes:
        if p.id not in allocated:
            raise ModelValidationError(f"process '{p.id}' is not allocated to any resource")

    overrides = tuple(
        BufferOverride(
            process=str(o["process"]),
            operand=str(o["operand"]),
            buffer=str(o["buffer"]),
            resource=o.get("resource"),
            direction=o.get("direction"),
        )
        for o in raw.get("buffer_overrides", ())
    )
    for o in overrides:
        if o.process not in process_ids:
            raise ModelValidationError(f"buffer override references unknown process '{o.process}'")
        if o.operand not in operand_ids:
            raise ModelValidationError(f"buffer override references unknown operand '{o.operand}'")
        if o.buffer not in resource_ids:
            raise ModelValidationError(f"buffer override references unknown buffer '{o.buffer}'")
        if o.buffer not in buffer_ids:
            raise ModelValidationError(
                f"buffer override targets '{o.buffer}', which cannot store operands"
            )
        if o.resource is not None and o.resource not in resource_ids:
            raise ModelValidationError(
                f"buffer override references unknown resource '{o.resource}'"
            )
        if o.direction not in (None, "input", "output"):
            raise ModelValidationError(
                f"buffer override direction must be 'input' or 'output', got '{o.direction}'"
            )

    aspects = tuple(str(a) for a in raw.get("aspects", ()))
    for a in aspects:
        if a not in operand_ids:
            raise ModelValidationError(f"aspect list references unknown operand '{a}'")
    _check_unique("aspect", aspects)

    return SystemModel(
        operands=operands,
        processes=processes,
        resources=resources,
        allocations=allocations,
        buffer_overrides=overrides,
        aspect_operands=aspects,
        name=str(raw.get("name", "")),
    )


def model_to_raw(model: SystemModel) -> dict[str, Any]:
    """Inverse of ``validate_model``: the model-file mapping for a model."""
    raw: dict[str, Any] = {
        "operands": [
            {"id": o.id, "name": o.name, "unit": o.unit} for o in model.operands
        ],
        "resources": [
            {
                "id": r.id,
                "name": r.name,
                "kind": r.kind.value,
                **({"location": r.location} if r.location is not None else {}),
            }
            for r in model.resources
        ],
        "processes": [
            {
                "id": p.id,
                "name": p.name,
                "kind": p.kind.value,
                "inputs": [
                    {
                        "operand": f.operand,
                        "quantity": f.quantity,
                        **({"unit": f.unit} if f.unit is not None else {}),
                    }
                    for f in p.inputs
                ],
                "outputs": [
                    {
                        "operand": f.operand,
                        "quantity": f.quantity,
                        **({"unit": f.unit} if f.unit is not None else {}),
                    }
                    for f in p.outputs
                ],
                "primary_output": p.primary_output,
            }
            for p in model.processes
        ],
        "allocations": [
            {"process": p, "resource": r} for p, r in model.allocations
        ],
    }
    if model.buffer_overrides:
        raw["buffer_overrides"] = [
            {
                "process": o.process,
                "operand": o.operand,
                "buffer": o.buffer,
                **({"resource": o.resource} if o.resource is not None else {}),
                **({"direction": o.direction} if o.direction is not None else {}),
            }
            for o in model.buffer_overrides
        ]
    if model.aspect_operands:
        raw["aspects"] = list(model.aspect_operands)
    if model.name:
        raw["name"] = model.name
    return raw


def _override_lookup(model: SystemModel) -> dict[tuple, str]:
    """Index overrides by (process, resource, operand, direction) specificity."""
    table: dict[tuple, str] = {}
    for o in model.buffer_overrides:
        key = (o.process, o.resource, o.operand, o.direction)
        if key in table and table[key] != o.buffer:
            raise ModelValidationError(
                f"conflicting buffer overrides for operand '{o.operand}' "
                f"of process '{o.process}'"
            )
        table[key] = o.buffer
    return table


def _placed_buffer(table: Mapping[tuple, str], process: str, resource: str,
                   operand: str, direction: str) -> str | None:
    for key in (
        (process, resource, operand, direction),
        (process, resource, operand, None),
        (process, None, operand, direction),
        (process, None, operand, None),
    ):
        if key in table:
            return table[key]
    return None


def _hosting_ok(process_kind: ProcessKind, resource_kind: ResourceKind) -> bool:
    if process_kind is ProcessKind.TRANSPORTATION:
        return resource_kind is ResourceKind.TRANSPORTATION
    return resource_kind is ResourceKind.TRANSFORMATION


def enumerate_capabilities(model: SystemModel, *,
                           allow_kind_mismatch: bool = False) -> CapabilitySet:
    """Expand the allocation list into the ordered capability set.

    One capability per (process, resource) allocation pair, in allocation
    order.  Flows are placed at the executing resource's own buffer unless
    a buffer override pins them elsewhere; capabilities on non-buffering
    resources need an override for every flow.
    """
    table = _override_lookup(model)
    caps: list[Capability] = []
    for index, (proc_id, res_id) in enumerate(model.allocations):
        process = model.process(proc_id)
        resource = model.resource(res_id)

        if not _hosting_ok(process.kind, resource.kind):
            message = (
                f"{process.kind.value} process '{proc_id}' is allocated to "
                f"{resource.kind.value} resource '{res_id}'"
            )
            if not allow_kind_mismatch:
                raise ModelValidationError(
                    message + " (pass allow_kind_mismatch to accept this allocation)"
                )
            logger.warning("accepting kind mismatch: %s", message)

        placed: dict[str, list[PlacedFlow]] = {"input": [], "output": []}
        for direction, flows in (("input", process.inputs), ("output", process.outputs)):
            for flow in flows:
                buffer_id = _placed_buffer(table, proc_id, res_id, flow.operand, direction)
                if buffer_id is None:
                    if not resource.is_buffer:
                        raise ModelValidationError(
                            f"capability '{proc_id}' on '{res_id}': operand "
                            f"'{flow.operand}' has no buffer override and the "
                            "executing resource cannot store operands"
                        )
                    buffer_id = res_id
                operand = model.operand(flow.operand)
                if flow.unit is not None and flow.unit != operand.unit:
                    raise ModelValidationError(
                        f"unit mismatch for operand '{flow.operand}' at buffer "
                        f"'{buffer_id}': flow declares '{flow.unit}', operand "
                        f"declares '{operand.unit}'"
                    )
                placed[direction].append(
                    PlacedFlow(operand=flow.operand, buffer=buffer_id, weight=flow.quantity)
                )

        caps.append(
            Capability(
                index=index,
                resource=res_id,
                process=proc_id,
                process_kind=process.kind,
                pulls=tuple(placed["input"]),
                injects=tuple(placed["output"]),
                label=f"{resource.name}: {process.name}",
            )
        )
    return CapabilitySet(capabilities=tuple(caps))
