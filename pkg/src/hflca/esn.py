"""Discrete-time state-transition dynamics over an incidence structure.

The net is an elementary Petri net with one place per (operand, buffer)
pair and one transition per capability.  A buffer marking Q_B and a
transition marking Q_E evolve by

    Q_B[k+1] = Q_B[k] + M_plus U_plus[k] dT - M_minus U_minus[k] dT
    Q_E[k+1] = Q_E[k] - U_plus[k] dT + U_minus[k] dT

where U_minus[k] fires pulls (operands leave buffers and dwell in the
transition) and U_plus[k] fires injects (operands land in buffers).  When
every firing completes within its own step the two firing vectors
coincide, the transition marking stays put, and the pair of updates
collapses to a single step through the net matrix.

States are numbered k = 1..K; step k maps state k to state k+1, so a
schedule over horizon K has K-1 rows.  Markings are real-valued; integer
token checks are an option.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    ModelValidationError,
    NegativeBufferMarkingError,
    NegativeTransitionMarkingError,
)
from .incidence import IncidenceStructure, build_incidence
from .model import CapabilitySet, SystemModel

logger = logging.getLogger(__name__)

#: Negative markings beyond this magnitude are treated as real, not noise.
NEGATIVITY_TOLERANCE = 1e-9

MODE_INSTANTANEOUS = "instantaneous"
MODE_DURATION = "duration"
MODE_EXPLICIT = "explicit"


@dataclass(frozen=True)
class EngineeringSystemNet:
    """Petri-net view of a capability set: places, transitions, arc weights.

    Places cover every (operand, buffer) pair; the ones actually touched
    by an arc are listed in ``active_places``.
    """

    structure: IncidenceStructure
    minus: sp.csr_matrix
    plus: sp.csr_matrix
    capabilities: CapabilitySet

    @property
    def n_places(self) -> int:
        return self.minus.shape[0]

    @property
    def n_transitions(self) -> int:
        return len(self.capabilities)

    @property
    def place_labels(self) -> tuple[str, ...]:
        return self.structure.row_labels

    @cached_property
    def place_pairs(self) -> tuple[tuple[str, str], ...]:
        model = self.structure.model
        return tuple(
            (operand.id, buffer.id)
            for operand in model.operands for buffer in model.buffers
        )

    @property
    def active_places(self) -> np.ndarray:
        return self.structure.active_rows

    @cached_property
    def transition_labels(self) -> tuple[str, ...]:
        return self.capabilities.labels

    @cached_property
    def net_matrix(self) -> sp.csr_matrix:
        matrix = (self.plus - self.minus).tocsr()
        matrix.sum_duplicates()
        matrix.sort_indices()
        return matrix

    def place_of(self, operand_id: str, buffer_id: str) -> int:
        model = self.structure.model
        if operand_id not in model.operand_index:
            raise ModelValidationError(f"unknown operand '{operand_id}'")
        if buffer_id not in model.buffer_index:
            raise ModelValidationError(
                f"'{buffer_id}' is not a buffer of this model"
            )
        return self.structure.flat_index(operand_id, buffer_id)

    def with_arc_weight(self, side: str, place: int, transition: int,
                        weight: float) -> "EngineeringSystemNet":
        """A copy of the net with one existing arc weight replaced."""
        if side not in ("pull", "inject"):
            raise ModelValidationError("arc side must be 'pull' or 'inject'")
        if not weight >= 0:
            raise ModelValidationError(
                f"arc weights are magnitudes; got {weight} for "
                f"{side} arc ({place}, {transition})"
            )
        source = self.minus if side == "pull" else self.plus
        target = source.tolil(copy=True)
        if target[place, transition] == 0:
            raise ModelValidationError(
                f"transition '{self.transition_labels[transition]}' has no "
                f"{side} arc at place '{self.place_labels[place]}'"
            )
        target[place, transition] = weight
        rebuilt = target.tocsr()
        rebuilt.sum_duplicates()
        rebuilt.sort_indices()
        if side == "pull":
            return replace(self, minus=rebuilt)
        return replace(self, plus=rebuilt)


def build_net(structure: IncidenceStructure) -> EngineeringSystemNet:
    return EngineeringSystemNet(
        structure=structure,
        minus=structure.minus,
        plus=structure.plus,
        capabilities=structure.capabilities,
    )


def net_from_model(model: SystemModel, *,
                   allow_kind_mismatch: bool = False) -> EngineeringSystemNet:
    return build_net(build_incidence(model, allow_kind_mismatch=allow_kind_mismatch))


@dataclass(frozen=True)
class EsnState:
    """Markings at one time index: buffers ``qb`` and transitions ``qe``."""

    qb: np.ndarray
    qe: np.ndarray
    k: int
    dt: float


@dataclass(frozen=True)
class SimulationOptions:
    """Marking policy for a run.

    ``enforce_nonnegative`` rejects negative buffer markings; leave it off
    for the unbounded-source convention where extraction shows up as a
    negative source balance.  ``warn_on_negative`` controls whether the
    unenforced case still logs.  ``integer_tokens`` insists firing amounts
    are whole numbers, for classical token-game checks.
    """

    enforce_nonnegative: bool = False
    warn_on_negative: bool = True
    integer_tokens: bool = False
    negativity_tolerance: float = NEGATIVITY_TOLERANCE


def _marking_vector(net: EngineeringSystemNet,
                    marking: Mapping[Any, float] | Sequence[float] | None,
                    ) -> np.ndarray:
    if marking is None:
        return np.zeros(net.n_places)
    if not isinstance(marking, Mapping):
        vector = np.asarray(marking, dtype=float)
        if vector.shape != (net.n_places,):
            raise ModelValidationError(
                f"marking must have shape ({net.n_places},), got {vector.shape}"
            )
        return vector.copy()
    vector = np.zeros(net.n_places)
    for key, value in marking.items():
        if isinstance(key, tuple):
            operand_id, buffer_id = key
        else:
            operand_id, sep, buffer_id = str(key).partition("@")
            if not sep:
                raise ModelValidationError(
                    f"marking key '{key}' must name a place as operand@buffer"
                )
        vector[net.place_of(operand_id, buffer_id)] += float(value)
    return vector


def _firing_vector(net: EngineeringSystemNet,
                   firing: Mapping[Any, float] | Sequence[float] | None,
                   ) -> np.ndarray:
    if firing is None:
        return np.zeros(net.n_transitions)
    if not isinstance(firing, Mapping):
        vector = np.asarray(firing, dtype=float)
        if vector.shape != (net.n_transitions,):
            raise ModelValidationError(
                f"firing vector must have shape ({net.n_transitions},), "
                f"got {vector.shape}"
            )
        return vector.copy()
    vector = np.zeros(net.n_transitions)
    for key, value in firing.items():
        cap = net.capabilities.resolve(key)
        vector[cap.index] += float(value)
    return vector


def initial_state(net: EngineeringSystemNet, *, dt: float = 1.0,
                  marking: Mapping[Any, float] | Sequence[float] | None = None,
                  in_flight: Mapping[Any, float] | Sequence[float] | None = None,
                  k: int = 1) -> EsnState:
    """State at index ``k`` with the given buffer and in-flight markings."""
    if not dt > 0:
        raise ModelValidationError(f"time step must be positive, got {dt}")
    qe = _firing_vector(net, in_flight)
    if np.any(qe < 0):
        j = int(np.argmin(qe))
        raise NegativeTransitionMarkingError(
            "initial in-flight marking is negative",
            k=k, transition=net.transition_labels[j], value=float(qe[j]),
        )
    return EsnState(qb=_marking_vector(net, marking), qe=qe, k=k, dt=float(dt))


def _check_firing(net: EngineeringSystemNet, u: np.ndarray, name: str,
                  options: SimulationOptions) -> None:
    if np.any(u < 0):
        j = int(np.argmin(u))
        raise ModelValidationError(
            f"{name} firing for transition '{net.transition_labels[j]}' "
            f"is negative ({u[j]})"
        )
    if options.integer_tokens:
        off = np.abs(u - np.round(u))
        if np.any(off > 1e-9):
            j = int(np.argmax(off))
            raise ModelValidationError(
                f"{name} firing for transition '{net.transition_labels[j]}' "
                f"is not a whole token count ({u[j]})"
            )


def _check_markings(net: EngineeringSystemNet, qb: np.ndarray, qe: np.ndarray,
                    k: int, options: SimulationOptions) -> None:
    tol = options.negativity_tolerance
    if np.any(qe < -tol):
        j = int(np.argmin(qe))
        raise NegativeTransitionMarkingError(
            "more firing completed than was initiated",
            k=k, transition=net.transition_labels[j], value=float(qe[j]),
        )
    if np.any(qb < -tol):
        i = int(np.argmin(qb))
        if options.enforce_nonnegative:
            raise NegativeBufferMarkingError(
                "buffer marking went negative",
                k=k, place=net.place_labels[i], value=float(qb[i]),
            )
        if options.warn_on_negative:
            logger.warning(
                "buffer marking '%s' is %g at state k=%d",
                net.place_labels[i], float(qb[i]), k,
            )


def step(net: EngineeringSystemNet, state: EsnState,
         u_minus: np.ndarray | Mapping[Any, float],
         u_plus: np.ndarray | Mapping[Any, float], *,
         options: SimulationOptions = SimulationOptions()) -> EsnState:
    """Advance one step with separate pull and inject firing vectors."""
    um = _firing_vector(net, u_minus)
    up = _firing_vector(net, u_plus)
    _check_firing(net, um, "pull", options)
    _check_firing(net, up, "inject", options)
    dt = state.dt
    qb = state.qb + (net.plus @ up) * dt - (net.minus @ um) * dt
    qe = state.qe - up * dt + um * dt
    k = state.k + 1
    _check_markings(net, qb, qe, k, options)
    return EsnState(qb=qb, qe=qe, k=k, dt=dt)


def simplified_step(net: EngineeringSystemNet, state: EsnState,
                    u: np.ndarray | Mapping[Any, float], *,
                    options: SimulationOptions = SimulationOptions()) -> EsnState:
    """Advance one step with a single firing vector (pulls complete in-step).

    Computes the net-matrix update Q_B + M U dT as the same two
    mat-vec expression ``step`` uses, so a run with coinciding firing
    vectors is reproduced bit for bit; the transition marking is carried
    through untouched.
    """
    uu = _firing_vector(net, u)
    _check_firing(net, uu, "net", options)
    dt = state.dt
    qb = state.qb + (net.plus @ uu) * dt - (net.minus @ uu) * dt
    k = state.k + 1
    _check_markings(net, qb, state.qe, k, options)
    return EsnState(qb=qb, qe=state.qe, k=k, dt=dt)


@dataclass(frozen=True)
class FiringSchedule:
    """Pull and inject firing vectors for steps 1..K-1 (rows 0..K-2)."""

    u_minus: np.ndarray
    u_plus: np.ndarray
    mode: str = MODE_EXPLICIT
    in_flight_at_end: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.u_minus.shape != self.u_plus.shape:
            raise ModelValidationError(
                "pull and inject schedules must have the same shape, got "
                f"{self.u_minus.shape} and {self.u_plus.shape}"
            )
        if self.u_minus.ndim != 2:
            raise ModelValidationError("schedules must be 2-d (steps, transitions)")
        if self.n_steps < 1:
            raise ModelValidationError(
                "simulation horizon must allow at least one step (K >= 2)"
            )

    @property
    def n_steps(self) -> int:
        return self.u_minus.shape[0]

    @property
    def horizon(self) -> int:
        return self.n_steps + 1

    def at(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        if not 1 <= k <= self.n_steps:
            raise ModelValidationError(
                f"step index k={k} outside schedule range 1..{self.n_steps}"
            )
        return self.u_minus[k - 1], self.u_plus[k - 1]


def instantaneous_schedule(u: np.ndarray) -> FiringSchedule:
    """Schedule where each step's firings complete within the step."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[None, :]
    return FiringSchedule(u_minus=u, u_plus=u, mode=MODE_INSTANTANEOUS)


def explicit_schedule(u_minus: np.ndarray, u_plus: np.ndarray) -> FiringSchedule:
    return FiringSchedule(
        u_minus=np.asarray(u_minus, dtype=float),
        u_plus=np.asarray(u_plus, dtype=float),
        mode=MODE_EXPLICIT,
    )


@dataclass(frozen=True)
class Initiation:
    """One firing initiation: step index, capability key, amount."""

    k: int
    capability: Any
    amount: float


def schedule_from_durations(capabilities: CapabilitySet,
                            durations: Mapping[Any, int],
                            initiations: Iterable[Initiation | Mapping[str, Any]],
                            horizon: int) -> FiringSchedule:
    """Expand initiations and per-capability durations into firing vectors.

    A firing of duration d initiated at step k pulls at step k and injects
    at step k + d; injects that fall beyond the horizon are tallied in
    ``in_flight_at_end``.  Capabilities without a declared duration take
    one step.
    """
    if horizon < 2:
        raise ModelValidationError(
            f"simulation horizon must be at least 2 states, got K={horizon}"
        )
    n_steps = horizon - 1
    n = len(capabilities)
    resolved: dict[int, int] = {}
    for key, d in durations.items():
        cap = capabilities.resolve(key)
        d = int(d)
        if d == 0:
            raise ModelValidationError(
                f"duration 0 for capability '{cap.label}': use the "
                "instantaneous mode for firings that complete in-step"
            )
        if d < 0:
            raise ModelValidationError(
                f"duration for capability '{cap.label}' must be positive, got {d}"
            )
        resolved[cap.index] = d

    u_minus = np.zeros((n_steps, n))
    u_plus = np.zeros((n_steps, n))
    in_flight = np.zeros(n)
    for entry in initiations:
        if isinstance(entry, Mapping):
            entry = Initiation(
                k=int(entry["k"]),
                capability=entry["capability"],
                amount=float(entry.get("amount", 1.0)),
            )
        cap = capabilities.resolve(entry.capability)
        if not 1 <= entry.k <= n_steps:
            raise ModelValidationError(
                f"initiation at step k={entry.k} for capability '{cap.label}' "
                f"is outside the schedule range 1..{n_steps}"
            )
        if not entry.amount >= 0:
            raise ModelValidationError(
                f"initiation amount for capability '{cap.label}' is negative"
            )
        u_minus[entry.k - 1, cap.index] += entry.amount
        completion = entry.k + resolved.get(cap.index, 1)
        if completion <= n_steps:
            u_plus[completion - 1, cap.index] += entry.amount
        else:
            in_flight[cap.index] += entry.amount
    return FiringSchedule(
        u_minus=u_minus, u_plus=u_plus, mode=MODE_DURATION,
        in_flight_at_end=in_flight,
    )


@dataclass(frozen=True)
class WeightOverride:
    """Replace one arc weight for selected steps.

    ``steps`` lists the step indices k whose update uses ``weight``
    (every step when empty); a duration firing is affected when its
    inject step falls in the window.
    """

    capability: Any
    operand: str
    buffer: str
    weight: float
    side: str = "inject"
    steps: tuple[int, ...] = ()


def _nets_by_step(net: EngineeringSystemNet,
                  overrides: Sequence[WeightOverride],
                  n_steps: int) -> dict[int, EngineeringSystemNet]:
    per_step: dict[int, list[tuple[str, int, int, float]]] = {}
    for ov in overrides:
        cap = net.capabilities.resolve(ov.capability)
        place = net.place_of(ov.operand, ov.buffer)
        arc = (ov.side, place, cap.index, float(ov.weight))
        steps = ov.steps if ov.steps else range(1, n_steps + 1)
        for k in steps:
            if 1 <= k <= n_steps:
                per_step.setdefault(k, []).append(arc)
    variants: dict[tuple, EngineeringSystemNet] = {}
    nets: dict[int, EngineeringSystemNet] = {}
    for k, arcs in per_step.items():
        signature = tuple(sorted(arcs))
        if signature not in variants:
            modified = net
            for side, place, transition, weight in signature:
                modified = modified.with_arc_weight(side, place, transition, weight)
            variants[signature] = modified
        nets[k] = variants[signature]
    return nets


@dataclass(frozen=True)
class Trajectory:
    """All states of one simulation run, k = 1..K."""

    net: EngineeringSystemNet
    states: tuple[EsnState, ...]
    schedule: FiringSchedule
    overrides: tuple[WeightOverride, ...] = ()

    @property
    def horizon(self) -> int:
        return len(self.states)

    @cached_property
    def qb_history(self) -> np.ndarray:
        return np.stack([s.qb for s in self.states])

    @cached_property
    def qe_history(self) -> np.ndarray:
        return np.stack([s.qe for s in self.states])

    @property
    def delta_qb(self) -> np.ndarray:
        return self.states[-1].qb - self.states[0].qb

    @property
    def delta_qe(self) -> np.ndarray:
        return self.states[-1].qe - self.states[0].qe

    @property
    def delta_qb_active(self) -> np.ndarray:
        return self.delta_qb[self.net.active_places]

    @property
    def final(self) -> EsnState:
        return self.states[-1]

    def marking(self, operand_id: str, buffer_id: str,
                k: int | None = None) -> float:
        state = self.states[-1 if k is None else k - self.states[0].k]
        return float(state.qb[self.net.place_of(operand_id, buffer_id)])


def simulate(net: EngineeringSystemNet, state: EsnState,
             schedule: FiringSchedule, *,
             options: SimulationOptions = SimulationOptions(),
             overrides: Sequence[WeightOverride] = ()) -> Trajectory:
    """Run a schedule from an initial state and keep every visited state."""
    step_nets = _nets_by_step(net, overrides, schedule.n_steps) if overrides else {}
    states = [state]
    for k in range(1, schedule.n_steps + 1):
        um, up = schedule.at(k)
        net_k = step_nets.get(k, net)
        if schedule.mode == MODE_INSTANTANEOUS:
            state = simplified_step(net_k, state, up, options=options)
        else:
            state = step(net_k, state, um, up, options=options)
        states.append(state)
    return Trajectory(
        net=net, states=tuple(states), schedule=schedule,
        overrides=tuple(overrides),
    )
