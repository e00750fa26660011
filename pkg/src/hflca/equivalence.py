"""Reduction of net dynamics to classical inventory form, and its checks.

Under three conditions the one-step net update reproduces the classical
inventory equations exactly: (1) each process is executed by exactly one
resource, so capabilities and processes correspond one to one; (2) the
run covers a single step of unit length; (3) every firing completes
within its step.  Then the reduced net matrix is the technology matrix
stacked on the intervention matrix, the firing vector is the process
activity X, and the marking change is the demand stacked on the
inventory: delta Q_B = [Y; E].

This module checks those conditions, performs the reduction both ways,
runs the net against a solved demand to measure the residual
discrepancy, and splits marking changes into conversion and
transportation contributions with a dominance test per row.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ModelValidationError
from .esn import (
    FiringSchedule,
    SimulationOptions,
    build_net,
    initial_state,
    instantaneous_schedule,
    simulate,
)
from .incidence import IncidenceStructure, ReducedIncidence, build_incidence, kind_partition
from .lca import (
    LcaMatrices,
    assemble_lca,
    classical_row_plan,
    demand_vector,
    pair_label,
    solve,
)
from .model import CapabilitySet, SystemModel, enumerate_capabilities

#: Relative tolerance on the marking-change discrepancy; looser than the
#: solver residual because two matrix products accumulate here.
EQUIVALENCE_RTOL = 1e-6

#: Default dominance threshold: transportation below this fraction of
#: conversion counts as negligible.
DOMINANCE_THRESHOLD = 0.05

VERDICT_EQUIVALENT = "equivalent"
VERDICT_NOT_EQUIVALENT = "not equivalent"
VERDICT_ASSUMPTIONS = "assumptions violated"

NEGLIGIBLE = "negligible"
MUST_INCLUDE = "must include transportation"
DOMINANT_TRANSPORT = "dominant transportation"


@dataclass(frozen=True)
class AssumptionDiagnostic:
    """One reduction condition: whether it held and why not if it didn't."""

    name: str
    held: bool
    detail: str


def check_assumptions(model: SystemModel, capabilities: CapabilitySet,
                      schedule: FiringSchedule | None, horizon: int,
                      dt: float) -> tuple[AssumptionDiagnostic, ...]:
    """Diagnose the three reduction conditions for a given run setup."""
    per_process: dict[str, list[str]] = {}
    for cap in capabilities:
        per_process.setdefault(cap.process, []).append(cap.resource)
    duplicated = sorted(p for p, rs in per_process.items() if len(rs) > 1)
    if duplicated:
        detail = "; ".join(
            f"process '{p}' runs on {', '.join(per_process[p])}" for p in duplicated
        )
        one_to_one = AssumptionDiagnostic(
            "one capability per process", False, detail
        )
    else:
        one_to_one = AssumptionDiagnostic(
            "one capability per process", True,
            f"{len(capabilities)} processes, {len(capabilities)} capabilities",
        )

    if horizon == 2 and dt == 1:
        single = AssumptionDiagnostic(
            "single unit-length step", True, "K=2, dt=1"
        )
    else:
        single = AssumptionDiagnostic(
            "single unit-length step", False, f"K={horizon}, dt={dt}"
        )

    if schedule is None:
        instant = AssumptionDiagnostic(
            "instantaneous firing", True, "no separate completion schedule"
        )
    else:
        mismatch = None
        for k in range(1, schedule.n_steps + 1):
            um, up = schedule.at(k)
            if not np.array_equal(um, up):
                mismatch = k
                break
        if mismatch is None:
            instant = AssumptionDiagnostic(
                "instantaneous firing", True,
                "pull and inject firings coincide at every step",
            )
        else:
            instant = AssumptionDiagnostic(
                "instantaneous firing", False,
                f"pull and inject firings differ at step k={mismatch}",
            )
    return (one_to_one, single, instant)


@dataclass(frozen=True)
class ReducedLca:
    """Classical matrices recovered by slicing the reduced net matrix."""

    a: np.ndarray
    b: np.ndarray
    product_rows: np.ndarray
    aspect_rows: np.ndarray
    product_pairs: tuple[tuple[str, str], ...]
    aspect_pairs: tuple[tuple[str, str], ...]
    row_partition: tuple[tuple[str, str, int], ...]
    column_ids: tuple[str, ...]


def reduce_to_lca(model: SystemModel, capabilities: CapabilitySet,
                  structure: IncidenceStructure) -> ReducedLca:
    """Slice the reduced net matrix into technology and intervention blocks.

    Every retained row must be classified as a product or an aspect; a
    leftover row means the model carries flows the classical framing
    cannot represent, and that is an error here.
    """
    plan = classical_row_plan(model, capabilities)
    if plan.unclassified_pairs:
        names = ", ".join(
            pair_label(model, p) for p in plan.unclassified_pairs
        )
        raise ModelValidationError(
            "retained rows are neither products nor tracked aspects: "
            f"{names}"
        )
    reduced = structure.reduced()
    net = reduced.net.toarray()
    product_rows = np.asarray(
        [reduced.row_of(*pair) for pair in plan.product_pairs], dtype=np.int64
    )
    aspect_rows = np.asarray(
        [reduced.row_of(*pair) for pair in plan.aspect_pairs], dtype=np.int64
    )
    partition = []
    for i, pair in enumerate(plan.product_pairs):
        partition.append((pair_label(model, pair), "product", i))
    for i, pair in enumerate(plan.aspect_pairs):
        partition.append((pair_label(model, pair), "aspect", i))
    return ReducedLca(
        a=net[product_rows, :],
        b=net[aspect_rows, :] if len(aspect_rows) else np.zeros((0, net.shape[1])),
        product_rows=product_rows,
        aspect_rows=aspect_rows,
        product_pairs=plan.product_pairs,
        aspect_pairs=plan.aspect_pairs,
        row_partition=tuple(partition),
        column_ids=tuple(c.process for c in capabilities),
    )


@dataclass(frozen=True)
class EquivalenceReport:
    """Outcome of checking delta Q_B = [Y; E] for one model and demand."""

    assumptions: tuple[AssumptionDiagnostic, ...]
    row_partition: tuple[tuple[str, str, int], ...]
    max_abs_discrepancy: float
    tolerance: float
    matrix_agreement: float
    verdict: str
    y: np.ndarray | None = None
    x: np.ndarray | None = None
    e: np.ndarray | None = None
    delta_qb: np.ndarray | None = None
    target: np.ndarray | None = None

    @property
    def assumptions_held(self) -> bool:
        return all(a.held for a in self.assumptions)


def verify_equivalence(model: SystemModel,
                       y: np.ndarray | Mapping[str, Any], *,
                       rtol: float = EQUIVALENCE_RTOL) -> EquivalenceReport:
    """Check that a one-step net run reproduces the classical inventory.

    Solves the demand classically, fires the net once with the resulting
    activity, and compares the marking change against [Y; E] row by row.
    """
    capabilities = enumerate_capabilities(model)
    assumptions = check_assumptions(model, capabilities, None, 2, 1.0)
    if not assumptions[0].held:
        return EquivalenceReport(
            assumptions=assumptions,
            row_partition=(),
            max_abs_discrepancy=float("nan"),
            tolerance=float("nan"),
            matrix_agreement=float("nan"),
            verdict=VERDICT_ASSUMPTIONS,
        )

    matrices = assemble_lca(model, capabilities)
    structure = build_incidence(model, capabilities)
    recovered = reduce_to_lca(model, capabilities, structure)
    agreement = float(
        max(
            np.max(np.abs(recovered.a - matrices.a)) if matrices.n else 0.0,
            np.max(np.abs(recovered.b - matrices.b)) if matrices.n_aspects else 0.0,
        )
    )

    solution = solve(matrices, y)
    reduced = structure.reduced()
    net = build_net(structure)
    state = initial_state(net, dt=1.0)
    schedule = instantaneous_schedule(solution.x)
    trajectory = simulate(
        net, state, schedule,
        options=SimulationOptions(warn_on_negative=False),
    )
    delta_reduced = trajectory.delta_qb[reduced.rows]

    # present rows in product-then-aspect order, matching row_partition
    delta = np.concatenate([
        delta_reduced[recovered.product_rows],
        delta_reduced[recovered.aspect_rows],
    ])
    target = np.concatenate([solution.y, solution.e])

    discrepancy = float(np.max(np.abs(delta - target))) if delta.size else 0.0
    tolerance = rtol * max(1.0, float(np.max(np.abs(target))) if target.size else 0.0)
    verdict = VERDICT_EQUIVALENT if discrepancy <= tolerance else VERDICT_NOT_EQUIVALENT
    return EquivalenceReport(
        assumptions=assumptions,
        row_partition=recovered.row_partition,
        max_abs_discrepancy=discrepancy,
        tolerance=tolerance,
        matrix_agreement=agreement,
        verdict=verdict,
        y=solution.y,
        x=solution.x,
        e=solution.e,
        delta_qb=delta,
        target=target,
    )


@dataclass(frozen=True)
class DecompositionReport:
    """Marking change split into conversion and transportation blocks."""

    row_labels: tuple[str, ...]
    conv_columns: np.ndarray
    trans_columns: np.ndarray
    conv_contribution: np.ndarray
    trans_contribution: np.ndarray
    total: np.ndarray
    u_conv: np.ndarray
    u_trans: np.ndarray
    epsilon: float
    ratios: np.ndarray

    @property
    def n_rows(self) -> int:
        return len(self.row_labels)


def decompose_conversion_transportation(
        structure: IncidenceStructure | ReducedIncidence,
        u: np.ndarray | Mapping[Any, float]) -> DecompositionReport:
    """Split M U into conversion-column and transportation-column parts.

    The two contributions reconstruct the full marking change; the ratio
    per row compares their magnitudes with a scale-invariant guard on the
    denominator.
    """
    reduced = structure.reduced() if isinstance(structure, IncidenceStructure) else structure
    capabilities = reduced.capabilities
    if isinstance(u, Mapping):
        vector = np.zeros(len(capabilities))
        for key, value in u.items():
            vector[capabilities.resolve(key).index] += float(value)
        u = vector
    u = np.asarray(u, dtype=float)
    if u.shape != (len(capabilities),):
        raise ModelValidationError(
            f"firing vector must have shape ({len(capabilities)},), got {u.shape}"
        )

    conv_cols, trans_cols = kind_partition(capabilities)
    net = reduced.net
    conv = (net[:, conv_cols] @ u[conv_cols]) if len(conv_cols) else np.zeros(reduced.n_rows)
    trans = (net[:, trans_cols] @ u[trans_cols]) if len(trans_cols) else np.zeros(reduced.n_rows)
    total = net @ u

    scale = max(
        float(np.max(np.abs(conv))) if conv.size else 0.0,
        float(np.max(np.abs(trans))) if trans.size else 0.0,
    )
    epsilon = 1e-12 * scale
    ratios = np.zeros(reduced.n_rows)
    for i in range(reduced.n_rows):
        t = abs(float(trans[i]))
        if t == 0.0:
            continue
        c = abs(float(conv[i]))
        ratios[i] = t / max(c, epsilon) if max(c, epsilon) > 0 else float("inf")
    return DecompositionReport(
        row_labels=reduced.row_labels,
        conv_columns=conv_cols,
        trans_columns=trans_cols,
        conv_contribution=np.asarray(conv).ravel(),
        trans_contribution=np.asarray(trans).ravel(),
        total=np.asarray(total).ravel(),
        u_conv=u[conv_cols],
        u_trans=u[trans_cols],
        epsilon=epsilon,
        ratios=ratios,
    )


@dataclass(frozen=True)
class DominanceVerdicts:
    """Per-row call on whether transportation can be neglected."""

    threshold: float
    verdicts: tuple[str, ...]
    ratios: np.ndarray
    row_labels: tuple[str, ...]

    def rows(self) -> tuple[tuple[str, float, str], ...]:
        return tuple(
            zip(self.row_labels, self.ratios.tolist(), self.verdicts)
        )


def transportation_dominance(report: DecompositionReport,
                             ratio_threshold: float = DOMINANCE_THRESHOLD,
                             ) -> DominanceVerdicts:
    """Judge each row's transportation share against a ratio threshold."""
    if not ratio_threshold > 0:
        raise ModelValidationError(
            f"dominance threshold must be positive, got {ratio_threshold}"
        )
    verdicts = []
    for i in range(report.n_rows):
        t = abs(float(report.trans_contribution[i]))
        c = abs(float(report.conv_contribution[i]))
        if t <= report.epsilon:
            verdicts.append(NEGLIGIBLE)
        elif c <= report.epsilon:
            verdicts.append(DOMINANT_TRANSPORT)
        elif report.ratios[i] < ratio_threshold:
            verdicts.append(NEGLIGIBLE)
        else:
            verdicts.append(MUST_INCLUDE)
    return DominanceVerdicts(
        threshold=ratio_threshold,
        verdicts=tuple(verdicts),
        ratios=report.ratios,
        row_labels=report.row_labels,
    )
