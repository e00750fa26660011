"""Classical process-based inventory: technology and intervention matrices.

The technology matrix A is square with one column per process and one row
per product, where a product is the (operand, buffer) pair a process's
primary output lands in.  Entries are net output magnitudes: production
positive, consumption negative.  The intervention matrix B collects the
remaining tracked flows (emissions, resource draws) against the same
columns.  Scaling a final demand Y through X = A^-1 Y and totalling
E = B X gives the inventory attributable to that demand.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace
from typing import Any, Mapping, Sequence

import numpy as np
import scipy.linalg

from .errors import ModelValidationError, NumericalError, SingularTechnologyMatrixError
from .model import CapabilitySet, SystemModel, enumerate_capabilities

logger = logging.getLogger(__name__)

#: Relative residual bound the solve must meet: ||AX - Y||_inf scaled by demand.
RESIDUAL_RTOL = 1e-9

#: 1-norm condition estimate above which results are flagged unreliable.
CONDITION_WARNING_THRESHOLD = 1e12


@dataclass(frozen=True)
class LcaMatrices:
    """Technology matrix A, intervention matrix B, and their row/column keys."""

    a: np.ndarray
    b: np.ndarray
    product_pairs: tuple[tuple[str, str] | None, ...]
    aspect_pairs: tuple[tuple[str, str] | None, ...]
    product_labels: tuple[str, ...]
    aspect_labels: tuple[str, ...]
    column_ids: tuple[str, ...]
    column_labels: tuple[str, ...]
    unrepresented_pairs: tuple[tuple[str, str], ...] = ()

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def n_aspects(self) -> int:
        return self.b.shape[0]

    def stacked(self) -> np.ndarray:
        """A stacked on B: all tracked net flows against process columns."""
        return np.vstack([self.a, self.b])

    @property
    def stacked_labels(self) -> tuple[str, ...]:
        return self.product_labels + self.aspect_labels


@dataclass(frozen=True)
class LcaSolution:
    """Scaled process activity X and inventory totals E for a demand Y."""

    matrices: LcaMatrices
    y: np.ndarray
    x: np.ndarray
    e: np.ndarray
    residual: float
    condition_estimate: float
    reliable: bool

    def activity(self) -> dict[str, float]:
        return dict(zip(self.matrices.column_ids, self.x.tolist()))

    def inventory(self) -> dict[str, float]:
        return dict(zip(self.matrices.aspect_labels, self.e.tolist()))


def matrices_from_arrays(a: np.ndarray, b: np.ndarray | None = None, *,
                         product_labels: Sequence[str] | None = None,
                         aspect_labels: Sequence[str] | None = None,
                         column_ids: Sequence[str] | None = None) -> LcaMatrices:
    """Wrap explicit arrays in an ``LcaMatrices`` with generated labels."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ModelValidationError(
            f"technology matrix must be square, got shape {a.shape}"
        )
    n = a.shape[0]
    if b is None:
        b = np.zeros((0, n))
    b = np.asarray(b, dtype=float)
    if b.ndim != 2 or b.shape[1] != n:
        raise ModelValidationError(
            f"intervention matrix must have {n} columns, got shape {b.shape}"
        )
    products = tuple(product_labels) if product_labels else tuple(
        f"product {i + 1}" for i in range(n)
    )
    aspects = tuple(aspect_labels) if aspect_labels else tuple(
        f"aspect {i + 1}" for i in range(b.shape[0])
    )
    columns = tuple(column_ids) if column_ids else tuple(
        f"p{i + 1}" for i in range(n)
    )
    if len(products) != n or len(aspects) != b.shape[0] or len(columns) != n:
        raise ModelValidationError("matrix label counts do not match matrix shapes")
    _check_primary_columns(a, columns)
    return LcaMatrices(
        a=a, b=b,
        product_pairs=(None,) * n,
        aspect_pairs=(None,) * b.shape[0],
        product_labels=products,
        aspect_labels=aspects,
        column_ids=columns,
        column_labels=columns,
    )


def _check_primary_columns(a: np.ndarray, column_ids: Sequence[str]) -> None:
    for j in range(a.shape[1]):
        if not np.any(a[:, j] > 0):
            raise ModelValidationError(
                f"technology-matrix column '{column_ids[j]}' has no positive "
                "entry; every process must net-produce a primary product"
            )


def _primary_pair(cap, process) -> tuple[str, str]:
    pairs = {
        (f.operand, f.buffer) for f in cap.injects if f.operand == process.primary_output
    }
    if len(pairs) != 1:
        raise ModelValidationError(
            f"process '{process.id}' injects its primary output "
            f"'{process.primary_output}' at {len(pairs)} buffers; the product "
            "row needs exactly one"
        )
    return next(iter(pairs))


def _active_pairs(capabilities: CapabilitySet) -> list[tuple[str, str]]:
    seen: list[tuple[str, str]] = []
    have: set[tuple[str, str]] = set()
    for cap in capabilities:
        for flow in (*cap.pulls, *cap.injects):
            pair = (flow.operand, flow.buffer)
            if pair not in have:
                have.add(pair)
                seen.append(pair)
    return seen


@dataclass(frozen=True)
class RowPlan:
    """Which (operand, buffer) pairs play product and aspect roles."""

    product_pairs: tuple[tuple[str, str], ...]
    aspect_pairs: tuple[tuple[str, str], ...]
    unclassified_pairs: tuple[tuple[str, str], ...]


def classical_row_plan(model: SystemModel, capabilities: CapabilitySet,
                       aspect_operands: Sequence[str] | None = None,
                       product_assignment: Mapping[str, str] | None = None,
                       ) -> RowPlan:
    """Assign product and aspect roles to the active (operand, buffer) pairs.

    Requires the classical correspondence of exactly one capability per
    process.  Product rows are each capability's primary-output landing
    pair, in capability order; ``product_assignment`` (process id to
    operand id) overrides the declared primary outputs.  Aspect rows are
    the non-product occurrences of the aspect operands (declared on the
    model unless given here), or of every flow at an independent buffer
    when none are declared.  Pairs left over are reported as unclassified.
    """
    per_process: dict[str, int] = {}
    for cap in capabilities:
        per_process[cap.process] = per_process.get(cap.process, 0) + 1
    extra = sorted(p for p, n in per_process.items() if n > 1)
    if extra:
        raise ModelValidationError(
            "classical matrices need exactly one capability per process, but "
            f"these processes have several: {', '.join(extra)}"
        )

    product_pairs: list[tuple[str, str]] = []
    for cap in capabilities:
        process = model.process(cap.process)
        if product_assignment and cap.process in product_assignment:
            assigned = product_assignment[cap.process]
            if assigned not in {f.operand for f in process.outputs}:
                raise ModelValidationError(
                    f"assigned product '{assigned}' is not an output of "
                    f"process '{cap.process}'"
                )
            process = replace(process, primary_output=assigned)
        pair = _primary_pair(cap, process)
        if pair in product_pairs:
            other = capabilities[product_pairs.index(pair)]
            raise ModelValidationError(
                f"processes '{other.process}' and '{cap.process}' both produce "
                f"operand '{pair[0]}' into buffer '{pair[1]}'; product rows "
                "must be distinct"
            )
        product_pairs.append(pair)
    product_row = {pair: i for i, pair in enumerate(product_pairs)}

    active = _active_pairs(capabilities)
    active_set = set(active)

    if aspect_operands is None:
        aspect_operands = model.aspect_operands
    aspect_pairs: list[tuple[str, str]] = []
    if aspect_operands:
        buffer_order = {b.id: i for i, b in enumerate(model.buffers)}
        for operand_id in aspect_operands:
            found = sorted(
                (pair for pair in active_set
                 if pair[0] == operand_id and pair not in product_row),
                key=lambda pair: buffer_order[pair[1]],
            )
            if not found:
                raise ModelValidationError(
                    f"aspect operand '{operand_id}' does not occur in any "
                    "non-product capability flow"
                )
            aspect_pairs.extend(found)
    else:
        independent = {b.id for b in model.independent_buffers}
        aspect_pairs = [
            pair for pair in active
            if pair[1] in independent and pair not in product_row
        ]
        if aspect_pairs:
            logger.warning(
                "no aspects declared; tracking %d independent-buffer flows: %s",
                len(aspect_pairs),
                ", ".join(f"{o}@{b}" for o, b in aspect_pairs),
            )
    aspect_row = set(aspect_pairs)
    unclassified = tuple(
        pair for pair in active
        if pair not in product_row and pair not in aspect_row
    )
    return RowPlan(
        product_pairs=tuple(product_pairs),
        aspect_pairs=tuple(aspect_pairs),
        unclassified_pairs=unclassified,
    )


def pair_label(model: SystemModel, pair: tuple[str, str]) -> str:
    return f"{model.operand(pair[0]).name} at {model.resource(pair[1]).name}"


def assemble_lca(model: SystemModel,
                 capabilities: CapabilitySet | None = None,
                 aspect_operands: Sequence[str] | None = None,
                 product_assignment: Mapping[str, str] | None = None,
                 ) -> LcaMatrices:
    """Build A and B directly from a model's capability flows.

    Requires the classical correspondence of exactly one capability per
    process; columns follow capability order.  Row roles follow
    ``classical_row_plan``.
    """
    if capabilities is None:
        capabilities = enumerate_capabilities(model)

    plan = classical_row_plan(model, capabilities, aspect_operands,
                              product_assignment)
    product_row = {pair: i for i, pair in enumerate(plan.product_pairs)}
    aspect_row = {pair: i for i, pair in enumerate(plan.aspect_pairs)}

    n = len(capabilities)
    a = np.zeros((n, n))
    b = np.zeros((len(plan.aspect_pairs), n))
    for cap in capabilities:
        for sign, flows in ((-1.0, cap.pulls), (1.0, cap.injects)):
            for flow in flows:
                pair = (flow.operand, flow.buffer)
                if pair in product_row:
                    a[product_row[pair], cap.index] += sign * flow.weight
                elif pair in aspect_row:
                    b[aspect_row[pair], cap.index] += sign * flow.weight
    if plan.unclassified_pairs:
        logger.warning(
            "classical matrices drop flows at %d untracked pair(s): %s",
            len(plan.unclassified_pairs),
            ", ".join(f"{o}@{b_}" for o, b_ in plan.unclassified_pairs),
        )

    column_ids = tuple(c.process for c in capabilities)
    _check_primary_columns(a, column_ids)
    return LcaMatrices(
        a=a, b=b,
        product_pairs=plan.product_pairs,
        aspect_pairs=plan.aspect_pairs,
        product_labels=tuple(pair_label(model, p) for p in plan.product_pairs),
        aspect_labels=tuple(pair_label(model, p) for p in plan.aspect_pairs),
        column_ids=column_ids,
        column_labels=capabilities.labels,
        unrepresented_pairs=plan.unclassified_pairs,
    )


def demand_vector(matrices: LcaMatrices, demand: Mapping[str, Any]) -> np.ndarray:
    """Resolve a demand mapping into a Y vector over the product rows.

    Keys may be process ids, product operand ids (when unambiguous), or
    explicit ``operand@buffer`` pairs.
    """
    y = np.zeros(matrices.n)
    column_row = {pid: i for i, pid in enumerate(matrices.column_ids)}
    by_pair = {
        f"{pair[0]}@{pair[1]}": i
        for i, pair in enumerate(matrices.product_pairs) if pair is not None
    }
    by_operand: dict[str, list[int]] = {}
    for i, pair in enumerate(matrices.product_pairs):
        if pair is not None:
            by_operand.setdefault(pair[0], []).append(i)
    by_label = {label: i for i, label in enumerate(matrices.product_labels)}

    for key, value in demand.items():
        if key in column_row:
            row = column_row[key]
        elif key in by_pair:
            row = by_pair[key]
        elif key in by_label:
            row = by_label[key]
        elif key in by_operand:
            rows = by_operand[key]
            if len(rows) > 1:
                options = ", ".join(
                    f"{matrices.product_pairs[i][0]}@{matrices.product_pairs[i][1]}"
                    for i in rows
                )
                raise ModelValidationError(
                    f"demand key '{key}' matches several products ({options}); "
                    "use the operand@buffer form"
                )
            row = rows[0]
        else:
            raise ModelValidationError(
                f"demand key '{key}' matches no process or product"
            )
        y[row] += float(value)
    return y


def _solve_core(a: np.ndarray, y: np.ndarray,
                condition_threshold: float) -> tuple[np.ndarray, float, float, bool]:
    """LU solve with singularity, conditioning, and residual handling."""
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ModelValidationError(
            f"technology matrix must be square, got shape {a.shape}"
        )
    if y.shape != (a.shape[0],):
        raise ModelValidationError(
            f"demand vector must have shape ({a.shape[0]},), got {y.shape}"
        )
    if a.shape[0] == 0:
        return np.zeros(0), 0.0, 1.0, True

    with np.errstate(all="ignore"), warnings.catch_warnings():
        # singularity is detected below and raised as a typed error
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
    diag = np.abs(np.diag(lu))
    if np.any(diag == 0.0):
        pivot = int(np.argmin(diag))
        raise SingularTechnologyMatrixError(
            "technology matrix is singular: no process mix can satisfy an "
            "arbitrary demand",
            pivot_index=pivot, condition_estimate=float("inf"),
        )

    anorm = np.linalg.norm(a, 1)
    gecon = scipy.linalg.get_lapack_funcs("gecon", (a,))
    rcond, info = gecon(lu, anorm, norm="1")
    if info != 0:
        raise NumericalError(f"condition estimation failed (info={info})")
    condition = float(np.inf) if rcond == 0 else float(1.0 / rcond)

    reliable = True
    if condition > condition_threshold:
        reliable = False
        logger.warning(
            "technology matrix condition estimate %.3e exceeds %.1e; "
            "results may lose precision", condition, condition_threshold,
        )

    x = scipy.linalg.lu_solve((lu, piv), y)
    tol = RESIDUAL_RTOL * max(float(np.max(np.abs(y))), 1.0)
    residual = float(np.max(np.abs(a @ x - y)))
    if residual > tol:
        x = x - scipy.linalg.lu_solve((lu, piv), a @ x - y)
        residual = float(np.max(np.abs(a @ x - y)))
        if residual > tol:
            reliable = False
            logger.warning(
                "solve residual %.3e exceeds tolerance %.3e after refinement",
                residual, tol,
            )
    return x, residual, condition, reliable


def solve_scaling(a: np.ndarray, y: np.ndarray, *,
                  condition_threshold: float = CONDITION_WARNING_THRESHOLD,
                  ) -> np.ndarray:
    """Process activity X with A X = Y, within the residual contract."""
    x, _, _, _ = _solve_core(
        np.asarray(a, dtype=float), np.asarray(y, dtype=float),
        condition_threshold,
    )
    return x


def compute_aspects(b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Inventory totals E = B X, signs preserved."""
    b = np.asarray(b, dtype=float)
    x = np.asarray(x, dtype=float)
    if b.ndim != 2 or x.shape != (b.shape[1],):
        raise ModelValidationError(
            f"intervention matrix of shape {b.shape} cannot multiply an "
            f"activity vector of shape {x.shape}"
        )
    return b @ x if b.shape[0] else np.zeros(0)


def solve(matrices: LcaMatrices, y: np.ndarray | Mapping[str, Any], *,
          condition_threshold: float = CONDITION_WARNING_THRESHOLD) -> LcaSolution:
    """Solve A X = Y and total the inventory E = B X.

    Exact singularity raises; an ill-conditioned A or an unmet residual
    bound (after one refinement step) only flags the solution unreliable.
    """
    if isinstance(y, Mapping):
        y = demand_vector(matrices, y)
    y = np.asarray(y, dtype=float)
    x, residual, condition, reliable = _solve_core(
        matrices.a, y, condition_threshold
    )
    e = compute_aspects(matrices.b, x)
    return LcaSolution(
        matrices=matrices, y=y, x=x, e=e,
        residual=residual, condition_estimate=condition, reliable=reliable,
    )


#: Composed name for the full problem -> result pipeline.
solve_lca = solve
